"""Acceptance gate: one test per criterion, each at its stated tolerance.

Run with ``pytest tests/test_acceptance.py -v -s`` to get one line per
criterion. Brute-force oracles here are deliberately independent of the
implementations they check: exhaustive pixel counting for overlap metrics,
full pairwise distance matrices for surface distance, and a hand-rolled
greedy reference for candidate selection.
"""
from __future__ import annotations

import itertools
import json
import math
import socket
import threading
import time

import numpy as np
import pytest
from fastapi.testclient import TestClient

from scope.agent import MODULE_NAMES, SessionState, step_transition
from scope.backends.gateway import create_gateway_app, dispatch
from scope.backends.http import RemoteBackendClient
from scope.backends.mocks import MockChatBackend, mock_backend_set
from scope.backends.protocol import PROTOCOL_VERSION, validate_payload
from scope.backends.scene import (
    SceneSpec,
    contact_schedule,
    generate_synthetic_scene,
    rigid_translation_spec,
)
from scope.candidates import ScoredCandidate, rank_and_dedup
from scope.config import SessionConfig, config_from_dict
from scope.cursor import ClickDetectorState, CursorPoint, calibrate_band, update_click_state
from scope.errors import BackendTimeoutError
from scope.geometry import LandmarkSource, TipLandmark, principal_axis, tip_landmark, track_tip
from scope.mask import Mask, iou, rle_decode
from scope.metrics import FramePair, ReportRow, asd, dice, eval_report, sequence_means
from scope.backends.protocol import mask_from_obj
from scope.session.events import EventKind
from scope.session.frames import SyntheticFrameSource
from scope.session.runner import run_scripted_session

from conftest import bar_mask, random_nonempty_mask, rect_mask
from test_agent import recording_registry
from test_backends import golden_request
from test_candidates import reference_selector, tile_masks, cand
from test_mask import oracle_boundary


def _ok(line: str) -> None:
    print(f"[PASS] {line}")


# ---------------------------------------------------------------------------
# Criterion: metric oracle equivalence (dice 1e-9, asd 1e-6 px, < 30 s)
# ---------------------------------------------------------------------------


def _oracle_dice_counting(a: Mask, b: Mask) -> float:
    ga, gb = rle_decode(a), rle_decode(b)
    inter = size_a = size_b = 0
    for va, vb in zip(ga.ravel(), gb.ravel()):
        size_a += bool(va)
        size_b += bool(vb)
        inter += bool(va) and bool(vb)
    return 1.0 if size_a + size_b == 0 else 2 * inter / (size_a + size_b)


def _oracle_asd_exhaustive(a: Mask, b: Mask) -> float:
    pa = np.array(sorted(oracle_boundary(rle_decode(a))), dtype=np.float64)
    pb = np.array(sorted(oracle_boundary(rle_decode(b))), dtype=np.float64)
    d2 = ((pa[:, None, :] - pb[None, :, :]) ** 2).sum(-1)  # full pairwise matrix
    return float((np.sqrt(d2.min(axis=1)).mean() + np.sqrt(d2.min(axis=0)).mean()) / 2.0)


def test_metric_oracle_equivalence():
    rng = np.random.default_rng(202)
    started = time.perf_counter()
    for _ in range(500):
        w = int(rng.integers(8, 65))
        h = int(rng.integers(8, 65))
        a = random_nonempty_mask(rng, w, h)
        b = random_nonempty_mask(rng, w, h)
        pair = FramePair(a, b)
        assert dice(pair) == pytest.approx(_oracle_dice_counting(a, b), abs=1e-9)
        assert asd(pair) == pytest.approx(_oracle_asd_exhaustive(a, b), abs=1e-6)
    elapsed = time.perf_counter() - started
    assert elapsed < 30.0, f"metric oracle sweep took {elapsed:.1f} s"
    _ok(f"dice/asd match brute-force oracles on 500 random pairs in {elapsed:.1f} s")


def test_dice_iou_identity():
    rng = np.random.default_rng(303)
    for _ in range(1000):
        a = random_nonempty_mask(rng, 32, 32)
        b = random_nonempty_mask(rng, 32, 32)
        j = iou(a, b)
        assert dice(FramePair(a, b)) == pytest.approx(2 * j / (1 + j), abs=1e-9)
    _ok("dice == 2*iou/(1+iou) on 1000 random non-empty pairs (1e-9)")


# ---------------------------------------------------------------------------
# Criterion: candidate ranking and deduplication
# ---------------------------------------------------------------------------


def _fixture_pool() -> list[Mask]:
    tiles = tile_masks(6)
    overlapping = [
        rect_mask(16, 16, 1, 0, 2, 1),  # heavy overlap with tile 0
        rect_mask(16, 16, 0, 0, 7, 15),  # half frame
        rect_mask(16, 16, 0, 0, 15, 15),  # whole frame (background-penalty bait)
        rect_mask(16, 16, 3, 3, 6, 6),
    ]
    return tiles + overlapping


def test_rank_and_dedup_against_reference():
    pool = _fixture_pool()
    score_patterns = [
        [round(0.95 - 0.07 * i, 3) for i in range(10)],
        [round(0.30 + 0.07 * i, 3) for i in range(10)],
        [0.5] * 10,
        [0.9, 0.3] * 5,
    ]
    checked = 0
    for n in range(1, 11):
        for scores in score_patterns:
            candidates = [cand(pool[i], scores[i]) for i in range(n)]
            got = rank_and_dedup(candidates, overlap_threshold=0.10, frame_area=256)
            want = reference_selector(candidates, 0.10, 256)
            assert list(got.all_candidates) == want
            for x, y in itertools.combinations(got.all_candidates, 2):
                assert iou(x.mask, y.mask) <= 0.10
            assert len(got.current_page()) <= 6
            checked += 1
    rng = np.random.default_rng(404)
    for _ in range(100):
        n = int(rng.integers(1, 11))
        candidates = [
            cand(random_nonempty_mask(rng, 16, 16), round(float(rng.uniform(0.05, 1.0)), 3))
            for _ in range(n)
        ]
        got = rank_and_dedup(candidates, overlap_threshold=0.10, frame_area=256)
        assert list(got.all_candidates) == reference_selector(candidates, 0.10, 256)
        for x, y in itertools.combinations(got.all_candidates, 2):
            assert iou(x.mask, y.mask) <= 0.10
        checked += 1
    _ok(f"greedy selection matches brute-force reference on {checked} fixture inputs; pages <= 6")


# ---------------------------------------------------------------------------
# Criterion: geometry (PCA 2 deg; seam 1 px; tracking 1.5 px; no end flip)
# ---------------------------------------------------------------------------


def test_geometry_criteria():
    for angle in (0.0, 45.0, 90.0):
        axis = principal_axis(bar_mask(80, 80, 40, 40, 40, 6, angle_deg=angle))
        ref = (math.cos(math.radians(angle)), math.sin(math.radians(angle)))
        dot = abs(axis.direction[0] * ref[0] + axis.direction[1] * ref[1])
        assert math.degrees(math.acos(min(1.0, dot))) <= 2.0

    shaft = rect_mask(30, 16, 0, 4, 19, 7)
    tip = rect_mask(30, 16, 18, 3, 23, 8)
    landmark = tip_landmark(shaft, tip)
    assert math.hypot(landmark.point[0] - 18.5, landmark.point[1] - 5.5) <= 1.0

    scene = generate_synthetic_scene(seed=7)  # translates and rotates, reverses mid-way
    previous = TipLandmark(
        point=scene.tip_points[0][0], source=LandmarkSource.AXIS_EXTREME, frame_index=0
    )
    worst = 0.0
    for frame in range(1, scene.frames):
        previous = track_tip(scene.instrument_masks[frame][0], previous, frame_index=frame)
        tx, ty = scene.tip_points[frame][0]
        err = math.hypot(previous.point[0] - tx, previous.point[1] - ty)
        worst = max(worst, err)
        assert err <= 1.5, f"frame {frame}: tip error {err:.2f} px"
    _ok(
        "PCA within 2 deg at 0/45/90; seam landmark within 1 px; "
        f"100-frame tracking error <= 1.5 px (worst {worst:.2f}), no end flip on reversal"
    )


# ---------------------------------------------------------------------------
# Criterion: virtual cursor fires exactly once per scheduled contact
# ---------------------------------------------------------------------------


def test_virtual_cursor_click_precision_recall():
    schedule = contact_schedule(20, hold=4, gap=4, lead=10)
    spec = SceneSpec(frames=schedule[-1][1] + 6, contact_frames=schedule)
    scene = generate_synthetic_scene(seed=21, spec=spec)
    center, halfwidth = calibrate_band(scene.depth_maps[0], exclude=scene.instrument_masks[0][0])
    state = ClickDetectorState(band_center=center, band_halfwidth=halfwidth)
    fired_frames = []
    for frame in range(scene.frames):
        cx, cy = scene.cursor_points[frame][0]
        cursor = CursorPoint(int(round(cx)), int(round(cy)))
        state, fired = update_click_state(state, scene.depth_maps[frame], cursor, radius=7)
        if fired:
            fired_frames.append(frame)
    per_contact = {
        window: [f for f in fired_frames if window[0] <= f <= window[1]] for window in schedule
    }
    assert all(len(hits) == 1 for hits in per_contact.values()), per_contact
    assert len(fired_frames) == len(schedule)  # no click outside any window
    _ok("exactly one click per contact over 20 scheduled contacts (precision = recall = 1.0)")


# ---------------------------------------------------------------------------
# Criterion: agent state machine safety, liveness, and replay
# ---------------------------------------------------------------------------

HAPPY_SCRIPT = [
    {"frame": 1, "utterance": "hello there"},
    {"frame": 2, "utterance": "segment the surgical instruments"},
    {"frame": 4, "utterance": "the first one, label it forceps"},
    {"frame": 6, "utterance": "segment the tip of forceps"},
    {"frame": 8, "utterance": "the first one, label it forceps tip"},
]


def test_agent_state_machine_criteria():
    from scope.agent import TRANSITIONS, build_system_prompt, default_workflow_config

    config = default_workflow_config()
    prompt = build_system_prompt(config)
    allowed = {m.name: m.allowed_tools for m in config.modules}
    utterances = {
        "segment": "segment the surgical instruments",
        "select": "the second one",
        "next_page": "none of these",
        "track": "track it as probe",
        "stop": "stop",
        None: "what can you do",
    }
    llm = MockChatBackend()
    for module in MODULE_NAMES:
        for tool, utterance in utterances.items():
            calls: list = []
            registry = recording_registry(calls)
            outcome = step_transition(
                SessionState(current_module=module), utterance, llm, registry, config, prompt
            )
            executed = [name for name, _ in calls]
            if tool is None or tool not in allowed[module]:
                assert executed == []
                assert outcome.module_after == module
            else:
                assert executed == [tool]
                assert outcome.module_after == TRANSITIONS.get((module, tool), module)

    scene = generate_synthetic_scene(seed=7)
    frames = SyntheticFrameSource(scene)
    log = run_scripted_session(frames, HAPPY_SCRIPT, SessionConfig(), mock_backend_set(scene), seed=7)
    modules = [
        e.payload["module_after"]
        for e in log.events_of(EventKind.AGENT_TEXT)
        if "module_after" in e.payload
    ]
    assert "Tracking" in modules and modules.index("Tracking") + 1 <= 6

    again = run_scripted_session(frames, HAPPY_SCRIPT, SessionConfig(), mock_backend_set(scene), seed=7)
    assert log.hash() == again.hash()
    assert log.final_state_hash == again.final_state_hash
    _ok("no tool ever runs outside allowed_tools; Tracking within 6 steps; replay hash identical")


# ---------------------------------------------------------------------------
# Criterion: end-to-end on the synthetic scene (< 60 s)
# ---------------------------------------------------------------------------


def _tracked_pairs(log, scene, label):
    pairs = []
    for event in log.events_of(EventKind.FRAME):
        objects = {o["label"]: o for o in event.payload["objects"]}
        if label in objects:
            predicted = mask_from_obj(objects[label]["mask"])
            truth = (
                scene.anatomy_mask if label == "anatomy" else scene.instrument_masks[event.frame][0]
            )
            pairs.append(FramePair(predicted, truth))
    return pairs


def test_end_to_end_synthetic_scene():
    started = time.perf_counter()
    scene = generate_synthetic_scene(seed=7)
    frames = SyntheticFrameSource(scene)
    log = run_scripted_session(frames, HAPPY_SCRIPT, SessionConfig(), mock_backend_set(scene), seed=7)

    instrument = sequence_means(_tracked_pairs(log, scene, "forceps"))
    anatomy = sequence_means(_tracked_pairs(log, scene, "anatomy"))
    assert instrument.mdsc >= 0.99, f"instrument mDSC {instrument.mdsc:.4f}"
    assert anatomy.mdsc >= 0.99, f"anatomy mDSC {anatomy.mdsc:.4f}"

    drift_scene = generate_synthetic_scene(seed=5, spec=rigid_translation_spec(frames=91))
    drift_frames = SyntheticFrameSource(drift_scene)
    drift_config = config_from_dict({"propagation_mode": "drift"})
    drift_script = [
        {"frame": 1, "utterance": "segment the surgical instruments"},
        {"frame": 2, "utterance": "the first one, label it bar"},
    ]
    drift_log = run_scripted_session(
        drift_frames, drift_script, drift_config, mock_backend_set(drift_scene), seed=5
    )
    dices = []
    for event in drift_log.events_of(EventKind.FRAME):
        objects = {o["label"]: o for o in event.payload["objects"]}
        if "bar" in objects and event.frame > 2:
            predicted = mask_from_obj(objects["bar"]["mask"])
            dices.append(dice(FramePair(predicted, drift_scene.instrument_masks[event.frame][0])))
    assert all(a >= b for a, b in zip(dices, dices[1:]))
    prefix_means = np.cumsum(dices) / np.arange(1, len(dices) + 1)
    assert all(a >= b - 1e-12 for a, b in zip(prefix_means, prefix_means[1:]))

    elapsed = time.perf_counter() - started
    assert elapsed < 60.0, f"end-to-end took {elapsed:.1f} s"
    _ok(
        f"oracle e2e: instrument mDSC {instrument.mdsc:.4f}, anatomy mDSC {anatomy.mdsc:.4f} "
        f">= 0.99; drift dice monotone non-increasing; {elapsed:.1f} s"
    )


# ---------------------------------------------------------------------------
# Criterion: report format fidelity
# ---------------------------------------------------------------------------

_REFERENCE_ROWS = [
    ReportRow(label="Eye", method="LISA++", dsc=0.46, asd=26.53, iters=1.0, secs=4.44),
    ReportRow(label="Eye", method="GSAM", dsc=0.82, asd=2.83, iters=1.3, secs=1.16),
    ReportRow(label="Skull Base", method="LISA++", dsc=0.74, asd=27.52, iters=1.0, secs=4.44),
    ReportRow(label="Skull Base", method="GSAM", dsc=0.93, asd=5.52, iters=1.0, secs=1.28),
    ReportRow(label="Eye", method="CUTIE", mdsc=0.840, masd=2.736),
    ReportRow(label="Eye", method="SAM2", mdsc=0.818, masd=3.861),
    ReportRow(label="Skull Base", method="CUTIE", mdsc=0.973, masd=2.54),
    ReportRow(label="Skull Base", method="SAM2", mdsc=0.941, masd=5.558),
]


def test_eval_report_format_fidelity():
    report = eval_report(_REFERENCE_ROWS)
    text = report.text
    assert text == eval_report(_REFERENCE_ROWS).text  # byte-stable
    assert report.to_json() == eval_report(_REFERENCE_ROWS).to_json()

    rows = {tuple(line.split()) for line in text.splitlines() if line}
    assert ("Eye", "GSAM", "0.82", "2.83", "1.3", "1.16") in rows
    assert ("Skull", "Base", "CUTIE", "0.973", "2.54") in rows
    for literal in ("0.46", "26.53", "4.44", "0.93", "5.52", "1.28",
                    "0.840", "2.736", "0.818", "3.861", "0.941", "5.558"):
        assert literal in text, literal
    _ok("report reproduces reference-table literals and renders byte-stable")


# ---------------------------------------------------------------------------
# Criterion: backend protocol conformance and timeout budget
# ---------------------------------------------------------------------------


def test_backend_protocol_conformance_and_timeout():
    scene = generate_synthetic_scene(seed=7)
    backends = mock_backend_set(scene)
    kinds = ("stt", "llm", "segment_text", "segment_point", "propagate", "depth")
    for kind in kinds:
        request = golden_request(kind, scene)
        validate_payload(kind, request, "request")
        validate_payload(kind, dispatch(kind, request, backends), "response")

    client = TestClient(create_gateway_app(backends))
    for kind in kinds:
        envelope = {"kind": kind, "version": PROTOCOL_VERSION, "payload": golden_request(kind, scene)}
        response = client.post(f"/v1/{kind}", json=envelope)
        assert response.status_code == 200
        validate_payload(kind, response.json()["payload"], "response")

    sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    sock.bind(("127.0.0.1", 0))
    sock.listen(4)
    port = sock.getsockname()[1]
    stop = threading.Event()
    held = []

    def hold_connections():
        sock.settimeout(0.1)
        while not stop.is_set():
            try:
                held.append(sock.accept()[0])
            except socket.timeout:
                continue

    thread = threading.Thread(target=hold_connections, daemon=True)
    thread.start()
    try:
        timeout_ms = 300
        remote = RemoteBackendClient(f"http://127.0.0.1:{port}", timeout_ms=timeout_ms)
        started = time.perf_counter()
        with pytest.raises(BackendTimeoutError):
            remote.call("depth", {"frame_index": 0})
        elapsed_ms = (time.perf_counter() - started) * 1000
        remote.close()
        assert elapsed_ms <= timeout_ms + 100, f"timeout surfaced after {elapsed_ms:.0f} ms"
    finally:
        stop.set()
        thread.join(timeout=2)
        for conn in held:
            conn.close()
        sock.close()
    _ok("six mock kinds pass conformance in-process and over the gateway; "
        "stalled-stub timeout surfaced within budget")
