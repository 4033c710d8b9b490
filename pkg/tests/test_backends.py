from __future__ import annotations

import base64
import json
import socket
import threading
import time

import numpy as np
import pytest
import uvicorn
from fastapi.testclient import TestClient

from scope.backends.gateway import create_gateway_app, dispatch
from scope.backends.mocks import (
    MockChatBackend,
    MockPointSegmenter,
    MockPropagator,
    MockTextSegmenter,
    MockTranscriber,
    mock_backend_set,
)
from scope.backends.protocol import (
    PROTOCOL_VERSION,
    BackendDescriptor,
    BackendKind,
    depth_from_b64,
    depth_to_b64,
    mask_from_obj,
    mask_to_obj,
    validate_payload,
)
from scope.backends.http import RemoteBackendClient, RemoteBackendSet
from scope.backends.scene import SceneSpec, generate_synthetic_scene, rigid_translation_spec
from scope.cursor import PointPrompt
from scope.errors import (
    BackendError,
    BackendTimeoutError,
    FrameRangeError,
    ProtocolError,
)
from scope.mask import Mask, iou, rle_decode
from scope.metrics import FramePair, dice


@pytest.fixture(scope="module")
def scene():
    return generate_synthetic_scene(seed=7)


@pytest.fixture(scope="module")
def backends(scene):
    return mock_backend_set(scene)


# golden request payloads, one per kind
GOLDEN_REQUESTS = {
    "stt": {"audio_b64": base64.b64encode(b"segment the surgical instruments").decode()},
    "llm": {"op": "respond", "query": "segment the surgical instruments", "system_prompt": "", "history": []},
    "segment_text": {"prompt": "surgical instruments", "frame_index": 0},
    "segment_point": {"point": {"x": 80, "y": 100}, "polarity": "positive", "frame_index": 0},
    "propagate": None,  # built per scene below
    "depth": {"frame_index": 0},
}


def golden_request(kind, scene):
    if kind == "propagate":
        return {
            "mask": mask_to_obj(scene.instrument_masks[0][0]),
            "from_frame": 0,
            "to_frame": 3,
            "mode": "oracle",
        }
    return GOLDEN_REQUESTS[kind]


def test_mock_text_segmenter_instrument_family(scene):
    seg = MockTextSegmenter(scene)
    candidates = seg.segment_text("surgical instruments", 0)
    assert len(candidates) == 4  # truth + dilated + half + background blob
    best = max(iou(c.mask, scene.instrument_masks[0][0]) for c in candidates)
    assert best == 1.0
    assert sorted((c.score for c in candidates), reverse=True) == [0.9, 0.7, 0.6, 0.5]
    assert all(c.source_prompt == "surgical instruments" for c in candidates)


def test_mock_text_segmenter_tip_family(scene):
    seg = MockTextSegmenter(scene)
    candidates = seg.segment_text("tip of suction", 0)
    assert max(iou(c.mask, scene.tip_masks[0][0]) for c in candidates) == 1.0


def test_mock_text_segmenter_unknown_prompt(scene):
    assert MockTextSegmenter(scene).segment_text("xyzzy", 0) == []


def test_mock_text_segmenter_frame_range(scene):
    with pytest.raises(FrameRangeError):
        MockTextSegmenter(scene).segment_text("instruments", 10_000)


def test_mock_point_segmenter_regions(scene):
    seg = MockPointSegmenter(scene)
    anatomy = seg.segment_point(PointPrompt(x=80, y=100), 0)
    assert anatomy == scene.anatomy_mask
    grid = rle_decode(scene.instrument_masks[0][0])
    ys, xs = np.nonzero(grid)
    inside = seg.segment_point(PointPrompt(x=int(xs[len(xs) // 2]), y=int(ys[len(ys) // 2])), 0)
    assert inside == scene.instrument_masks[0][0]
    miss = seg.segment_point(PointPrompt(x=2, y=2), 0)
    assert 0 < miss.area < 100  # small disk


def test_mock_propagate_oracle_is_exact(scene):
    prop = MockPropagator(scene)
    masks = prop.propagate(scene.instrument_masks[0][0], 0, 20, mode="oracle")
    assert len(masks) == 20
    for offset, mask in enumerate(masks, start=1):
        assert dice(FramePair(mask, scene.instrument_masks[offset][0])) == 1.0


def test_mock_propagate_single_step(scene):
    masks = MockPropagator(scene).propagate(scene.instrument_masks[5][0], 5, 6)
    assert len(masks) == 1


def test_mock_propagate_drift_monotone():
    truth = generate_synthetic_scene(seed=5, spec=rigid_translation_spec(frames=91))
    prop = MockPropagator(truth)
    masks = prop.propagate(truth.instrument_masks[0][0], 0, 90, mode="drift")
    dices = [
        dice(FramePair(m, truth.instrument_masks[f][0]))
        for f, m in enumerate(masks, start=1)
    ]
    assert all(a >= b for a, b in zip(dices, dices[1:]))
    assert dices[0] == 1.0
    assert dices[-1] < dices[0]


def test_mock_propagate_range_errors(scene):
    prop = MockPropagator(scene)
    with pytest.raises(FrameRangeError):
        prop.propagate(scene.anatomy_mask, 5, 5)
    with pytest.raises(FrameRangeError):
        prop.propagate(scene.anatomy_mask, 0, 10_000)


def test_mock_propagate_anatomy_is_static(scene):
    masks = MockPropagator(scene).propagate(scene.anatomy_mask, 0, 5)
    assert all(m == scene.anatomy_mask for m in masks)


def test_mock_llm_segment_intent():
    raw = MockChatBackend().respond("segment the surgical instruments")
    obj = json.loads(raw)
    assert obj["action"] == {"tool": "segment", "args": {"query": "surgical instruments"}}
    assert isinstance(obj["text_response"], str)


def test_mock_llm_ordinal_selection():
    obj = json.loads(MockChatBackend().respond("the third one"))
    assert obj["action"] == {"tool": "select", "args": {"index": 3}}


def test_mock_llm_selection_with_label():
    obj = json.loads(MockChatBackend().respond("the third one, label it suction"))
    assert obj["action"] == {"tool": "select", "args": {"index": 3, "label": "suction"}}


def test_mock_llm_rejection():
    obj = json.loads(MockChatBackend().respond("none of these"))
    assert obj["action"]["tool"] == "next_page"


def test_mock_llm_track_and_stop():
    assert json.loads(MockChatBackend().respond("track it as probe"))["action"] == {
        "tool": "track",
        "args": {"label": "probe"},
    }
    assert json.loads(MockChatBackend().respond("stop"))["action"]["tool"] == "stop"


def test_mock_llm_smalltalk_is_text_only():
    obj = json.loads(MockChatBackend().respond("how are you"))
    assert "action" not in obj
    assert obj["text_response"]


def test_mock_llm_expand_table():
    llm = MockChatBackend()
    assert llm.expand("surgical instruments") == [
        "surgical tools",
        "gray instruments",
        "metal instruments",
    ]
    assert llm.expand("forceps") == ["grasper", "tweezers"]
    assert llm.expand("tip of forceps") == ["instrument tip", "tool tip"]
    assert llm.expand("xyzzy") == []


def test_mock_stt_roundtrip():
    assert MockTranscriber().transcribe(b" segment the tip \n") == "segment the tip"


def test_backend_descriptor_validation():
    BackendDescriptor(kind=BackendKind.LLM, endpoint="mock", timeout_ms=100)
    with pytest.raises(ValueError):
        BackendDescriptor(kind=BackendKind.LLM, endpoint="mock", timeout_ms=0)


def test_mask_obj_roundtrip(scene):
    m = scene.instrument_masks[0][0]
    assert mask_from_obj(mask_to_obj(m)) == m


def test_depth_b64_roundtrip(scene):
    depth = scene.depth_maps[0]
    encoded = depth_to_b64(depth)
    decoded = depth_from_b64(encoded, depth.width, depth.height)
    np.testing.assert_array_equal(decoded.values, depth.values)
    with pytest.raises(ProtocolError):
        depth_from_b64(encoded, depth.width, depth.height + 1)


def test_validate_payload_rejects_unknown_kind_and_extra_keys():
    with pytest.raises(ProtocolError):
        validate_payload("telepathy", {}, "request")
    with pytest.raises(ProtocolError):
        validate_payload("depth", {"frame_index": 0, "extra": 1}, "request")


@pytest.mark.parametrize("kind", ["stt", "llm", "segment_text", "segment_point", "propagate", "depth"])
def test_conformance_in_process(kind, scene, backends):
    request = golden_request(kind, scene)
    validate_payload(kind, request, "request")
    response = dispatch(kind, request, backends)
    validate_payload(kind, response, "response")


@pytest.fixture(scope="module")
def gateway_client(backends):
    return TestClient(create_gateway_app(backends))


@pytest.mark.parametrize("kind", ["stt", "llm", "segment_text", "segment_point", "propagate", "depth"])
def test_conformance_over_gateway(kind, scene, gateway_client):
    envelope = {"kind": kind, "version": PROTOCOL_VERSION, "payload": golden_request(kind, scene)}
    response = gateway_client.post(f"/v1/{kind}", json=envelope)
    assert response.status_code == 200
    body = response.json()
    assert body["kind"] == kind
    assert body["version"] == PROTOCOL_VERSION
    validate_payload(kind, body["payload"], "response")


def test_gateway_healthz(gateway_client):
    assert gateway_client.get("/v1/healthz").json()["status"] == "ok"


def test_gateway_error_body_shape(gateway_client, scene):
    # kind mismatch between path and envelope
    envelope = {"kind": "depth", "version": PROTOCOL_VERSION, "payload": {"frame_index": 0}}
    response = gateway_client.post("/v1/llm", json=envelope)
    assert response.status_code == 400
    assert set(response.json()) == {"code", "message", "retryable"}

    response = gateway_client.post(
        "/v1/depth",
        json={"kind": "depth", "version": PROTOCOL_VERSION, "payload": {"frame_index": 10_000}},
    )
    assert response.status_code == 400
    assert response.json()["code"] == "frame_range"

    response = gateway_client.post(
        "/v1/nonsense", json={"kind": "nonsense", "version": PROTOCOL_VERSION, "payload": {}}
    )
    assert response.status_code == 404


@pytest.fixture(scope="module")
def live_gateway(backends):
    """Real uvicorn server on an ephemeral port for network-adapter tests."""
    app = create_gateway_app(backends)
    config = uvicorn.Config(app, host="127.0.0.1", port=0, log_level="error")
    server = uvicorn.Server(config)
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    deadline = time.time() + 10
    while not server.started:
        if time.time() > deadline:
            raise RuntimeError("gateway server did not start")
        time.sleep(0.01)
    port = server.servers[0].sockets[0].getsockname()[1]
    yield f"http://127.0.0.1:{port}"
    server.should_exit = True
    thread.join(timeout=5)


def test_remote_adapters_match_mocks(live_gateway, scene, backends):
    remote = RemoteBackendSet(live_gateway, timeout_ms=5000)
    try:
        assert remote.client.healthy()
        assert remote.stt.transcribe(b"hello there") == "hello there"
        raw = remote.llm.respond("segment the surgical instruments")
        assert json.loads(raw)["action"]["tool"] == "segment"
        assert remote.llm.expand("forceps") == ["grasper", "tweezers"]
        local = backends.text_segmenters[0].segment_text("surgical instruments", 0)
        over_wire = remote.text_segmenters[0].segment_text("surgical instruments", 0)
        assert [c.mask for c in over_wire] == [c.mask for c in local]
        assert [c.score for c in over_wire] == [c.score for c in local]
        anatomy = remote.point_segmenter.segment_point(PointPrompt(x=80, y=100), 0)
        assert anatomy == scene.anatomy_mask
        masks = remote.propagator.propagate(scene.instrument_masks[0][0], 0, 3)
        assert masks == list(backends.propagator.propagate(scene.instrument_masks[0][0], 0, 3))
        depth = remote.depth_estimator.estimate_depth(0)
        np.testing.assert_array_equal(depth.values, scene.depth_maps[0].values)
    finally:
        remote.close()


def test_remote_error_surfaces_retryable_flag(live_gateway):
    client = RemoteBackendClient(live_gateway, timeout_ms=5000)
    try:
        with pytest.raises(BackendError) as excinfo:
            client.call("depth", {"frame_index": 10_000})
        assert excinfo.value.retryable is False
        assert "frame_range" in str(excinfo.value)
    finally:
        client.close()


@pytest.fixture()
def stalled_server():
    """Accepts connections and never responds."""
    sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    sock.bind(("127.0.0.1", 0))
    sock.listen(4)
    port = sock.getsockname()[1]
    stop = threading.Event()
    held: list[socket.socket] = []

    def run():
        sock.settimeout(0.1)
        while not stop.is_set():
            try:
                conn, _ = sock.accept()
                held.append(conn)  # hold the connection open, never reply
            except socket.timeout:
                continue

    thread = threading.Thread(target=run, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{port}"
    stop.set()
    thread.join(timeout=2)
    for conn in held:
        conn.close()
    sock.close()


def test_timeout_surfaced_within_budget(stalled_server):
    timeout_ms = 300
    client = RemoteBackendClient(stalled_server, timeout_ms=timeout_ms)
    try:
        start = time.perf_counter()
        with pytest.raises(BackendTimeoutError):
            client.call("depth", {"frame_index": 0})
        elapsed_ms = (time.perf_counter() - start) * 1000
        assert elapsed_ms <= timeout_ms + 100
    finally:
        client.close()
