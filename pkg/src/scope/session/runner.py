"""Per-session orchestration loop.

Each frame: propagate every tracked object, publish the frame overlay event,
update the tip track and the depth-gated cursor (firing anatomy segmentation
on clicks), then feed any scripted or queued utterances through the agent.
Timestamps use a virtual frame clock, so a mock-backed session is a pure
function of (header, script, seed) and replays to the identical event hash.
"""
from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Protocol, Sequence

from ..agent import (
    SessionState,
    StepOutcome,
    ToolRegistry,
    build_system_prompt,
    default_tool_specs,
    default_workflow_config,
    notify_candidates_displayed,
    step_transition,
)
from ..backends.mocks import MockBackendSet
from ..candidates import (
    CandidatePageState,
    collect_candidates,
    expand_query,
    next_page,
    rank_and_dedup,
)
from ..config import SessionConfig
from ..cursor import (
    ClickDetectorState,
    CursorPoint,
    calibrate_band,
    cursor_position,
    make_anatomy_prompt,
    update_click_state,
)
from ..errors import (
    BackendUnavailableError,
    EmptyInputError,
    NoContactError,
    ScopeError,
    ScriptError,
    TrackingLostError,
)
from ..geometry import TipLandmark, principal_axis, tip_landmark, track_tip
from ..mask import Mask
from ..backends.protocol import mask_to_obj
from .events import EventKind, SessionEvent, SessionLog, write_transcript
from .frames import DirectoryFrameSource, SyntheticFrameSource


class FrameSource(Protocol):
    count: int
    width: int
    height: int

    def describe(self) -> dict: ...


@dataclass
class TrackedObject:
    object_id: str
    label: str
    kind: str  # instrument | tip | anatomy
    anchor_frame: int
    anchor_mask: Mask
    current_mask: Mask
    parent_id: str | None = None


@dataclass(frozen=True)
class ScriptCommand:
    frame: int
    utterance: str


def parse_script(script: Sequence[dict], frame_count: int) -> tuple[ScriptCommand, ...]:
    commands = []
    last_frame = 0
    for entry in script:
        try:
            frame = int(entry["frame"])
            utterance = str(entry["utterance"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ScriptError(f"malformed script entry: {entry!r}") from exc
        if frame < last_frame:
            raise ScriptError("script frames must be monotone non-decreasing")
        if frame >= frame_count:
            raise ScriptError(f"script references frame {frame} beyond source ({frame_count} frames)")
        commands.append(ScriptCommand(frame=frame, utterance=utterance))
        last_frame = frame
    return tuple(commands)


class SessionRuntime:
    """Single-session state: one agent loop, tracked objects, cursor, events."""

    def __init__(
        self,
        frames: FrameSource,
        backends,
        config: SessionConfig,
        seed: int,
        log: SessionLog,
    ):
        self.frames = frames
        self.backends = backends
        self.config = config
        self.seed = seed
        self.log = log
        self.agent_config = replace(default_workflow_config(), history_limit=config.history_limit)
        self.prompt = build_system_prompt(self.agent_config)
        self.registry = self._build_registry()
        self.state = SessionState()
        self.objects: dict[str, TrackedObject] = {}
        self.object_order: list[str] = []
        self.landmarks: dict[str, TipLandmark] = {}
        self.detector: ClickDetectorState | None = None
        self.cursor_instrument: str | None = None
        self.last_cursor: CursorPoint | None = None
        self.transcript: list[dict] = []
        self.landmark_records: list[dict] = []
        self.stopped = False
        self._seq = 0
        self._frame = 0
        self._object_counter = 0
        self._last_query = ""
        self._last_latency_ms: float | None = None

    # ---- event plumbing -------------------------------------------------

    def _now_ms(self) -> int:
        return self._frame * 1000 // self.config.fps

    def emit(self, kind: EventKind, payload: dict) -> SessionEvent:
        self._seq += 1
        event = SessionEvent(
            seq=self._seq, frame=self._frame, t_ms=self._now_ms(), kind=kind, payload=payload
        )
        self.log.append_event(event)
        return event

    def _emit_error(self, code: str, message: str) -> None:
        self.emit(EventKind.ERROR, {"code": code, "message": message})

    # ---- tool handlers ---------------------------------------------------

    def _build_registry(self) -> ToolRegistry:
        registry = ToolRegistry()
        handlers = {
            "segment": self._tool_segment,
            "select": self._tool_select,
            "next_page": self._tool_next_page,
            "track": self._tool_track,
            "stop": self._tool_stop,
        }
        for spec in default_tool_specs():
            registry.register(spec, handlers[spec.name])
        return registry

    def _tool_segment(self, args: dict, state: SessionState) -> SessionState:
        return replace(state, pending_query=args["query"])

    def _tool_select(self, args: dict, state: SessionState) -> SessionState:
        page = state.page
        if page is None or not page.current_page():
            raise RuntimeError("no candidates on display")
        index = args["index"]
        entries = page.current_page()
        if not 1 <= index <= len(entries):
            raise RuntimeError(f"index {index} outside 1..{len(entries)}")
        candidate = entries[index - 1]
        iterations = page.page_index + 1
        secs = (self._last_latency_ms or 0.0) / 1000.0

        if self._is_tip_query(self._last_query):
            parent = self._parent_instrument(self._last_query)
            if parent is None:
                raise RuntimeError("no tracked instrument to attach a tip to")
            label = args.get("label") or f"{parent.label} tip"
            obj = self._register_object(label, "tip", candidate.mask, parent_id=parent.object_id)
            self._emit_selection(obj, index, page, iterations, secs, candidate)
            landmark = tip_landmark(parent.current_mask, candidate.mask, frame_index=self._frame)
            self.landmarks[parent.object_id] = landmark
            if self.cursor_instrument is None:
                self.cursor_instrument = parent.object_id
            self._init_detector(parent)
            self.emit(
                EventKind.TIP_LOCKED,
                {
                    "instrument": parent.object_id,
                    "x": landmark.point[0],
                    "y": landmark.point[1],
                    "source": landmark.source.value,
                },
            )
        else:
            label = args.get("label") or f"object-{self._object_counter + 1}"
            obj = self._register_object(label, "instrument", candidate.mask)
            self._emit_selection(obj, index, page, iterations, secs, candidate)

        return replace(
            state,
            page=None,
            tracked_labels=state.tracked_labels + (obj.label,),
        )

    def _emit_selection(self, obj, index, page, iterations, secs, candidate) -> None:
        self.emit(
            EventKind.MASK_SELECTED,
            {
                "id": obj.object_id,
                "label": obj.label,
                "index": index,
                "page_index": page.page_index,
                "iterations": iterations,
                "score": candidate.score,
                "mask": mask_to_obj(candidate.mask),
                "secs_per_iteration": secs,
            },
        )
        self.emit(EventKind.LABEL_ASSIGNED, {"id": obj.object_id, "label": obj.label})

    def _tool_next_page(self, args: dict, state: SessionState) -> SessionState:
        page = state.page
        if page is None:
            raise RuntimeError("no candidates on display")
        advanced = next_page(page)
        if advanced.exhausted:
            self.emit(
                EventKind.AGENT_TEXT,
                {"text": "No more candidates. Please refine your query.", "notice": "candidates_exhausted"},
            )
        else:
            self._emit_page(advanced)
        return replace(state, page=advanced)

    def _tool_track(self, args: dict, state: SessionState) -> SessionState:
        if not self.object_order:
            raise RuntimeError("nothing is being tracked yet")
        obj = self.objects[self.object_order[-1]]
        label = args.get("label")
        if label:
            obj.label = label
            self.emit(EventKind.LABEL_ASSIGNED, {"id": obj.object_id, "label": label})
            labels = state.tracked_labels[:-1] + (label,)
            return replace(state, tracked_labels=labels)
        return state

    def _tool_stop(self, args: dict, state: SessionState) -> SessionState:
        self.stopped = True
        return state

    # ---- object bookkeeping ---------------------------------------------

    def _register_object(self, label: str, kind: str, mask: Mask, parent_id: str | None = None) -> TrackedObject:
        self._object_counter += 1
        object_id = f"obj-{self._object_counter}"
        obj = TrackedObject(
            object_id=object_id,
            label=label,
            kind=kind,
            anchor_frame=self._frame,
            anchor_mask=mask,
            current_mask=mask,
            parent_id=parent_id,
        )
        self.objects[object_id] = obj
        self.object_order.append(object_id)
        return obj

    def _is_tip_query(self, query: str) -> bool:
        return "tip" in query.lower().split()

    def _parent_instrument(self, query: str) -> TrackedObject | None:
        instruments = [self.objects[i] for i in self.object_order if self.objects[i].kind == "instrument"]
        if not instruments:
            return None
        lowered = query.lower()
        for obj in instruments:
            if obj.label.lower() in lowered:
                return obj
        return instruments[-1]

    def _init_detector(self, parent: TrackedObject) -> None:
        depth = self.backends.depth_estimator.estimate_depth(self._frame)
        center, halfwidth = calibrate_band(
            depth, exclude=parent.current_mask, halfwidth_frac=self.config.cursor.band_halfwidth_frac
        )
        self.detector = ClickDetectorState(
            band_center=center,
            band_halfwidth=halfwidth,
            occupancy_threshold=self.config.cursor.occupancy_threshold,
            required_consecutive=self.config.cursor.required_consecutive,
        )

    # ---- segmentation pipeline -------------------------------------------

    def _run_segmentation(self, query: str) -> None:
        self._last_query = query
        started = time.perf_counter()
        expansion = expand_query(query, self.backends.llm, self.config.candidates.expansion_count)
        if expansion.degraded:
            self._emit_error("expansion_degraded", "query expansion fell back to the original query")
        try:
            collected = collect_candidates(expansion.prompts, self._frame, self.backends.text_segmenters)
        except BackendUnavailableError as exc:
            self._emit_error("segmentation_unavailable", str(exc))
            self.state = replace(self.state, pending_query=None)
            return
        if collected.failures:
            self._emit_error("partial_backend_failure", "; ".join(collected.failures))
        page = rank_and_dedup(
            collected.candidates,
            overlap_threshold=self.config.candidates.overlap_threshold,
            frame_area=self.frames.width * self.frames.height,
            page_size=self.config.candidates.page_size,
            background_area_fraction=self.config.candidates.background_area_fraction,
            background_penalty=self.config.candidates.background_penalty,
        )
        self._last_latency_ms = (time.perf_counter() - started) * 1000.0
        self._emit_page(page)
        self.state = notify_candidates_displayed(self.state, page)

    def _emit_page(self, page: CandidatePageState) -> None:
        entries = page.current_page()
        payload = {
            "page_index": page.page_index,
            "page_count": page.page_count(),
            "total": len(page.all_candidates),
            "candidates": [
                {
                    "index": i + 1,
                    "score": c.score,
                    "source_prompt": c.source_prompt,
                    "backend_id": c.backend_id,
                    "mask": mask_to_obj(c.mask),
                }
                for i, c in enumerate(entries)
            ],
        }
        if self._last_latency_ms is not None:
            payload["latency_ms"] = self._last_latency_ms
        self.emit(EventKind.CANDIDATES_PAGE, payload)

    # ---- per-frame processing ---------------------------------------------

    def advance_frame(self, frame: int) -> None:
        self._frame = frame
        self.state = replace(self.state, frame_index=frame)
        self._propagate_objects(frame)
        tracked = [self.objects[obj_id] for obj_id in self.object_order]
        self.emit(
            EventKind.FRAME,
            {
                "frame": frame,
                "objects": [
                    {
                        "id": obj.object_id,
                        "label": obj.label,
                        "kind": obj.kind,
                        "mask": mask_to_obj(obj.current_mask),
                    }
                    for obj in tracked
                ],
            },
        )
        self._update_tracking(frame)

    def _propagate_objects(self, frame: int) -> None:
        for obj_id in self.object_order:
            obj = self.objects[obj_id]
            if frame <= obj.anchor_frame:
                continue
            try:
                masks = self.backends.propagator.propagate(
                    obj.anchor_mask, obj.anchor_frame, frame, self.config.propagation_mode
                )
            except ScopeError as exc:
                self._emit_error("propagation_failure", f"{obj.object_id}: {exc}")
                continue
            obj.current_mask = masks[-1]

    def _update_tracking(self, frame: int) -> None:
        instrument_id = self.cursor_instrument
        if instrument_id is None or instrument_id not in self.landmarks:
            return
        obj = self.objects[instrument_id]
        previous = self.landmarks[instrument_id]
        if frame <= previous.frame_index:
            return
        try:
            landmark = track_tip(obj.current_mask, previous, frame_index=frame)
        except TrackingLostError as exc:
            self._emit_error("tracking_lost", f"{instrument_id}: {exc}")
            del self.landmarks[instrument_id]
            return
        self.landmarks[instrument_id] = landmark
        self.landmark_records.append(landmark.log_record(instrument_id))
        if landmark.stale > 0:
            return
        axis = principal_axis(obj.current_mask)
        cursor = cursor_position(
            landmark, axis, self.config.cursor.offset_px, self.frames.width, self.frames.height
        )
        self.last_cursor = cursor
        fired = False
        if self.detector is not None:
            depth = self.backends.depth_estimator.estimate_depth(frame)
            self.detector, fired = update_click_state(
                self.detector, depth, cursor, self.config.cursor.radius_px
            )
        self.emit(
            EventKind.CURSOR_MOVED,
            {
                "x": cursor.x,
                "y": cursor.y,
                "clamped": cursor.clamped,
                "armed": self.detector.armed if self.detector else False,
            },
        )
        if fired:
            self.emit(EventKind.CLICK, {"x": cursor.x, "y": cursor.y})
            self._segment_anatomy(cursor, frame)

    def _segment_anatomy(self, cursor: CursorPoint, frame: int) -> None:
        prompt = make_anatomy_prompt(cursor)
        try:
            mask = self.backends.point_segmenter.segment_point(prompt, frame)
        except ScopeError as exc:
            self._emit_error("anatomy_segmentation_failure", str(exc))
            return
        obj = self._register_anatomy(mask)
        self.emit(
            EventKind.ANATOMY_SEGMENTED,
            {"id": obj.object_id, "label": obj.label, "mask": mask_to_obj(mask), "prompt": {"x": prompt.x, "y": prompt.y}},
        )

    def _register_anatomy(self, mask: Mask) -> TrackedObject:
        existing = self.objects.get("anatomy")
        if existing is not None:
            existing.anchor_frame = self._frame
            existing.anchor_mask = mask
            existing.current_mask = mask
            return existing
        obj = TrackedObject(
            object_id="anatomy",
            label="anatomy",
            kind="anatomy",
            anchor_frame=self._frame,
            anchor_mask=mask,
            current_mask=mask,
        )
        self.objects["anatomy"] = obj
        self.object_order.append("anatomy")
        return obj

    # ---- agent steps -------------------------------------------------------

    def process_utterance(self, utterance: str) -> StepOutcome:
        outcome = step_transition(
            self.state, utterance, self.backends.llm, self.registry, self.agent_config, self.prompt
        )
        self.state = outcome.state
        self.transcript.append(
            {
                "q": utterance,
                "response": outcome.response.to_wire(),
                "module_before": outcome.module_before,
                "module_after": outcome.module_after,
                "t_ms": self._now_ms(),
            }
        )
        self.emit(
            EventKind.AGENT_TEXT,
            {
                "text": outcome.response.text_response,
                "module_before": outcome.module_before,
                "module_after": outcome.module_after,
            },
        )
        if outcome.degraded:
            self._emit_error("llm_degraded", "language backend unavailable; degraded reply")
        if outcome.tool_error:
            self._emit_error("tool_failure", outcome.tool_error)
        if self.state.pending_query:
            self._run_segmentation(self.state.pending_query)
        return outcome

    # ---- whole-session drives ----------------------------------------------

    def run_script(self, commands: Sequence[ScriptCommand]) -> None:
        queue = list(commands)
        for frame in range(self.frames.count):
            self.advance_frame(frame)
            while queue and queue[0].frame == frame:
                self.process_utterance(queue.pop(0).utterance)

    def final_state_hash(self) -> str:
        snapshot = {
            "module": self.state.current_module,
            "frame": self.state.frame_index,
            "labels": list(self.state.tracked_labels),
            "objects": [
                {
                    "id": obj.object_id,
                    "label": obj.label,
                    "kind": obj.kind,
                    "anchor": obj.anchor_frame,
                    "mask": mask_to_obj(obj.current_mask),
                }
                for obj in (self.objects[obj_id] for obj_id in self.object_order)
            ],
            "landmarks": {
                key: [round(lm.point[0], 6), round(lm.point[1], 6), lm.stale]
                for key, lm in sorted(self.landmarks.items())
            },
            "history_length": len(self.state.history),
        }
        return hashlib.sha256(json.dumps(snapshot, sort_keys=True).encode()).hexdigest()


def describe_backends(backends) -> dict:
    if isinstance(backends, MockBackendSet):
        return {"kind": "mock", "scene_seed": backends.scene.seed}
    base = getattr(getattr(backends, "client", None), "base_url", None)
    return {"kind": "remote", "url": base}


def run_scripted_session(
    frames: FrameSource,
    script: Sequence[dict],
    config: SessionConfig,
    backends,
    seed: int,
    log_path: str | Path | None = None,
) -> SessionLog:
    """Drive a full session from a timed command list; returns the event log."""
    commands = parse_script(script, frames.count)
    header = {
        "version": 1,
        "seed": seed,
        "config": config.to_dict(),
        "backends": describe_backends(backends),
        "script": [{"frame": c.frame, "utterance": c.utterance} for c in commands],
        "frames": frames.describe(),
    }
    log = SessionLog(header, path=log_path)
    runtime = SessionRuntime(frames, backends, config, seed, log)
    try:
        runtime.run_script(commands)
    finally:
        log.close()
    if log_path is not None:
        base = Path(log_path)
        write_transcript(base.with_suffix(".transcript.jsonl"), runtime.transcript)
        with base.with_suffix(".landmarks.jsonl").open("w") as fh:
            for record in runtime.landmark_records:
                fh.write(json.dumps(record, sort_keys=True) + "\n")
    log.final_state_hash = runtime.final_state_hash()
    return log


@dataclass(frozen=True)
class ReplayResult:
    match: bool
    original_hash: str
    replayed_hash: str
    final_state_hash: str


def replay_log(path: str | Path) -> ReplayResult:
    """Reprocess a logged session with mock backends and compare hashes."""
    from ..backends.scene import generate_synthetic_scene
    from ..backends.mocks import mock_backend_set
    from ..config import config_from_dict
    from .frames import scene_spec_from_dict

    original = SessionLog.read(path)
    header = original.header
    config = config_from_dict(header.get("config", {}))
    frames_info = header.get("frames", {})
    scene_seed = header.get("backends", {}).get("scene_seed", header.get("seed", 0))
    spec = (
        scene_spec_from_dict(frames_info["scene_spec"])
        if "scene_spec" in frames_info
        else None
    )
    scene = generate_synthetic_scene(scene_seed, spec)
    if frames_info.get("kind") == "directory":
        frames: FrameSource = DirectoryFrameSource.open(frames_info["path"])
    else:
        frames = SyntheticFrameSource(scene)
    backends = mock_backend_set(scene)
    replayed = run_scripted_session(
        frames, header.get("script", []), config, backends, header.get("seed", 0)
    )
    return ReplayResult(
        match=original.hash() == replayed.hash(),
        original_hash=original.hash(),
        replayed_hash=replayed.hash(),
        final_state_hash=replayed.final_state_hash or "",
    )
