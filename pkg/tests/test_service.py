from __future__ import annotations

import time

import pytest
from fastapi.testclient import TestClient

from scope.backends.mocks import mock_backend_set
from scope.backends.scene import InstrumentSpec, SceneSpec, generate_synthetic_scene
from scope.config import config_from_dict
from scope.session.events import EventKind, SessionEvent
from scope.session.frames import SyntheticFrameSource
from scope.session.service import EventBus, LiveSession, Subscriber, create_session_app, select_utterance


def static_scene(seed=7, frames=400):
    """Motionless instrument: selection payloads identical at any frame."""
    spec = SceneSpec(
        frames=frames,
        instruments=(InstrumentSpec(travel=(0.0, 0.0), angle_amplitude_deg=0.0),),
        contact_frames=(),
    )
    return generate_synthetic_scene(seed, spec)


def make_session(scene, fps=200):
    frames = SyntheticFrameSource(scene)
    config = config_from_dict({"fps": fps})
    return LiveSession(frames, mock_backend_set(scene), config, scene.seed)


def recv_until(ws, predicate, timeout=10.0):
    deadline = time.time() + timeout
    seen = []
    while time.time() < deadline:
        message = ws.receive_json()
        seen.append(message)
        if predicate(message):
            return message, seen
    raise AssertionError(f"condition not met; saw {len(seen)} messages")


def is_event(kind):
    return lambda m: m.get("type") == "event" and m["event"]["kind"] == kind.value


def test_snapshot_then_live_tail():
    session = make_session(static_scene())
    app = create_session_app(session)
    with TestClient(app) as client:
        with client.websocket_connect("/ws/session") as ws:
            first = ws.receive_json()
            assert first["type"] == "snapshot"
            assert "module" in first["state"]
            message, _ = recv_until(ws, is_event(EventKind.FRAME))
            assert message["event"]["kind"] == "frame"


def test_select_command_equals_spoken_ordinal():
    def run_session(selector):
        session = make_session(static_scene())
        app = create_session_app(session)
        with TestClient(app) as client:
            with client.websocket_connect("/ws/session") as ws:
                ws.receive_json()  # snapshot
                ws.send_json({"type": "utterance", "text": "segment the surgical instruments"})
                recv_until(ws, is_event(EventKind.CANDIDATES_PAGE))
                ws.send_json(selector)
                message, _ = recv_until(ws, is_event(EventKind.MASK_SELECTED))
                return message["event"]["payload"]

    by_utterance = run_session({"type": "utterance", "text": select_utterance(1)})
    by_index = run_session({"type": "select", "index": 1})
    # identical state change: strip the wall-clock measurement
    for payload in (by_utterance, by_index):
        payload.pop("secs_per_iteration", None)
    assert by_utterance == by_index


def test_reconnect_resumes_without_duplicates():
    session = make_session(static_scene())
    app = create_session_app(session)
    with TestClient(app) as client:
        with client.websocket_connect("/ws/session") as ws:
            ws.receive_json()  # snapshot
            ws.send_json({"type": "utterance", "text": "segment the surgical instruments"})
            recv_until(ws, is_event(EventKind.CANDIDATES_PAGE))
            ws.send_json({"type": "utterance", "text": "the first one, label it forceps"})
            message, seen = recv_until(ws, is_event(EventKind.MASK_SELECTED))
            last_seq = message["event"]["seq"]
            control_seqs = {
                m["event"]["seq"]
                for m in seen
                if m.get("type") == "event" and m["event"]["kind"] == "mask_selected"
            }
        # reconnect with the last seen sequence number
        with client.websocket_connect(f"/ws/session?last_seq={last_seq}") as ws2:
            message, seen2 = recv_until(ws2, is_event(EventKind.FRAME))
            seqs = [m["event"]["seq"] for m in seen2 if m.get("type") == "event"]
            assert all(seq > last_seq for seq in seqs)
            assert seqs == sorted(seqs)
            assert not any(
                m["event"]["kind"] == "mask_selected" and m["event"]["seq"] in control_seqs
                for m in seen2
                if m.get("type") == "event"
            )


def test_stop_command_enters_agent_queue():
    session = make_session(static_scene())
    app = create_session_app(session)
    with TestClient(app) as client:
        with client.websocket_connect("/ws/session") as ws:
            ws.receive_json()
            ws.send_json({"type": "stop"})
            message, _ = recv_until(ws, is_event(EventKind.AGENT_TEXT))
            assert "stop" in message["event"]["payload"]["text"].lower()


def test_state_endpoint():
    session = make_session(static_scene())
    app = create_session_app(session)
    with TestClient(app) as client:
        assert client.get("/healthz").json() == {"status": "ok"}
        state = client.get("/session/state").json()
        assert state["module"] == "InteractiveMode"


def event(seq, kind):
    return SessionEvent(seq=seq, frame=seq, t_ms=0, kind=kind)


def test_subscriber_drops_oldest_frame_events_first():
    sub = Subscriber(buffer=4)
    sub.push(event(1, EventKind.FRAME))
    sub.push(event(2, EventKind.MASK_SELECTED))
    sub.push(event(3, EventKind.FRAME))
    sub.push(event(4, EventKind.CURSOR_MOVED))
    sub.push(event(5, EventKind.FRAME))  # evicts seq 1
    sub.push(event(6, EventKind.CLICK))  # evicts seq 3
    drained = sub.wait(0.01)
    kinds = [(e.seq, e.kind) for e in drained]
    assert (1, EventKind.FRAME) not in kinds
    assert (3, EventKind.FRAME) not in kinds
    assert (2, EventKind.MASK_SELECTED) in kinds
    assert (6, EventKind.CLICK) in kinds
    assert sub.dropped == 2


def test_subscriber_never_drops_control_events():
    sub = Subscriber(buffer=2)
    for seq in range(1, 8):
        sub.push(event(seq, EventKind.MASK_SELECTED))
    drained = sub.wait(0.01)
    assert len(drained) == 7  # buffer grew rather than dropping control events
    assert sub.dropped == 0


def test_event_bus_resume_backlog():
    bus = EventBus(buffer=16)
    for seq in range(1, 6):
        bus.publish(event(seq, EventKind.FRAME))
    backlog, _ = bus.subscribe(last_seq=3)
    assert [e.seq for e in backlog] == [4, 5]
    assert bus.last_seq() == 5
