"""Live session service: one session loop, many event-stream subscribers.

The session runs on a background thread; subscribers attach over a websocket
and receive a state snapshot followed by the live tail (or, on reconnect with
a last-seen sequence number, just the events they missed). Client commands
(text utterances, mask selection by index, stop) enter the agent queue
exactly as spoken commands would.
"""
from __future__ import annotations

import asyncio
import queue
import threading
import time
from collections import deque
from contextlib import asynccontextmanager

import anyio
from fastapi import FastAPI, WebSocket, WebSocketDisconnect

from ..config import SessionConfig
from .events import DROPPABLE_KINDS, EventKind, SessionEvent, SessionLog
from .runner import SessionRuntime, describe_backends

_ORDINAL_WORDS = {1: "first", 2: "second", 3: "third", 4: "fourth", 5: "fifth", 6: "sixth"}


def select_utterance(index: int) -> str:
    """Canonical spoken form of a grid selection, so both paths are identical."""
    word = _ORDINAL_WORDS.get(index)
    return f"the {word} one" if word else f"number {index}"


class Subscriber:
    """Bounded per-client event queue.

    When full, the oldest frame-rate event is dropped first; control events
    (selections, labels, clicks) are never dropped, even if the buffer must
    grow past its nominal bound to keep them.
    """

    def __init__(self, buffer: int):
        self.buffer = buffer
        self._events: deque[SessionEvent] = deque()
        self._lock = threading.Lock()
        self._ready = threading.Condition(self._lock)
        self.dropped = 0

    def push(self, event: SessionEvent) -> None:
        with self._ready:
            if len(self._events) >= self.buffer:
                for i, pending in enumerate(self._events):
                    if pending.kind in DROPPABLE_KINDS:
                        del self._events[i]
                        self.dropped += 1
                        break
            self._events.append(event)
            self._ready.notify_all()

    def wait(self, timeout: float) -> list[SessionEvent]:
        with self._ready:
            if not self._events:
                self._ready.wait(timeout)
            drained = list(self._events)
            self._events.clear()
            return drained


class EventBus:
    """Publishes session events to subscribers and retains them for resume."""

    def __init__(self, buffer: int = 256):
        self.buffer = buffer
        self._retained: list[SessionEvent] = []
        self._subscribers: list[Subscriber] = []
        self._lock = threading.Lock()

    def publish(self, event: SessionEvent) -> None:
        with self._lock:
            self._retained.append(event)
            subscribers = list(self._subscribers)
        for subscriber in subscribers:
            subscriber.push(event)

    def last_seq(self) -> int:
        with self._lock:
            return self._retained[-1].seq if self._retained else 0

    def subscribe(self, last_seq: int | None = None) -> tuple[list[SessionEvent], Subscriber]:
        subscriber = Subscriber(self.buffer)
        with self._lock:
            backlog = (
                [e for e in self._retained if e.seq > last_seq] if last_seq is not None else []
            )
            self._subscribers.append(subscriber)
        return backlog, subscriber

    def unsubscribe(self, subscriber: Subscriber) -> None:
        with self._lock:
            if subscriber in self._subscribers:
                self._subscribers.remove(subscriber)


class _BusLog(SessionLog):
    """Session log that also publishes every appended event."""

    def __init__(self, header: dict, bus: EventBus):
        super().__init__(header)
        self._bus = bus

    def append_event(self, event: SessionEvent) -> None:
        super().append_event(event)
        self._bus.publish(event)


class LiveSession:
    """Background thread driving one session at a wall-clock frame rate."""

    def __init__(self, frames, backends, config: SessionConfig, seed: int):
        self.bus = EventBus(buffer=config.event_buffer)
        header = {
            "version": 1,
            "seed": seed,
            "config": config.to_dict(),
            "backends": describe_backends(backends),
            "script": [],
            "frames": frames.describe(),
        }
        self.log = _BusLog(header, self.bus)
        self.runtime = SessionRuntime(frames, backends, config, seed, self.log)
        self.config = config
        self.commands: queue.Queue[str] = queue.Queue()
        self.finished = threading.Event()
        self._thread: threading.Thread | None = None
        self._halt = threading.Event()

    def submit_utterance(self, text: str) -> None:
        self.commands.put(text)

    def submit_select(self, index: int) -> None:
        self.commands.put(select_utterance(index))

    def start(self) -> None:
        if self._thread is not None:
            return
        self._thread = threading.Thread(target=self._run, daemon=True)
        self._thread.start()

    def stop(self) -> None:
        self._halt.set()
        if self._thread is not None:
            self._thread.join(timeout=5)

    def _run(self) -> None:
        period = 1.0 / self.config.fps
        try:
            for frame in range(self.runtime.frames.count):
                if self._halt.is_set():
                    break
                self.runtime.advance_frame(frame)
                while True:
                    try:
                        utterance = self.commands.get_nowait()
                    except queue.Empty:
                        break
                    self.runtime.process_utterance(utterance)
                time.sleep(period)
        finally:
            self.finished.set()

    def snapshot(self) -> dict:
        runtime = self.runtime
        page = runtime.state.page
        return {
            "module": runtime.state.current_module,
            "frame": runtime.state.frame_index,
            "tracked": [
                {"id": obj_id, "label": runtime.objects[obj_id].label, "kind": runtime.objects[obj_id].kind}
                for obj_id in runtime.object_order
            ],
            "page_index": page.page_index if page is not None else None,
            "finished": self.finished.is_set(),
        }


def create_session_app(session: LiveSession) -> FastAPI:
    @asynccontextmanager
    async def lifespan(app: FastAPI):
        session.start()
        yield
        session.stop()

    app = FastAPI(title="session event service", lifespan=lifespan)

    @app.get("/healthz")
    def healthz():
        return {"status": "ok"}

    @app.get("/session/state")
    def state():
        return session.snapshot()

    @app.websocket("/ws/session")
    async def ws_session(ws: WebSocket):
        await ws.accept()
        raw_last_seq = ws.query_params.get("last_seq")
        last_seq = int(raw_last_seq) if raw_last_seq is not None else None
        backlog, subscriber = session.bus.subscribe(last_seq)
        try:
            if last_seq is None:
                await ws.send_json(
                    {"type": "snapshot", "state": session.snapshot(), "last_seq": session.bus.last_seq()}
                )
            for event in backlog:
                await ws.send_json({"type": "event", "event": event.to_obj(), "dropped": subscriber.dropped})

            async def pump_events() -> None:
                while True:
                    events = await anyio.to_thread.run_sync(subscriber.wait, 0.05)
                    for event in events:
                        await ws.send_json(
                            {"type": "event", "event": event.to_obj(), "dropped": subscriber.dropped}
                        )

            async def pump_commands() -> None:
                while True:
                    message = await ws.receive_json()
                    kind = message.get("type")
                    if kind == "utterance":
                        session.submit_utterance(str(message.get("text", "")))
                    elif kind == "select":
                        session.submit_select(int(message.get("index", 0)))
                    elif kind == "stop":
                        session.submit_utterance("stop")

            sender = asyncio.ensure_future(pump_events())
            receiver = asyncio.ensure_future(pump_commands())
            done, pending = await asyncio.wait(
                {sender, receiver}, return_when=asyncio.FIRST_COMPLETED
            )
            for task in pending:
                task.cancel()
            for task in done:
                exc = task.exception()
                if exc is not None and not isinstance(exc, WebSocketDisconnect):
                    raise exc
        except WebSocketDisconnect:
            pass
        finally:
            session.bus.unsubscribe(subscriber)

    return app
