"""Append-only session event log with deterministic hashing.

Events are strictly ordered by (frame index, sequence number) and each line
is flushed as soon as it is appended, so a crash loses at most the event in
flight. Wall-clock measurements (latency fields) are excluded from the
event-sequence hash; everything else in a mock-backed session is a pure
function of (header, script, seed), which is what makes replay exact.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import IO, Iterable, Sequence

from ..errors import OrderingError

# wall-clock payload fields, stripped before hashing
VOLATILE_PAYLOAD_KEYS = ("latency_ms", "secs_per_iteration")


class EventKind(str, Enum):
    FRAME = "frame"
    CANDIDATES_PAGE = "candidates_page"
    MASK_SELECTED = "mask_selected"
    LABEL_ASSIGNED = "label_assigned"
    TIP_LOCKED = "tip_locked"
    CURSOR_MOVED = "cursor_moved"
    CLICK = "click"
    ANATOMY_SEGMENTED = "anatomy_segmented"
    AGENT_TEXT = "agent_text"
    ERROR = "error"


# frame-rate events may be dropped under backpressure; control events never
DROPPABLE_KINDS = frozenset({EventKind.FRAME, EventKind.CURSOR_MOVED})
CONTROL_KINDS = frozenset({EventKind.MASK_SELECTED, EventKind.LABEL_ASSIGNED, EventKind.CLICK})


@dataclass(frozen=True)
class SessionEvent:
    seq: int
    frame: int
    t_ms: int
    kind: EventKind
    payload: dict = field(default_factory=dict)

    @property
    def ordering_key(self) -> tuple[int, int]:
        return (self.frame, self.seq)

    def to_obj(self) -> dict:
        return {
            "seq": self.seq,
            "frame": self.frame,
            "t_ms": self.t_ms,
            "kind": self.kind.value,
            "payload": self.payload,
        }

    @classmethod
    def from_obj(cls, obj: dict) -> "SessionEvent":
        return cls(
            seq=int(obj["seq"]),
            frame=int(obj["frame"]),
            t_ms=int(obj["t_ms"]),
            kind=EventKind(obj["kind"]),
            payload=obj.get("payload", {}),
        )


def _hashable_obj(event: SessionEvent) -> dict:
    obj = event.to_obj()
    obj["payload"] = {k: v for k, v in event.payload.items() if k not in VOLATILE_PAYLOAD_KEYS}
    return obj


def event_hash(events: Iterable[SessionEvent]) -> str:
    digest = hashlib.sha256()
    for event in events:
        digest.update(json.dumps(_hashable_obj(event), sort_keys=True).encode())
        digest.update(b"\n")
    return digest.hexdigest()


class SessionLog:
    """Header plus an append-only event list, optionally mirrored to JSONL."""

    def __init__(self, header: dict, path: str | Path | None = None):
        self.header = header
        self.events: list[SessionEvent] = []
        self.final_state_hash: str | None = None
        self._path = Path(path) if path is not None else None
        self._fh: IO[str] | None = None
        if self._path is not None:
            self._path.parent.mkdir(parents=True, exist_ok=True)
            self._fh = self._path.open("w")
            self._write_line({"header": header})

    def _write_line(self, obj: dict) -> None:
        assert self._fh is not None
        self._fh.write(json.dumps(obj, sort_keys=True) + "\n")
        self._fh.flush()

    def append_event(self, event: SessionEvent) -> None:
        if self.events and event.ordering_key <= self.events[-1].ordering_key:
            raise OrderingError(
                f"event key {event.ordering_key} not after {self.events[-1].ordering_key}"
            )
        self.events.append(event)
        if self._fh is not None:
            self._write_line(event.to_obj())

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None

    def hash(self) -> str:
        return event_hash(self.events)

    def events_of(self, *kinds: EventKind) -> list[SessionEvent]:
        wanted = set(kinds)
        return [e for e in self.events if e.kind in wanted]

    @classmethod
    def read(cls, path: str | Path) -> "SessionLog":
        lines = Path(path).read_text().splitlines()
        if not lines:
            raise OrderingError(f"empty session log: {path}")
        first = json.loads(lines[0])
        log = cls(header=first.get("header", {}))
        for line in lines[1:]:
            log.append_event(SessionEvent.from_obj(json.loads(line)))
        return log


def append_log_event(log: SessionLog, event: SessionEvent) -> SessionLog:
    log.append_event(event)
    return log


def write_transcript(path: str | Path, entries: Sequence[dict]) -> None:
    """One {q, response, module_before, module_after, t_ms} line per step."""
    with Path(path).open("w") as fh:
        for entry in entries:
            fh.write(json.dumps(entry, sort_keys=True) + "\n")
