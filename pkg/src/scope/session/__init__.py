"""Session orchestration: event log, frame sources, scripted runner, service."""
from .events import EventKind, SessionEvent, SessionLog, event_hash
from .frames import DirectoryFrameSource, SyntheticFrameSource
from .runner import ReplayResult, SessionRuntime, replay_log, run_scripted_session

__all__ = [
    "DirectoryFrameSource",
    "EventKind",
    "ReplayResult",
    "SessionEvent",
    "SessionLog",
    "SessionRuntime",
    "SyntheticFrameSource",
    "event_hash",
    "replay_log",
    "run_scripted_session",
]
