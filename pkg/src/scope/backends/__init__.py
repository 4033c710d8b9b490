"""Backend layer: protocol definitions, deterministic mocks, synthetic scene."""
from .mocks import (
    MockBackendSet,
    MockChatBackend,
    MockDepthEstimator,
    MockPointSegmenter,
    MockPropagator,
    MockTextSegmenter,
    MockTranscriber,
    mock_backend_set,
)
from .protocol import PROTOCOL_VERSION, BackendDescriptor, BackendKind
from .scene import InstrumentSpec, SceneSpec, SceneTruth, generate_synthetic_scene

__all__ = [
    "PROTOCOL_VERSION",
    "BackendDescriptor",
    "BackendKind",
    "InstrumentSpec",
    "MockBackendSet",
    "MockChatBackend",
    "MockDepthEstimator",
    "MockPointSegmenter",
    "MockPropagator",
    "MockTextSegmenter",
    "MockTranscriber",
    "SceneSpec",
    "SceneTruth",
    "generate_synthetic_scene",
    "mock_backend_set",
]
