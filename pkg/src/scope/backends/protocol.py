"""Wire protocol shared by every backend kind.

One uniform envelope {kind, version, payload} travels over HTTP with JSON
bodies; masks as their RLE JSON objects and depth maps as base64 row-major
little-endian 32-bit floats. A single conformance suite can therefore cover
all six kinds, in-process or over the network.
"""
from __future__ import annotations

import base64
from dataclasses import dataclass
from enum import Enum
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from ..cursor import DepthMap
from ..errors import ProtocolError
from ..mask import Mask

PROTOCOL_VERSION = "1"


class BackendKind(str, Enum):
    STT = "stt"
    LLM = "llm"
    SEGMENT_TEXT = "segment_text"
    SEGMENT_POINT = "segment_point"
    PROPAGATE = "propagate"
    DEPTH = "depth"


ALL_KINDS = tuple(kind.value for kind in BackendKind)


@dataclass(frozen=True)
class BackendDescriptor:
    """Where a backend lives and how long a call may take."""

    kind: BackendKind
    endpoint: str  # in-process mock marker or a network base URL
    timeout_ms: int = 5000
    version: str = PROTOCOL_VERSION

    def __post_init__(self) -> None:
        if self.timeout_ms <= 0:
            raise ValueError("timeout_ms must be positive")


class _StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid")


class RequestEnvelope(_StrictModel):
    kind: str
    version: str
    payload: dict


class ResponseEnvelope(_StrictModel):
    kind: str
    version: str
    payload: dict


class ErrorBody(_StrictModel):
    code: str
    message: str
    retryable: bool


class MaskObj(_StrictModel):
    w: int
    h: int
    runs: list[int]


class PointObj(_StrictModel):
    x: int
    y: int


class SttRequest(_StrictModel):
    audio_b64: str


class SttResponse(_StrictModel):
    transcript: str


class LlmRequest(_StrictModel):
    op: Literal["respond", "expand"]
    query: str
    system_prompt: str = ""
    history: list[dict] = Field(default_factory=list)


class LlmResponse(_StrictModel):
    raw: str | None = None
    alternatives: list[str] | None = None


class CandidateObj(_StrictModel):
    mask: MaskObj
    score: float
    source_prompt: str
    backend_id: str


class SegmentTextRequest(_StrictModel):
    prompt: str
    frame_index: int


class SegmentTextResponse(_StrictModel):
    candidates: list[CandidateObj]


class SegmentPointRequest(_StrictModel):
    point: PointObj
    polarity: Literal["positive", "negative"] = "positive"
    frame_index: int


class SegmentPointResponse(_StrictModel):
    mask: MaskObj


class PropagateRequest(_StrictModel):
    mask: MaskObj
    from_frame: int
    to_frame: int
    mode: Literal["oracle", "drift"] = "oracle"


class PropagateResponse(_StrictModel):
    masks: list[MaskObj]


class DepthRequest(_StrictModel):
    frame_index: int


class DepthResponse(_StrictModel):
    width: int
    height: int
    depth_b64: str


REQUEST_MODELS: dict[str, type[BaseModel]] = {
    BackendKind.STT.value: SttRequest,
    BackendKind.LLM.value: LlmRequest,
    BackendKind.SEGMENT_TEXT.value: SegmentTextRequest,
    BackendKind.SEGMENT_POINT.value: SegmentPointRequest,
    BackendKind.PROPAGATE.value: PropagateRequest,
    BackendKind.DEPTH.value: DepthRequest,
}

RESPONSE_MODELS: dict[str, type[BaseModel]] = {
    BackendKind.STT.value: SttResponse,
    BackendKind.LLM.value: LlmResponse,
    BackendKind.SEGMENT_TEXT.value: SegmentTextResponse,
    BackendKind.SEGMENT_POINT.value: SegmentPointResponse,
    BackendKind.PROPAGATE.value: PropagateResponse,
    BackendKind.DEPTH.value: DepthResponse,
}


def validate_payload(kind: str, payload: dict, direction: Literal["request", "response"]) -> dict:
    """Validate a payload against its kind's schema; returns the parsed dict."""
    models = REQUEST_MODELS if direction == "request" else RESPONSE_MODELS
    model = models.get(kind)
    if model is None:
        raise ProtocolError(f"unknown backend kind: {kind!r}")
    try:
        return model.model_validate(payload).model_dump()
    except Exception as exc:
        raise ProtocolError(f"invalid {kind} {direction} payload: {exc}") from exc


def mask_to_obj(mask: Mask) -> dict:
    return {"w": mask.width, "h": mask.height, "runs": list(mask.runs)}


def mask_from_obj(obj: dict) -> Mask:
    return Mask(width=int(obj["w"]), height=int(obj["h"]), runs=tuple(obj["runs"]))


def depth_to_b64(depth: DepthMap) -> str:
    data = np.ascontiguousarray(depth.values, dtype="<f4").tobytes()
    return base64.b64encode(data).decode("ascii")


def depth_from_b64(encoded: str, width: int, height: int) -> DepthMap:
    raw = base64.b64decode(encoded)
    values = np.frombuffer(raw, dtype="<f4")
    if values.size != width * height:
        raise ProtocolError(f"depth payload has {values.size} values, expected {width * height}")
    return DepthMap(values=values.reshape(height, width).copy())
