"""FastAPI gateway exposing the mock backends over the wire protocol.

POST /v1/{kind} with the uniform request envelope; GET /v1/healthz. Errors
come back as {code, message, retryable} with a 4xx/5xx status.
"""
from __future__ import annotations

import base64

from fastapi import FastAPI
from fastapi.responses import JSONResponse

from ..cursor import PointPrompt
from ..errors import FrameRangeError, ProtocolError, ScopeError
from .mocks import MockBackendSet
from .protocol import (
    ALL_KINDS,
    PROTOCOL_VERSION,
    RequestEnvelope,
    depth_to_b64,
    mask_from_obj,
    mask_to_obj,
    validate_payload,
)


def dispatch(kind: str, payload: dict, backends: MockBackendSet) -> dict:
    """Route one validated request payload to its mock and shape the response."""
    payload = validate_payload(kind, payload, "request")
    if kind == "stt":
        transcript = backends.stt.transcribe(base64.b64decode(payload["audio_b64"]))
        out: dict = {"transcript": transcript}
    elif kind == "llm":
        if payload["op"] == "expand":
            out = {"raw": None, "alternatives": backends.llm.expand(payload["query"])}
        else:
            raw = backends.llm.respond(
                payload["query"], payload["system_prompt"], tuple(payload["history"])
            )
            out = {"raw": raw, "alternatives": None}
    elif kind == "segment_text":
        candidates = []
        for segmenter in backends.text_segmenters:
            candidates.extend(segmenter.segment_text(payload["prompt"], payload["frame_index"]))
        out = {
            "candidates": [
                {
                    "mask": mask_to_obj(c.mask),
                    "score": c.score,
                    "source_prompt": c.source_prompt,
                    "backend_id": c.backend_id,
                }
                for c in candidates
            ]
        }
    elif kind == "segment_point":
        prompt = PointPrompt(
            x=payload["point"]["x"], y=payload["point"]["y"], polarity=payload["polarity"]
        )
        mask = backends.point_segmenter.segment_point(prompt, payload["frame_index"])
        out = {"mask": mask_to_obj(mask)}
    elif kind == "propagate":
        masks = backends.propagator.propagate(
            mask_from_obj(payload["mask"]),
            payload["from_frame"],
            payload["to_frame"],
            payload["mode"],
        )
        out = {"masks": [mask_to_obj(m) for m in masks]}
    elif kind == "depth":
        depth = backends.depth_estimator.estimate_depth(payload["frame_index"])
        out = {"width": depth.width, "height": depth.height, "depth_b64": depth_to_b64(depth)}
    else:
        raise ProtocolError(f"unknown backend kind: {kind!r}")
    return validate_payload(kind, out, "response")


def _error_response(status: int, code: str, message: str, retryable: bool) -> JSONResponse:
    return JSONResponse(
        status_code=status,
        content={"code": code, "message": message, "retryable": retryable},
    )


def create_gateway_app(backends: MockBackendSet) -> FastAPI:
    app = FastAPI(title="model backend gateway")

    @app.get("/v1/healthz")
    def healthz():
        return {"status": "ok", "version": PROTOCOL_VERSION}

    @app.post("/v1/{kind}")
    def handle(kind: str, envelope: RequestEnvelope):
        if kind not in ALL_KINDS:
            return _error_response(404, "unknown_kind", f"no such backend kind: {kind}", False)
        if envelope.kind != kind:
            return _error_response(400, "kind_mismatch", "envelope kind disagrees with the path", False)
        if envelope.version != PROTOCOL_VERSION:
            return _error_response(400, "bad_version", f"unsupported protocol version {envelope.version}", False)
        try:
            payload = dispatch(kind, envelope.payload, backends)
        except FrameRangeError as exc:
            return _error_response(400, "frame_range", str(exc), False)
        except ProtocolError as exc:
            return _error_response(400, "protocol", str(exc), False)
        except ScopeError as exc:
            return _error_response(500, "internal", str(exc), False)
        return {"kind": kind, "version": PROTOCOL_VERSION, "payload": payload}

    return app
