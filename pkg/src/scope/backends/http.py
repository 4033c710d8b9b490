"""Thin network adapters: each backend kind as a client of the wire protocol.

These satisfy the same structural protocols as the in-process mocks, so the
rest of the pipeline cannot tell a remote model server from a local stand-in.
Timeouts surface as a distinguishable error within the configured budget.
"""
from __future__ import annotations

import base64

import httpx

from ..candidates import ScoredCandidate
from ..cursor import DepthMap, PointPrompt
from ..errors import BackendError, BackendTimeoutError, BackendUnavailableError, ProtocolError
from ..mask import Mask
from .protocol import (
    PROTOCOL_VERSION,
    ResponseEnvelope,
    depth_from_b64,
    mask_from_obj,
    mask_to_obj,
    validate_payload,
)


class RemoteBackendClient:
    """Shared HTTP plumbing for every adapter below."""

    def __init__(self, base_url: str, timeout_ms: int = 5000):
        self.base_url = base_url.rstrip("/")
        self.timeout_ms = timeout_ms
        self._client = httpx.Client(base_url=self.base_url, timeout=timeout_ms / 1000.0)

    def close(self) -> None:
        self._client.close()

    def call(self, kind: str, payload: dict) -> dict:
        envelope = {"kind": kind, "version": PROTOCOL_VERSION, "payload": payload}
        try:
            response = self._client.post(f"/v1/{kind}", json=envelope)
        except httpx.TimeoutException as exc:
            raise BackendTimeoutError(f"{kind} backend timed out after {self.timeout_ms} ms") from exc
        except httpx.TransportError as exc:
            raise BackendUnavailableError(f"{kind} backend unreachable: {exc}") from exc
        if response.status_code != 200:
            try:
                body = response.json()
                error = BackendError(f"{kind} backend error {body['code']}: {body['message']}")
                error.retryable = bool(body["retryable"])
            except (ValueError, KeyError) as exc:
                raise ProtocolError(f"{kind} backend returned malformed error body") from exc
            raise error
        try:
            parsed = ResponseEnvelope.model_validate(response.json())
        except Exception as exc:
            raise ProtocolError(f"{kind} backend returned a malformed envelope") from exc
        if parsed.kind != kind or parsed.version != PROTOCOL_VERSION:
            raise ProtocolError(f"envelope mismatch: got kind={parsed.kind} version={parsed.version}")
        return validate_payload(kind, parsed.payload, "response")

    def healthy(self) -> bool:
        try:
            return self._client.get("/v1/healthz").status_code == 200
        except httpx.HTTPError:
            return False


class RemoteTranscriber:
    def __init__(self, client: RemoteBackendClient):
        self._client = client
        self.backend_id = f"stt@{client.base_url}"

    def transcribe(self, audio: bytes) -> str:
        payload = self._client.call("stt", {"audio_b64": base64.b64encode(audio).decode("ascii")})
        return payload["transcript"]


class RemoteChatBackend:
    def __init__(self, client: RemoteBackendClient):
        self._client = client
        self.backend_id = f"llm@{client.base_url}"

    def respond(self, query: str, system_prompt: str = "", history: tuple = ()) -> str:
        payload = self._client.call(
            "llm",
            {"op": "respond", "query": query, "system_prompt": system_prompt, "history": list(history)},
        )
        if payload["raw"] is None:
            raise ProtocolError("llm respond returned no raw text")
        return payload["raw"]

    def expand(self, query: str) -> list[str]:
        payload = self._client.call("llm", {"op": "expand", "query": query})
        return payload["alternatives"] or []


class RemoteTextSegmenter:
    def __init__(self, client: RemoteBackendClient):
        self._client = client
        self.backend_id = f"segment_text@{client.base_url}"

    def segment_text(self, prompt: str, frame_index: int) -> list[ScoredCandidate]:
        payload = self._client.call("segment_text", {"prompt": prompt, "frame_index": frame_index})
        return [
            ScoredCandidate(
                mask=mask_from_obj(c["mask"]),
                score=c["score"],
                source_prompt=c["source_prompt"],
                backend_id=c["backend_id"],
            )
            for c in payload["candidates"]
        ]


class RemotePointSegmenter:
    def __init__(self, client: RemoteBackendClient):
        self._client = client
        self.backend_id = f"segment_point@{client.base_url}"

    def segment_point(self, prompt: PointPrompt, frame_index: int) -> Mask:
        payload = self._client.call(
            "segment_point",
            {
                "point": {"x": prompt.x, "y": prompt.y},
                "polarity": prompt.polarity,
                "frame_index": frame_index,
            },
        )
        return mask_from_obj(payload["mask"])


class RemotePropagator:
    def __init__(self, client: RemoteBackendClient):
        self._client = client
        self.backend_id = f"propagate@{client.base_url}"

    def propagate(self, initial: Mask, from_frame: int, to_frame: int, mode: str = "oracle") -> list[Mask]:
        payload = self._client.call(
            "propagate",
            {"mask": mask_to_obj(initial), "from_frame": from_frame, "to_frame": to_frame, "mode": mode},
        )
        return [mask_from_obj(m) for m in payload["masks"]]


class RemoteDepthEstimator:
    def __init__(self, client: RemoteBackendClient):
        self._client = client
        self.backend_id = f"depth@{client.base_url}"

    def estimate_depth(self, frame_index: int) -> DepthMap:
        payload = self._client.call("depth", {"frame_index": frame_index})
        return depth_from_b64(payload["depth_b64"], payload["width"], payload["height"])


class RemoteBackendSet:
    """All six adapters over one shared client; mirrors MockBackendSet's surface."""

    def __init__(self, base_url: str, timeout_ms: int = 5000):
        self.client = RemoteBackendClient(base_url, timeout_ms=timeout_ms)
        self.stt = RemoteTranscriber(self.client)
        self.llm = RemoteChatBackend(self.client)
        self.text_segmenters = (RemoteTextSegmenter(self.client),)
        self.point_segmenter = RemotePointSegmenter(self.client)
        self.propagator = RemotePropagator(self.client)
        self.depth_estimator = RemoteDepthEstimator(self.client)

    def close(self) -> None:
        self.client.close()
