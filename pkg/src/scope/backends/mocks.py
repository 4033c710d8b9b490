"""Deterministic in-process mock backends bound to a synthetic scene.

Every mock is a pure function of its inputs and the scene, so full sessions
replay bit-identically. The rule-based chat mock maps utterance classes to
structured responses in the agent wire format and is the default test LLM.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import binary_dilation, binary_erosion

from ..candidates import ScoredCandidate
from ..cursor import DepthMap, PointPrompt
from ..errors import FrameRangeError
from ..mask import Mask, iou, rle_decode, rle_encode
from .scene import SceneTruth

_FOUR_CONNECTED = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)

SYNONYM_TABLE: dict[str, tuple[str, ...]] = {
    "surgical instruments": ("surgical tools", "gray instruments", "metal instruments"),
    "surgical tools": ("surgical instruments", "gray instruments"),
    "instruments": ("surgical instruments", "surgical tools"),
    "forceps": ("grasper", "tweezers"),
    "suction": ("suction device", "suction tube"),
    "anatomy": ("tissue", "organ surface"),
}

_INSTRUMENT_VOCAB = frozenset(
    {
        "instrument",
        "instruments",
        "tool",
        "tools",
        "forceps",
        "grasper",
        "tweezers",
        "suction",
        "scissors",
        "probe",
    }
)

_ORDINALS = {
    "first": 1,
    "second": 2,
    "third": 3,
    "fourth": 4,
    "fifth": 5,
    "sixth": 6,
    "1st": 1,
    "2nd": 2,
    "3rd": 3,
    "4th": 4,
    "5th": 5,
    "6th": 6,
}

_REJECTIONS = ("none of these", "none of those", "not these", "show more", "next page")
_STOPS = ("stop", "quit", "end session", "we are done")


@dataclass(frozen=True)
class NoiseSpec:
    """Distractor shaping for the text-segmentation mock."""

    dilate_px: int = 2
    blob_radius: int = 6
    blob_inset: int = 12


def _frame_check(frame_index: int, scene: SceneTruth) -> None:
    if not 0 <= frame_index < scene.frames:
        raise FrameRangeError(f"frame {frame_index} outside 0..{scene.frames - 1}")


def _half_mask(mask: Mask) -> Mask | None:
    grid = rle_decode(mask)
    xs = np.nonzero(grid)[1]
    mid = (xs.min() + xs.max() + 1) // 2
    half = grid.copy()
    half[:, mid:] = False
    return rle_encode(half) if half.any() else None


def _corner_blob(mask: Mask, noise: NoiseSpec) -> Mask | None:
    grid = rle_decode(mask)
    ys, xs = np.nonzero(grid)
    cx, cy = xs.mean(), ys.mean()
    h, w = grid.shape
    corners = [(noise.blob_inset, noise.blob_inset), (w - 1 - noise.blob_inset, noise.blob_inset),
               (noise.blob_inset, h - 1 - noise.blob_inset), (w - 1 - noise.blob_inset, h - 1 - noise.blob_inset)]
    bx, by = max(corners, key=lambda c: (c[0] - cx) ** 2 + (c[1] - cy) ** 2)
    gy, gx = np.mgrid[0:h, 0:w]
    blob = (gx - bx) ** 2 + (gy - by) ** 2 <= noise.blob_radius**2
    return rle_encode(blob) if blob.any() else None


class MockTextSegmenter:
    """Open-vocabulary segmentation stand-in.

    Instrument-class prompts return the ground-truth instrument masks plus
    deterministic distractors (a dilated copy, a half mask, and a background
    blob); prompts mentioning "tip" return the tip-mask family; anything else
    returns an empty list.
    """

    def __init__(self, scene: SceneTruth, noise: NoiseSpec | None = None, backend_id: str = "mock-textseg"):
        self.scene = scene
        self.noise = noise or NoiseSpec()
        self.backend_id = backend_id

    def _family(self, prompt: str, frame_index: int) -> tuple[Mask, ...] | None:
        words = set(re.findall(r"[a-z]+", prompt.lower()))
        if "tip" in words:
            return self.scene.tip_masks[frame_index]
        if words & _INSTRUMENT_VOCAB:
            return self.scene.instrument_masks[frame_index]
        return None

    def segment_text(self, prompt: str, frame_index: int) -> list[ScoredCandidate]:
        _frame_check(frame_index, self.scene)
        family = self._family(prompt, frame_index)
        if family is None:
            return []

        def cand(mask: Mask, score: float) -> ScoredCandidate:
            return ScoredCandidate(mask=mask, score=score, source_prompt=prompt, backend_id=self.backend_id)

        out = [cand(mask, round(0.9 - 0.02 * i, 4)) for i, mask in enumerate(family)]
        primary = rle_decode(family[0])
        dilated = rle_encode(binary_dilation(primary, structure=_FOUR_CONNECTED, iterations=self.noise.dilate_px))
        out.append(cand(dilated, 0.7))
        half = _half_mask(family[0])
        if half is not None:
            out.append(cand(half, 0.6))
        blob = _corner_blob(family[0], self.noise)
        if blob is not None:
            out.append(cand(blob, 0.5))
        return out


class MockPointSegmenter:
    """Point-prompt segmentation stand-in: returns the ground-truth region
    containing the point, or a small disk when the point hits nothing."""

    backend_id = "mock-pointseg"

    def __init__(self, scene: SceneTruth, miss_radius: int = 5):
        self.scene = scene
        self.miss_radius = miss_radius

    def segment_point(self, prompt: PointPrompt, frame_index: int) -> Mask:
        _frame_check(frame_index, self.scene)
        x, y = prompt.x, prompt.y
        # instruments occlude the anatomy, so they take precedence
        regions = list(self.scene.instrument_masks[frame_index])
        regions += list(self.scene.tip_masks[frame_index])
        regions.append(self.scene.anatomy_mask)
        for region in regions:
            grid = rle_decode(region)
            if 0 <= y < grid.shape[0] and 0 <= x < grid.shape[1] and grid[y, x]:
                return region
        h, w = self.scene.height, self.scene.width
        ys, xs = np.mgrid[0:h, 0:w]
        disk = (xs - x) ** 2 + (ys - y) ** 2 <= self.miss_radius**2
        return rle_encode(disk)


class MockPropagator:
    """Video-segmentation stand-in.

    Oracle mode returns ground-truth masks along the motion script; drift mode
    erodes them one pixel per ten frames to emulate degradation. The initial
    mask is matched to the closest ground-truth object by IoU; an unmatched
    mask is echoed unchanged.
    """

    backend_id = "mock-propagate"

    def __init__(self, scene: SceneTruth):
        self.scene = scene

    def _truth_for(self, initial: Mask, from_frame: int):
        candidates = [lambda f: self.scene.anatomy_mask]
        for i in range(len(self.scene.instrument_masks[0])):
            candidates.append(lambda f, i=i: self.scene.instrument_masks[f][i])
            candidates.append(lambda f, i=i: self.scene.tip_masks[f][i])
        scored = [(iou(initial, fn(from_frame)), idx) for idx, fn in enumerate(candidates)]
        best_iou, best_idx = max(scored)
        return candidates[best_idx] if best_iou > 0.0 else None

    def propagate(self, initial: Mask, from_frame: int, to_frame: int, mode: str = "oracle") -> list[Mask]:
        if not (0 <= from_frame < self.scene.frames and 0 <= to_frame < self.scene.frames):
            raise FrameRangeError(f"frames ({from_frame}, {to_frame}) outside 0..{self.scene.frames - 1}")
        if from_frame >= to_frame:
            raise FrameRangeError("from_frame must be < to_frame")
        truth_fn = self._truth_for(initial, from_frame)
        out = []
        for frame in range(from_frame + 1, to_frame + 1):
            mask = truth_fn(frame) if truth_fn is not None else initial
            if mode == "drift":
                iterations = (frame - from_frame) // 10
                if iterations > 0:
                    grid = binary_erosion(
                        rle_decode(mask), structure=_FOUR_CONNECTED, iterations=iterations, border_value=0
                    )
                    mask = rle_encode(grid)
            out.append(mask)
        return out


class MockDepthEstimator:
    """Monocular depth stand-in: serves the scene's per-frame depth maps."""

    backend_id = "mock-depth"

    def __init__(self, scene: SceneTruth):
        self.scene = scene

    def estimate_depth(self, frame_index: int) -> DepthMap:
        _frame_check(frame_index, self.scene)
        return self.scene.depth_maps[frame_index]


class MockTranscriber:
    """Speech-to-text stand-in: fixtures carry the transcript as UTF-8 bytes."""

    backend_id = "mock-stt"

    def transcribe(self, audio: bytes) -> str:
        return audio.decode("utf-8", errors="replace").strip()


class MockChatBackend:
    """Rule-based chat backend: a pattern table over utterance classes.

    Emits responses in the agent wire format, which makes the whole agent
    deterministic under test. Also serves query expansion from a fixed
    synonym table.
    """

    backend_id = "mock-llm"

    def expand(self, query: str) -> list[str]:
        q = query.strip().lower()
        if q in SYNONYM_TABLE:
            return list(SYNONYM_TABLE[q])
        if q.startswith("tip of"):
            return ["instrument tip", "tool tip"]
        return []

    def respond(self, query: str, system_prompt: str = "", history: tuple = ()) -> str:
        q = query.strip().lower()
        action, text = self._route(q)
        if action is None:
            return json.dumps({"text_response": text})
        return json.dumps({"action": action, "text_response": text})

    def _route(self, q: str):
        if any(p in q for p in _REJECTIONS) or q in ("no", "none", "next"):
            return {"tool": "next_page", "args": {}}, "Advancing to the next display iteration."
        if any(p in q for p in _STOPS):
            return {"tool": "stop", "args": {}}, "Stopping the session."
        segment_match = re.search(r"segment(?:\s+the|\s+a|\s+an)?\s+(.+)", q)
        if segment_match:
            target = segment_match.group(1).strip(" .!?")
            return {"tool": "segment", "args": {"query": target}}, f"Segmenting {target} now."
        index = self._ordinal(q)
        label = self._label(q)
        if index is not None:
            args: dict = {"index": index}
            if label:
                args["label"] = label
                return {"tool": "select", "args": args}, f"Selecting candidate {index} as {label}."
            return {"tool": "select", "args": args}, f"Selecting candidate {index}."
        if label:
            return {"tool": "track", "args": {"label": label}}, f"Tracking as {label}."
        if q.startswith("track"):
            return {"tool": "track", "args": {}}, "Tracking the selected object."
        return None, "I can segment, page through candidates, select a mask, or track. What would you like to do?"

    @staticmethod
    def _ordinal(q: str) -> int | None:
        for word, value in _ORDINALS.items():
            if re.search(rf"\b{word}\b", q):
                return value
        number = re.search(r"\bnumber\s+(\d)\b", q)
        if number:
            return int(number.group(1))
        return None

    @staticmethod
    def _label(q: str) -> str | None:
        match = re.search(r"\blabel(?:\s+it|\s+this)?(?:\s+as)?\s+([a-z][a-z0-9 _-]*)", q)
        if match:
            return match.group(1).strip(" .!?")
        match = re.search(r"\btrack(?:\s+it|\s+this)?(?:\s+as)\s+([a-z][a-z0-9 _-]*)", q)
        if match:
            return match.group(1).strip(" .!?")
        return None


@dataclass
class MockBackendSet:
    """The six mock backends bound to one scene."""

    scene: SceneTruth
    stt: MockTranscriber = field(default_factory=MockTranscriber)
    llm: MockChatBackend = field(default_factory=MockChatBackend)
    text_segmenters: tuple[MockTextSegmenter, ...] = ()
    point_segmenter: MockPointSegmenter | None = None
    propagator: MockPropagator | None = None
    depth_estimator: MockDepthEstimator | None = None


def mock_backend_set(scene: SceneTruth, noise: NoiseSpec | None = None) -> MockBackendSet:
    return MockBackendSet(
        scene=scene,
        text_segmenters=(MockTextSegmenter(scene, noise=noise),),
        point_segmenter=MockPointSegmenter(scene),
        propagator=MockPropagator(scene),
        depth_estimator=MockDepthEstimator(scene),
    )
