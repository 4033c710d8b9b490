"""Depth-gated virtual cursor tied to the instrument tip.

The cursor rides a fixed offset beyond the tip along the tool's principal
axis. A relative depth map gates a debounced click detector: when enough
pixels around the cursor sit inside the calibrated surface depth band for
enough consecutive frames, a click fires and a positive point prompt is
emitted for anatomy segmentation. All depths are unitless and normalized
per frame; monocular depth models are scale-ambiguous.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigurationError, DimensionError
from .geometry import PrincipalAxis, TipLandmark
from .mask import Mask, rle_decode

logger = logging.getLogger(__name__)

DEFAULT_OFFSET_PX = 8
DEFAULT_RADIUS_PX = 7
DEFAULT_BAND_HALFWIDTH_FRAC = 0.05
DEFAULT_OCCUPANCY_THRESHOLD = 0.6
DEFAULT_REQUIRED_CONSECUTIVE = 3


@dataclass(frozen=True)
class DepthMap:
    """Per-pixel relative depth, larger meaning farther. Values must be finite."""

    values: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.values, dtype=np.float32)
        if arr.ndim != 2 or arr.size == 0:
            raise DimensionError("depth map must be a non-empty 2-D array")
        if not np.isfinite(arr).all():
            raise ValueError("depth map contains non-finite values")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class CursorPoint:
    """Integer cursor pixel; ``clamped`` marks an offset pushed back in-frame."""

    x: int
    y: int
    clamped: bool = False


@dataclass(frozen=True)
class PointPrompt:
    """Positive point prompt for the point-prompt segmentation backend."""

    x: int
    y: int
    polarity: str = "positive"
    clamped: bool = False


@dataclass(frozen=True)
class ClickDetectorState:
    """Debounced depth-band click detector.

    A click fires only while armed, after ``required_consecutive`` frames in a
    row with band occupancy at or above the threshold; firing disarms the
    detector until occupancy drops below the threshold again.
    """

    band_center: float
    band_halfwidth: float
    occupancy_threshold: float = DEFAULT_OCCUPANCY_THRESHOLD
    required_consecutive: int = DEFAULT_REQUIRED_CONSECUTIVE
    consecutive_hits: int = 0
    armed: bool = True

    def __post_init__(self) -> None:
        if not 0.0 < self.occupancy_threshold <= 1.0:
            raise ConfigurationError("occupancy_threshold must be in (0, 1]")
        if self.required_consecutive < 1:
            raise ConfigurationError("required_consecutive must be >= 1")
        if self.band_halfwidth < 0:
            raise ConfigurationError("band_halfwidth must be >= 0")
        if self.consecutive_hits > self.required_consecutive:
            raise ConfigurationError("consecutive_hits cannot exceed required_consecutive")


def cursor_position(
    tip: TipLandmark,
    axis: PrincipalAxis,
    offset: float,
    frame_width: int,
    frame_height: int,
) -> CursorPoint:
    """Tip plus an offset along the distal axis direction, clamped in-frame.

    The distal sign is taken from the tip's side of the centroid, so the
    offset always pushes past the tip rather than back down the shaft.
    """
    if offset < 0:
        raise ConfigurationError("offset must be >= 0")
    dx, dy = axis.direction
    side = (tip.point[0] - axis.centroid[0]) * dx + (tip.point[1] - axis.centroid[1]) * dy
    sign = -1.0 if side < 0 else 1.0
    x = tip.point[0] + offset * sign * dx
    y = tip.point[1] + offset * sign * dy
    xi, yi = int(round(x)), int(round(y))
    cx = min(max(xi, 0), frame_width - 1)
    cy = min(max(yi, 0), frame_height - 1)
    return CursorPoint(x=cx, y=cy, clamped=(cx, cy) != (xi, yi))


def band_occupancy(depth: DepthMap, cursor: CursorPoint, radius: int, state: ClickDetectorState) -> float:
    """Fraction of in-frame disk pixels whose depth falls inside the band."""
    ys, xs = np.mgrid[
        max(0, cursor.y - radius) : min(depth.height, cursor.y + radius + 1),
        max(0, cursor.x - radius) : min(depth.width, cursor.x + radius + 1),
    ]
    inside = (xs - cursor.x) ** 2 + (ys - cursor.y) ** 2 <= radius**2
    if not inside.any():
        return 0.0
    samples = depth.values[ys[inside], xs[inside]]
    lo = state.band_center - state.band_halfwidth
    hi = state.band_center + state.band_halfwidth
    return float(((samples >= lo) & (samples <= hi)).mean())


def update_click_state(
    state: ClickDetectorState,
    depth: DepthMap,
    cursor: CursorPoint,
    radius: int = DEFAULT_RADIUS_PX,
) -> tuple[ClickDetectorState, bool]:
    """Advance the detector by one frame; returns (new state, click fired)."""
    if radius < 1:
        raise ConfigurationError("radius must be >= 1")
    if not (0 <= cursor.x < depth.width and 0 <= cursor.y < depth.height):
        logger.warning("cursor (%d, %d) outside %dx%d frame; click state unchanged",
                       cursor.x, cursor.y, depth.width, depth.height)
        return state, False
    occupancy = band_occupancy(depth, cursor, radius, state)
    if occupancy >= state.occupancy_threshold:
        hits = min(state.consecutive_hits + 1, state.required_consecutive)
        fired = state.armed and hits >= state.required_consecutive
        return replace(state, consecutive_hits=hits, armed=state.armed and not fired), fired
    return replace(state, consecutive_hits=0, armed=True), False


def make_anatomy_prompt(cursor: CursorPoint) -> PointPrompt:
    """Positive point prompt at the cursor, clamp flag forwarded."""
    return PointPrompt(x=cursor.x, y=cursor.y, polarity="positive", clamped=cursor.clamped)


def calibrate_band(
    depth: DepthMap,
    exclude: Mask | None = None,
    halfwidth_frac: float = DEFAULT_BAND_HALFWIDTH_FRAC,
) -> tuple[float, float]:
    """Surface band from a calibration frame.

    Band center is the median depth outside the excluded (instrument) mask,
    which is the anatomy surface when tissue dominates the view; halfwidth
    defaults to 5% of the frame's depth value range.
    """
    values = depth.values
    if exclude is not None:
        if (exclude.width, exclude.height) != (depth.width, depth.height):
            raise DimensionError("exclusion mask dimensions must match the depth map")
        keep = ~rle_decode(exclude)
        if keep.any():
            values = depth.values[keep]
    center = float(np.median(values))
    halfwidth = float(halfwidth_frac * (depth.values.max() - depth.values.min()))
    return center, halfwidth
