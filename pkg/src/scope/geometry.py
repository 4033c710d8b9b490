"""Instrument tip-landmark extraction and tracking from masks alone.

The working end of a rigid instrument is recovered three ways, in order of
preference: the seam where tip and shaft mask boundaries meet, a fallback
point along the shaft's medial axis for tools without a distinct tip, and a
per-frame boundary extreme along the principal axis once tracking is running.
No extra model is involved; everything derives from mask geometry.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np
from scipy.spatial import cKDTree

from .errors import (
    DegenerateMaskError,
    DimensionError,
    EmptyInputError,
    NoContactError,
    TrackingLostError,
)
from .mask import Mask, boundary, foreground_coords

# elongation below this reads as "no clear orientation"
LOW_CONFIDENCE_ELONGATION = 1.2
# boundary points this close (in projection) to the true extreme are averaged,
# which keeps the landmark sub-pixel stable under rasterization jitter
EXTREME_PROJECTION_TOLERANCE = 1.0
MAX_STALE_FRAMES = 5


class LandmarkSource(str, Enum):
    BOUNDARY_INTERSECTION = "boundary_intersection"
    MEDIAL_AXIS = "medial_axis"
    AXIS_EXTREME = "axis_extreme"


@dataclass(frozen=True)
class PrincipalAxis:
    """Dominant orientation of a mask's foreground pixels.

    ``direction`` is the unit eigenvector of the coordinate covariance with
    the larger eigenvalue, sign-fixed so dx > 0 (or dx == 0 and dy > 0).
    ``elongation`` is the eigenvalue ratio, 1 for isotropic shapes and
    infinity for perfectly collinear ones.
    """

    centroid: tuple[float, float]
    direction: tuple[float, float]
    elongation: float

    @property
    def low_confidence(self) -> bool:
        return self.elongation < LOW_CONFIDENCE_ELONGATION


@dataclass(frozen=True)
class TipLandmark:
    point: tuple[float, float]
    source: LandmarkSource
    frame_index: int = 0
    stale: int = 0
    low_confidence: bool = False

    def log_record(self, instrument: str) -> dict:
        return {
            "frame": self.frame_index,
            "instrument": instrument,
            "x": self.point[0],
            "y": self.point[1],
            "source": self.source.value,
            "stale": self.stale,
        }


def principal_axis(mask: Mask) -> PrincipalAxis:
    """PCA over foreground pixel coordinates."""
    coords = foreground_coords(mask).astype(np.float64)
    if len(coords) < 2:
        raise DegenerateMaskError(f"need >= 2 foreground pixels, got {len(coords)}")
    centroid = coords.mean(axis=0)
    cov = np.cov(coords.T)
    eigvals, eigvecs = np.linalg.eigh(cov)
    lam_minor, lam_major = float(eigvals[0]), float(eigvals[1])
    if lam_major <= 1e-12:
        raise DegenerateMaskError("zero covariance: no measurable orientation")
    direction = eigvecs[:, 1]
    if direction[0] < 0 or (direction[0] == 0 and direction[1] < 0):
        direction = -direction
    norm = float(np.hypot(direction[0], direction[1]))
    direction = direction / norm
    elongation = math.inf if lam_minor <= 1e-12 else lam_major / lam_minor
    return PrincipalAxis(
        centroid=(float(centroid[0]), float(centroid[1])),
        direction=(float(direction[0]), float(direction[1])),
        elongation=elongation,
    )


def tip_landmark(shaft: Mask, tip: Mask, frame_index: int = 0) -> TipLandmark:
    """Landmark at the seam where shaft and tip mask boundaries meet.

    Boundary points of the two masks are matched within Chebyshev distance 1
    (independent segmentations rarely share exact pixels) and the landmark is
    the centroid of the matched shaft-side points.
    """
    if not shaft.same_shape(tip):
        raise DimensionError("shaft and tip masks must share dimensions")
    if shaft.empty or tip.empty:
        raise EmptyInputError("shaft and tip masks must be non-empty")
    shaft_pts = boundary(shaft).as_array().astype(np.float64)
    tip_pts = boundary(tip).as_array().astype(np.float64)
    dist, _ = cKDTree(tip_pts).query(shaft_pts, p=np.inf)
    matched = shaft_pts[dist <= 1.0]
    if len(matched) == 0:
        raise NoContactError("tip and shaft boundaries never touch within tolerance")
    point = matched.mean(axis=0)
    return TipLandmark(
        point=(float(point[0]), float(point[1])),
        source=LandmarkSource.BOUNDARY_INTERSECTION,
        frame_index=frame_index,
        low_confidence=len(matched) == len(shaft_pts),
    )


def _entry_border_inward(mask: Mask) -> tuple[float, float] | None:
    """Inward normal of the image border the shaft enters from, if any.

    The entry border is the one with the most shaft-boundary contact;
    instruments enter the scene from an image edge, so the tip is the
    opposite (distal) end.
    """
    pts = boundary(mask).as_array()
    if len(pts) == 0:
        return None
    w, h = mask.width, mask.height
    contacts = {
        (1.0, 0.0): int((pts[:, 0] == 0).sum()),
        (-1.0, 0.0): int((pts[:, 0] == w - 1).sum()),
        (0.0, 1.0): int((pts[:, 1] == 0).sum()),
        (0.0, -1.0): int((pts[:, 1] == h - 1).sum()),
    }
    best = max(contacts.items(), key=lambda kv: kv[1])
    if best[1] == 0:
        return None
    return best[0]


def distal_direction(mask: Mask, axis: PrincipalAxis) -> tuple[float, float]:
    """Axis direction signed to point toward the instrument's far (tip) end."""
    inward = _entry_border_inward(mask)
    dx, dy = axis.direction
    if inward is not None and dx * inward[0] + dy * inward[1] < 0:
        return (-dx, -dy)
    return (dx, dy)


def medial_axis_point(shaft: Mask, frame_index: int = 0, percentile: float = 90.0) -> TipLandmark:
    """Stable landmark along the shaft's medial axis for tools without a tip.

    Foreground pixels are projected onto the principal axis and the landmark
    sits at the given percentile of the signed projection toward the distal
    end, snapped to the nearest foreground pixel.
    """
    axis = principal_axis(shaft)
    direction = np.array(distal_direction(shaft, axis))
    coords = foreground_coords(shaft).astype(np.float64)
    centroid = np.array(axis.centroid)
    proj = (coords - centroid) @ direction
    q = float(np.percentile(proj, percentile))
    target = centroid + q * direction
    nearest = coords[int(np.argmin(((coords - target) ** 2).sum(axis=1)))]
    return TipLandmark(
        point=(float(nearest[0]), float(nearest[1])),
        source=LandmarkSource.MEDIAL_AXIS,
        frame_index=frame_index,
        low_confidence=axis.low_confidence,
    )


def track_tip(
    shaft_t: Mask,
    previous: TipLandmark,
    frame_index: int | None = None,
    max_stale: int = MAX_STALE_FRAMES,
) -> TipLandmark:
    """Per-frame tip update: boundary extreme along the current principal axis.

    Of the two boundary extremes, the one whose projection sign matches the
    previous landmark's side is kept, so the tracked end never flips when the
    instrument reverses direction. A degenerate frame holds the last landmark
    and increments the staleness counter; past ``max_stale`` the track is lost.
    """
    if frame_index is None:
        frame_index = previous.frame_index + 1
    try:
        axis = principal_axis(shaft_t)
    except DegenerateMaskError:
        held = replace(previous, frame_index=frame_index, stale=previous.stale + 1)
        if held.stale > max_stale:
            raise TrackingLostError(f"landmark stale for {held.stale} frames")
        return held
    direction = np.array(axis.direction)
    centroid = np.array(axis.centroid)
    pts = boundary(shaft_t).as_array().astype(np.float64)
    proj = (pts - centroid) @ direction
    prev_side = float(np.array(previous.point) @ direction - centroid @ direction)
    if prev_side >= 0:
        target = proj.max()
        keep = proj >= target - EXTREME_PROJECTION_TOLERANCE
    else:
        target = proj.min()
        keep = proj <= target + EXTREME_PROJECTION_TOLERANCE
    # average the near-extreme points laterally but pin the landmark to the
    # extreme's axial coordinate, otherwise the cap average sits short of it
    point = pts[keep].mean(axis=0)
    point = point + (target - float((point - centroid) @ direction)) * direction
    return TipLandmark(
        point=(float(point[0]), float(point[1])),
        source=LandmarkSource.AXIS_EXTREME,
        frame_index=frame_index,
        stale=0,
        low_confidence=axis.low_confidence,
    )
