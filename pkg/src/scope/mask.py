"""Binary mask representation and set/boundary primitives.

Masks are stored run-length encoded, row-major, alternating background and
foreground counts starting with background. A zero is only ever valid as the
leading background count, which makes the encoding canonical: a given bitmap
has exactly one valid run sequence.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple

import numpy as np

from .errors import DimensionError, MaskCorruptionError

FRAME_FILE_PATTERN = "frame_%06d.json"
_FRAME_FILE_RE = re.compile(r"^frame_(\d{6})\.json$")


class PixelPoint(NamedTuple):
    """Integer pixel coordinate, origin at the top-left corner."""

    x: int
    y: int


@dataclass(frozen=True)
class Mask:
    """Run-length encoded binary raster.

    ``runs`` alternates background/foreground counts beginning with the
    background count; only the leading count may be zero.
    """

    width: int
    height: int
    runs: tuple[int, ...]

    def __post_init__(self) -> None:
        if self.width <= 0 or self.height <= 0:
            raise DimensionError(f"mask dimensions must be positive, got {self.width}x{self.height}")
        runs = tuple(int(r) for r in self.runs)
        object.__setattr__(self, "runs", runs)
        if not runs:
            raise MaskCorruptionError("runs must contain at least one count")
        if runs[0] < 0 or any(r <= 0 for r in runs[1:]):
            raise MaskCorruptionError(f"non-canonical runs (interior zero or negative): {runs}")
        if sum(runs) != self.width * self.height:
            raise MaskCorruptionError(
                f"runs sum to {sum(runs)}, expected {self.width * self.height} for {self.width}x{self.height}"
            )

    @property
    def area(self) -> int:
        """Number of foreground pixels."""
        return sum(self.runs[1::2])

    @property
    def empty(self) -> bool:
        return self.area == 0

    def same_shape(self, other: "Mask") -> bool:
        return self.width == other.width and self.height == other.height

    def to_json(self) -> str:
        return json.dumps({"w": self.width, "h": self.height, "runs": list(self.runs)})

    @classmethod
    def from_json(cls, text: str) -> "Mask":
        obj = json.loads(text)
        return cls(width=int(obj["w"]), height=int(obj["h"]), runs=tuple(obj["runs"]))


@dataclass(frozen=True)
class BoundarySet:
    """Foreground pixels with at least one 4-neighbor outside the mask."""

    points: frozenset[PixelPoint] = field(default_factory=frozenset)

    def __len__(self) -> int:
        return len(self.points)

    def as_array(self) -> np.ndarray:
        """Points as an (n, 2) array of (x, y), sorted row-major for determinism."""
        if not self.points:
            return np.empty((0, 2), dtype=np.int64)
        pts = sorted(self.points, key=lambda p: (p.y, p.x))
        return np.array(pts, dtype=np.int64)


def rle_encode(bitmap: Iterable) -> Mask:
    """Encode a 2-D boolean grid into its canonical run-length form."""
    try:
        arr = np.asarray(bitmap)
    except ValueError as exc:
        raise DimensionError("bitmap must be a non-empty rectangular 2-D grid") from exc
    if arr.dtype == object or arr.ndim != 2 or arr.size == 0:
        raise DimensionError("bitmap must be a non-empty rectangular 2-D grid")
    flat = arr.astype(bool).ravel()
    change = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    edges = np.concatenate(([0], change, [flat.size]))
    runs = np.diff(edges).tolist()
    if flat[0]:
        runs = [0] + runs
    return Mask(width=arr.shape[1], height=arr.shape[0], runs=tuple(runs))


def rle_decode(mask: Mask) -> np.ndarray:
    """Decode a Mask into an (height, width) boolean array."""
    values = np.zeros(len(mask.runs), dtype=bool)
    values[1::2] = True
    flat = np.repeat(values, np.asarray(mask.runs, dtype=np.int64))
    if flat.size != mask.width * mask.height:
        raise MaskCorruptionError("decoded length disagrees with mask dimensions")
    return flat.reshape(mask.height, mask.width)


def from_array(arr: np.ndarray) -> Mask:
    """Alias of rle_encode for callers already holding ndarray bitmaps."""
    return rle_encode(arr)


def iou(a: Mask, b: Mask) -> float:
    """Intersection over union. Two empty masks score 0 so ranking never sees NaN."""
    if not a.same_shape(b):
        raise DimensionError(f"mask shapes differ: {a.width}x{a.height} vs {b.width}x{b.height}")
    ga, gb = rle_decode(a), rle_decode(b)
    union = int(np.logical_or(ga, gb).sum())
    if union == 0:
        return 0.0
    inter = int(np.logical_and(ga, gb).sum())
    return inter / union


def boundary(mask: Mask) -> BoundarySet:
    """Foreground pixels with a 4-neighbor that is background or off-image."""
    grid = rle_decode(mask)
    interior = np.zeros_like(grid)
    interior[1:-1, 1:-1] = (
        grid[1:-1, 1:-1]
        & grid[:-2, 1:-1]
        & grid[2:, 1:-1]
        & grid[1:-1, :-2]
        & grid[1:-1, 2:]
    )
    edge = grid & ~interior
    ys, xs = np.nonzero(edge)
    return BoundarySet(points=frozenset(PixelPoint(int(x), int(y)) for x, y in zip(xs, ys)))


def foreground_coords(mask: Mask) -> np.ndarray:
    """(n, 2) array of (x, y) foreground coordinates in row-major order."""
    ys, xs = np.nonzero(rle_decode(mask))
    return np.stack([xs, ys], axis=1).astype(np.int64)


def save_mask_dir(masks: Iterable[Mask], directory: str | Path) -> list[Path]:
    """Write one JSON mask per frame as frame_%06d.json, indices from 0."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, mask in enumerate(masks):
        path = directory / (FRAME_FILE_PATTERN % i)
        path.write_text(mask.to_json())
        paths.append(path)
    return paths


def load_mask_dir(directory: str | Path) -> dict[int, Mask]:
    """Read every frame_%06d.json in a directory, keyed by frame index."""
    directory = Path(directory)
    out: dict[int, Mask] = {}
    for path in sorted(directory.iterdir()):
        m = _FRAME_FILE_RE.match(path.name)
        if m:
            out[int(m.group(1))] = Mask.from_json(path.read_text())
    return out
