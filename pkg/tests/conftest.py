from __future__ import annotations

import numpy as np

from scope.mask import Mask, rle_encode


def grid_mask(rows: list[str]) -> Mask:
    """Build a mask from strings, '#' foreground and '.' background."""
    return rle_encode(np.array([[c == "#" for c in row] for row in rows]))


def rect_mask(width: int, height: int, x0: int, y0: int, x1: int, y1: int) -> Mask:
    """Filled rectangle with inclusive corners (x0, y0)..(x1, y1)."""
    grid = np.zeros((height, width), dtype=bool)
    grid[y0 : y1 + 1, x0 : x1 + 1] = True
    return rle_encode(grid)


def random_blob_mask(rng: np.random.Generator, width: int, height: int, n_shapes: int = 3) -> Mask:
    """Union of a few random rectangles and disks; may come out empty."""
    grid = np.zeros((height, width), dtype=bool)
    for _ in range(int(rng.integers(1, n_shapes + 1))):
        if rng.random() < 0.5:
            x0 = int(rng.integers(0, width))
            y0 = int(rng.integers(0, height))
            x1 = min(width - 1, x0 + int(rng.integers(1, max(2, width // 3))))
            y1 = min(height - 1, y0 + int(rng.integers(1, max(2, height // 3))))
            grid[y0 : y1 + 1, x0 : x1 + 1] = True
        else:
            cx = rng.uniform(0, width - 1)
            cy = rng.uniform(0, height - 1)
            r = rng.uniform(1, max(2.0, min(width, height) / 4))
            ys, xs = np.mgrid[0:height, 0:width]
            grid |= (xs - cx) ** 2 + (ys - cy) ** 2 <= r**2
    return rle_encode(grid)


def random_nonempty_mask(rng: np.random.Generator, width: int, height: int) -> Mask:
    mask = random_blob_mask(rng, width, height)
    while mask.empty:
        mask = random_blob_mask(rng, width, height)
    return mask


def bar_mask(
    width: int,
    height: int,
    cx: float,
    cy: float,
    length: float,
    thickness: float,
    angle_deg: float = 0.0,
) -> Mask:
    """Rasterized oriented bar: pixel centers within the rotated rectangle."""
    theta = np.deg2rad(angle_deg)
    ux, uy = np.cos(theta), np.sin(theta)
    ys, xs = np.mgrid[0:height, 0:width]
    rx, ry = xs - cx, ys - cy
    along = rx * ux + ry * uy
    across = -rx * uy + ry * ux
    eps = 1e-9  # keep rasterization symmetric at axis-aligned angles
    grid = (np.abs(along) <= length / 2 + eps) & (np.abs(across) <= thickness / 2 + eps)
    return rle_encode(grid)
