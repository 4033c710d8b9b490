"""Synthetic-scene generator used as the test oracle throughout the package.

A scene is a short clip of elongated instrument bars (each with a round tip
blob) moving rigidly over a static textured anatomy region, plus a relative
depth map per frame. The depth encoding makes the contact schedule machine
checkable: outside contact the area around the true cursor reads near the
tool's depth (monocular depth estimates bleed object depth around edges), so
band occupancy stays near zero; during a scheduled contact that area reads
exactly at the anatomy surface depth, so occupancy saturates.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from ..cursor import DepthMap
from ..errors import ConfigurationError
from ..mask import Mask, rle_decode, rle_encode

BACKGROUND_DEPTH = 0.9
ANATOMY_DEPTH = 0.75
INSTRUMENT_DEPTH = 0.35
HOVER_DEPTH = 0.55
ANATOMY_TEXTURE_AMP = 0.005


@dataclass(frozen=True)
class InstrumentSpec:
    """Rigid bar with a tip blob, moved along a triangle-wave translation
    (direction reverses mid-sequence) with a gentle sinusoidal rotation."""

    length: float = 60.0
    thickness: float = 6.0
    tip_radius: float = 5.0
    start: tuple[float, float] = (45.0, 55.0)
    travel: tuple[float, float] = (40.0, 6.0)
    angle_deg: float = 0.0
    angle_amplitude_deg: float = 8.0


@dataclass(frozen=True)
class SceneSpec:
    frames: int = 100
    width: int = 160
    height: int = 120
    instruments: tuple[InstrumentSpec, ...] = (InstrumentSpec(),)
    # inclusive frame ranges during which the tip is in surface contact
    contact_frames: tuple[tuple[int, int], ...] = ((40, 50),)
    anatomy_top_row: int = 42
    cursor_offset_px: float = 8.0
    contact_radius_px: float = 12.0

    def __post_init__(self) -> None:
        if self.frames < 10:
            raise ConfigurationError("a scene needs at least 10 frames")
        if not self.instruments:
            raise ConfigurationError("a scene needs at least one instrument")
        if self.width < 32 or self.height < 32:
            raise ConfigurationError("frame must be at least 32x32")
        last_end = -2
        for start, end in self.contact_frames:
            if not (0 <= start <= end < self.frames):
                raise ConfigurationError(f"contact range ({start}, {end}) outside 0..{self.frames - 1}")
            if start <= last_end + 1:
                raise ConfigurationError("contact ranges must be sorted with at least one frame between them")
            last_end = end


@dataclass(frozen=True)
class SceneTruth:
    """Ground truth for every frame: masks, depth, poses, and landmarks."""

    seed: int
    spec: SceneSpec
    anatomy_mask: Mask
    instrument_masks: tuple[tuple[Mask, ...], ...]  # [frame][instrument]
    tip_masks: tuple[tuple[Mask, ...], ...]
    depth_maps: tuple[DepthMap, ...]
    poses: tuple[tuple[tuple[float, float, float], ...], ...]  # (cx, cy, angle_deg)
    tip_points: tuple[tuple[tuple[float, float], ...], ...]
    cursor_points: tuple[tuple[tuple[float, float], ...], ...]
    contact_frames: tuple[tuple[int, int], ...] = field(default=())

    @property
    def frames(self) -> int:
        return self.spec.frames

    @property
    def width(self) -> int:
        return self.spec.width

    @property
    def height(self) -> int:
        return self.spec.height

    def in_contact(self, frame: int) -> bool:
        return any(start <= frame <= end for start, end in self.contact_frames)

    def content_hash(self) -> str:
        digest = hashlib.sha256()
        digest.update(self.anatomy_mask.to_json().encode())
        for frame in range(self.frames):
            for mask in self.instrument_masks[frame] + self.tip_masks[frame]:
                digest.update(mask.to_json().encode())
            digest.update(self.depth_maps[frame].values.tobytes())
        return digest.hexdigest()


def _bar_grid(width, height, cx, cy, length, thickness, angle_deg):
    theta = math.radians(angle_deg)
    ux, uy = math.cos(theta), math.sin(theta)
    ys, xs = np.mgrid[0:height, 0:width]
    rx, ry = xs - cx, ys - cy
    along = rx * ux + ry * uy
    across = -rx * uy + ry * ux
    eps = 1e-9  # symmetric rasterization at axis-aligned angles
    return (np.abs(along) <= length / 2 + eps) & (np.abs(across) <= thickness / 2 + eps)


def _disk_grid(width, height, cx, cy, radius):
    ys, xs = np.mgrid[0:height, 0:width]
    return (xs - cx) ** 2 + (ys - cy) ** 2 <= radius**2 + 1e-9


def _triangle01(phase: float) -> float:
    """0 -> 1 -> 0 over phase in [0, 1]."""
    return 1.0 - abs(2.0 * phase - 1.0)


def generate_synthetic_scene(seed: int, spec: SceneSpec | None = None) -> SceneTruth:
    """Deterministic scene for a given seed; raises if instruments ever overlap."""
    spec = spec or SceneSpec()
    rng = np.random.default_rng(seed)
    w, h = spec.width, spec.height

    anatomy_grid = np.zeros((h, w), dtype=bool)
    anatomy_grid[spec.anatomy_top_row :, :] = True
    anatomy_mask = rle_encode(anatomy_grid)
    texture = (rng.random((h, w)).astype(np.float32) * 2 - 1) * ANATOMY_TEXTURE_AMP

    jitters = [
        (float(rng.uniform(-2, 2)), float(rng.uniform(-2, 2)), float(rng.uniform(-3, 3)))
        for _ in spec.instruments
    ]

    instrument_masks: list[tuple[Mask, ...]] = []
    tip_masks: list[tuple[Mask, ...]] = []
    depth_maps: list[DepthMap] = []
    poses: list[tuple[tuple[float, float, float], ...]] = []
    tip_points: list[tuple[tuple[float, float], ...]] = []
    cursor_points: list[tuple[tuple[float, float], ...]] = []

    denominator = max(1, spec.frames - 1)
    for frame in range(spec.frames):
        phase = frame / denominator
        frame_poses = []
        frame_instruments = []
        frame_tips = []
        frame_tip_points = []
        frame_cursors = []
        tool_grid = np.zeros((h, w), dtype=bool)
        for inst, (jx, jy, ja) in zip(spec.instruments, jitters):
            cx = inst.start[0] + jx + inst.travel[0] * _triangle01(phase)
            cy = inst.start[1] + jy + inst.travel[1] * _triangle01(phase)
            angle = inst.angle_deg + ja + inst.angle_amplitude_deg * math.sin(2 * math.pi * phase)
            theta = math.radians(angle)
            ux, uy = math.cos(theta), math.sin(theta)
            shaft = _bar_grid(w, h, cx, cy, inst.length, inst.thickness, angle)
            end_x = cx + (inst.length / 2) * ux
            end_y = cy + (inst.length / 2) * uy
            blob = _disk_grid(w, h, end_x, end_y, inst.tip_radius)
            instrument = shaft | blob
            if (tool_grid & instrument).any():
                raise ConfigurationError("instrument lanes overlap; adjust the scene spec")
            tool_grid |= instrument
            tip_x = end_x + inst.tip_radius * ux
            tip_y = end_y + inst.tip_radius * uy
            frame_poses.append((cx, cy, angle))
            frame_instruments.append(rle_encode(instrument))
            frame_tips.append(rle_encode(blob))
            frame_tip_points.append((tip_x, tip_y))
            frame_cursors.append(
                (tip_x + spec.cursor_offset_px * ux, tip_y + spec.cursor_offset_px * uy)
            )

        depth = np.full((h, w), BACKGROUND_DEPTH, dtype=np.float32)
        depth[anatomy_grid] = ANATOMY_DEPTH + texture[anatomy_grid]
        in_contact = any(start <= frame <= end for start, end in spec.contact_frames)
        # the cursor region of the first instrument carries the contact signal
        cursor_x, cursor_y = frame_cursors[0]
        plate = _disk_grid(w, h, cursor_x, cursor_y, spec.contact_radius_px)
        if in_contact:
            depth[tool_grid] = INSTRUMENT_DEPTH
            depth[plate] = ANATOMY_DEPTH
        else:
            depth[plate] = HOVER_DEPTH
            depth[tool_grid] = INSTRUMENT_DEPTH

        instrument_masks.append(tuple(frame_instruments))
        tip_masks.append(tuple(frame_tips))
        depth_maps.append(DepthMap(values=depth))
        poses.append(tuple(frame_poses))
        tip_points.append(tuple(frame_tip_points))
        cursor_points.append(tuple(frame_cursors))

    return SceneTruth(
        seed=seed,
        spec=spec,
        anatomy_mask=anatomy_mask,
        instrument_masks=tuple(instrument_masks),
        tip_masks=tuple(tip_masks),
        depth_maps=tuple(depth_maps),
        poses=tuple(poses),
        tip_points=tuple(tip_points),
        cursor_points=tuple(cursor_points),
        contact_frames=spec.contact_frames,
    )


def contact_schedule(n_contacts: int, hold: int = 4, gap: int = 4, lead: int = 10) -> tuple[tuple[int, int], ...]:
    """Evenly spaced approach-hold-retract schedule starting after a lead-in."""
    schedule = []
    frame = lead
    for _ in range(n_contacts):
        schedule.append((frame, frame + hold - 1))
        frame += hold + gap
    return tuple(schedule)


def rigid_translation_spec(frames: int = 91) -> SceneSpec:
    """Whole-pixel translation with no rotation: the rasterized instrument is
    the exact same shape every frame, so drift-mode dice drops are clean steps."""
    travel_x = (frames - 1) // 2
    return SceneSpec(
        frames=frames,
        instruments=(
            InstrumentSpec(start=(40.0, 55.0), travel=(float(travel_x), 0.0), angle_amplitude_deg=0.0),
        ),
        contact_frames=(),
    )


def two_instrument_spec(frames: int = 60) -> SceneSpec:
    """Two instruments in separated lanes; masks never merge."""
    return SceneSpec(
        frames=frames,
        instruments=(
            InstrumentSpec(start=(40.0, 30.0), travel=(30.0, 4.0), angle_deg=0.0,
                           angle_amplitude_deg=4.0),
            InstrumentSpec(start=(110.0, 90.0), travel=(-30.0, -4.0), angle_deg=180.0,
                           angle_amplitude_deg=4.0),
        ),
        contact_frames=(),
    )
