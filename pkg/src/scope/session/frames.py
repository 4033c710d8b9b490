"""Frame sources: a seeded synthetic stream or a directory of image files.

Live camera capture stays out of scope; this interface keeps it pluggable.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass
from pathlib import Path

from ..backends.scene import InstrumentSpec, SceneSpec, SceneTruth
from ..errors import EmptyInputError

IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp"}


@dataclass(frozen=True)
class SyntheticFrameSource:
    """Replayable recorded stream backed by a generated scene."""

    scene: SceneTruth

    @property
    def count(self) -> int:
        return self.scene.frames

    @property
    def width(self) -> int:
        return self.scene.width

    @property
    def height(self) -> int:
        return self.scene.height

    def describe(self) -> dict:
        return {
            "kind": "synthetic",
            "seed": self.scene.seed,
            "frames": self.count,
            "scene_spec": asdict(self.scene.spec),
        }


def scene_spec_from_dict(data: dict) -> SceneSpec:
    """Rebuild a SceneSpec from its JSON form (tuples arrive as lists)."""
    instruments = tuple(
        InstrumentSpec(
            length=inst["length"],
            thickness=inst["thickness"],
            tip_radius=inst["tip_radius"],
            start=tuple(inst["start"]),
            travel=tuple(inst["travel"]),
            angle_deg=inst["angle_deg"],
            angle_amplitude_deg=inst["angle_amplitude_deg"],
        )
        for inst in data["instruments"]
    )
    return SceneSpec(
        frames=data["frames"],
        width=data["width"],
        height=data["height"],
        instruments=instruments,
        contact_frames=tuple((int(a), int(b)) for a, b in data["contact_frames"]),
        anatomy_top_row=data["anatomy_top_row"],
        cursor_offset_px=data["cursor_offset_px"],
        contact_radius_px=data["contact_radius_px"],
    )


@dataclass(frozen=True)
class DirectoryFrameSource:
    """Image files sorted by name; only dimensions and count matter here."""

    paths: tuple[Path, ...]
    width: int
    height: int

    @classmethod
    def open(cls, directory: str | Path) -> "DirectoryFrameSource":
        from PIL import Image

        paths = tuple(
            sorted(p for p in Path(directory).iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
        )
        if not paths:
            raise EmptyInputError(f"no image files in {directory}")
        with Image.open(paths[0]) as first:
            width, height = first.size
        return cls(paths=paths, width=width, height=height)

    @property
    def count(self) -> int:
        return len(self.paths)

    def describe(self) -> dict:
        return {"kind": "directory", "path": str(self.paths[0].parent), "frames": self.count}
