"""Segmentation evaluation measures and report rendering.

Dice and average surface distance per frame, their frame-wise means over a
tracked sequence, and a plain-text/JSON report shaped like the comparison
tables this harness targets (columns DSC, ASD, #Iter., Time and mDSC, mASD).
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.spatial import cKDTree

from .errors import DimensionError, EmptyInputError, UndefinedMetricError
from .mask import Mask, boundary, rle_decode


@dataclass(frozen=True)
class FramePair:
    """Predicted and reference masks for one frame. Dimensions must agree."""

    predicted: Mask
    truth: Mask

    def __post_init__(self) -> None:
        if not self.predicted.same_shape(self.truth):
            raise DimensionError(
                f"predicted {self.predicted.width}x{self.predicted.height} vs "
                f"truth {self.truth.width}x{self.truth.height}"
            )


@dataclass(frozen=True)
class IterationStats:
    """Display iterations until the correct mask was accepted, and the wall time per iteration."""

    iterations: int
    seconds_per_iteration: float

    def __post_init__(self) -> None:
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.seconds_per_iteration < 0:
            raise ValueError("seconds_per_iteration must be >= 0")


def dice(pair: FramePair) -> float:
    """2|A∩B| / (|A| + |B|). Two empty masks agree perfectly and score 1."""
    a = rle_decode(pair.predicted)
    b = rle_decode(pair.truth)
    total = int(a.sum()) + int(b.sum())
    if total == 0:
        return 1.0
    return 2.0 * int(np.logical_and(a, b).sum()) / total


def asd(pair: FramePair) -> float:
    """Symmetric average surface distance between boundary pixel centers.

    Mean Euclidean distance from each boundary point of one mask to the
    nearest boundary point of the other, averaged over both directions.
    Undefined when either mask is empty.
    """
    if pair.predicted.empty or pair.truth.empty:
        raise UndefinedMetricError("ASD is undefined for empty masks")
    pa = boundary(pair.predicted).as_array().astype(np.float64)
    pb = boundary(pair.truth).as_array().astype(np.float64)
    d_ab = cKDTree(pb).query(pa)[0].mean()
    d_ba = cKDTree(pa).query(pb)[0].mean()
    return float((d_ab + d_ba) / 2.0)


@dataclass(frozen=True)
class SequenceMeans:
    """Frame-wise means over a tracked sequence.

    ``masd`` is None when no frame had a defined surface distance;
    ``asd_excluded`` counts frames skipped from the mASD mean.
    """

    mdsc: float
    masd: float | None
    asd_excluded: int


def sequence_means(pairs: Sequence[FramePair]) -> SequenceMeans:
    """Arithmetic means of per-frame dice and asd over an ordered sequence."""
    if not pairs:
        raise EmptyInputError("sequence_means needs at least one frame pair")
    dices = [dice(p) for p in pairs]
    asds = []
    excluded = 0
    for p in pairs:
        try:
            asds.append(asd(p))
        except UndefinedMetricError:
            excluded += 1
    masd = float(np.mean(asds)) if asds else None
    return SequenceMeans(mdsc=float(np.mean(dices)), masd=masd, asd_excluded=excluded)


@dataclass(frozen=True)
class ReportRow:
    """One table row; fields left as None are rendered as '-' / null."""

    label: str
    method: str
    dsc: float | None = None
    asd: float | None = None
    iters: float | None = None
    secs: float | None = None
    mdsc: float | None = None
    masd: float | None = None


def _fmt(value: float | None, decimals: int) -> str:
    return "-" if value is None else f"{value:.{decimals}f}"


def _fmt_masd(value: float | None) -> str:
    # up to 3 decimals, trailing zero trimmed to match mixed 2/3-place usage
    if value is None:
        return "-"
    text = f"{value:.3f}"
    return text[:-1] if text.endswith("0") else text


@dataclass(frozen=True)
class EvalReport:
    rows: tuple[ReportRow, ...]

    def to_dict(self) -> dict:
        return {
            "rows": [
                {
                    "label": r.label,
                    "method": r.method,
                    "dsc": r.dsc,
                    "asd": r.asd,
                    "mdsc": r.mdsc,
                    "masd": r.masd,
                    "iters": r.iters,
                    "secs": r.secs,
                }
                for r in self.rows
            ]
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @property
    def text(self) -> str:
        seg_rows = [r for r in self.rows if any(v is not None for v in (r.dsc, r.asd, r.iters, r.secs))]
        track_rows = [r for r in self.rows if any(v is not None for v in (r.mdsc, r.masd))]
        lines = ["Initial Segmentation"]
        lines += _render_table(
            ("Anatomy", "Method", "DSC", "ASD", "#Iter.", "Time(sec)"),
            [
                (r.label, r.method, _fmt(r.dsc, 2), _fmt(r.asd, 2), _fmt(r.iters, 1), _fmt(r.secs, 2))
                for r in seg_rows
            ],
        )
        lines.append("")
        lines.append("Mask Propagation")
        lines += _render_table(
            ("Anatomy", "Method", "mDSC", "mASD"),
            [(r.label, r.method, _fmt(r.mdsc, 3), _fmt_masd(r.masd)) for r in track_rows],
        )
        return "\n".join(lines) + "\n"


def _render_table(header: tuple[str, ...], rows: list[tuple[str, ...]]) -> list[str]:
    widths = [len(h) for h in header]
    for row in rows:
        widths = [max(w, len(c)) for w, c in zip(widths, row)]
    out = ["  ".join(c.ljust(w) for c, w in zip(header, widths)).rstrip()]
    for row in rows:
        out.append("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip())
    return out


def eval_report(rows: Sequence[ReportRow]) -> EvalReport:
    """Assemble the evaluation report document; rendering is deterministic."""
    return EvalReport(rows=tuple(rows))
