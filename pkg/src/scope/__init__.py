"""Speech/text-guided collaborative perception orchestration.

A model-agnostic pipeline that turns operator commands into tool calls
against pluggable segmentation, depth, and propagation backends: candidate
mask ranking and paging, instrument tip landmarks tracked from mask geometry
alone, and a depth-gated virtual cursor that triggers anatomy segmentation.
Deterministic mock backends and a synthetic-scene oracle make the whole
pipeline verifiable without any model weights.
"""
from .mask import Mask, PixelPoint, boundary, iou, rle_decode, rle_encode
from .metrics import FramePair, asd, dice, eval_report, sequence_means

__all__ = [
    "FramePair",
    "Mask",
    "PixelPoint",
    "asd",
    "boundary",
    "dice",
    "eval_report",
    "iou",
    "rle_decode",
    "rle_encode",
    "sequence_means",
]

__version__ = "0.1.0"
