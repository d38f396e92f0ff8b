"""Human x firearm pair enumeration and paired-box crop geometry."""

from __future__ import annotations

from dataclasses import dataclass

from .geometry import Box, InvalidGeometryError, resize_long_side, union_box
from .records import ImageRecord


class DegenerateCropError(InvalidGeometryError):
    pass


@dataclass(frozen=True)
class CandidatePair:
    human_index: int
    firearm_index: int
    human_bbox: Box
    firearm_bbox: Box
    paired_bbox: Box
    firearm_class: str


def enumerate_pairs(record: ImageRecord, margin: float = 0.0) -> list[CandidatePair]:
    """Pair every human detection with every firearm detection.

    Pairs come out human-major, firearm-minor. No pair is filtered here.
    ``margin`` pads the paired box on each side (in pixels); it defaults to 0.
    """
    pairs = []
    for hi, human in enumerate(record.humans):
        for fi, firearm in enumerate(record.firearms):
            paired = union_box(human.bbox, firearm.bbox)
            if margin:
                paired = Box(paired.x1 - margin, paired.y1 - margin, paired.x2 + margin, paired.y2 + margin)
            pairs.append(CandidatePair(hi, fi, human.bbox, firearm.bbox, paired, firearm.cls))
    return pairs


def crop_spec(pair: CandidatePair, width: float, height: float,
              target_long_side: float = 600) -> tuple[Box, int, int, float]:
    """Clip the paired box to the frame and size it for the classifier input.

    Returns ``(clipped_box, scaled_width, scaled_height, scale)``.
    """
    clipped = pair.paired_bbox.clipped(width, height)
    if not clipped.is_valid:
        raise DegenerateCropError(
            f"paired box {pair.paired_bbox.as_list()} has no extent inside the {width}x{height} frame")
    w, h, scale = resize_long_side(clipped.width, clipped.height, target_long_side)
    return clipped, w, h, scale
