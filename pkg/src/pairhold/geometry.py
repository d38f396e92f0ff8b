"""Axis-aligned box and keypoint primitives.

Boxes use continuous pixel coordinates in corner form ``(x1, y1, x2, y2)``
with x pointing right and y pointing down. Point containment is closed on
all four edges.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence


class InvalidGeometryError(ValueError):
    """Raised when a box or image dimension has zero or negative extent."""


@dataclass(frozen=True)
class Box:
    x1: float
    y1: float
    x2: float
    y2: float

    @classmethod
    def from_seq(cls, seq: Sequence[float]) -> "Box":
        if len(seq) != 4:
            raise InvalidGeometryError(f"box needs 4 coordinates, got {len(seq)}")
        return cls(*(float(v) for v in seq))

    def as_list(self) -> list[float]:
        return [self.x1, self.y1, self.x2, self.y2]

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x1, self.y1, self.x2, self.y2)

    @property
    def width(self) -> float:
        return self.x2 - self.x1

    @property
    def height(self) -> float:
        return self.y2 - self.y1

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def center(self) -> tuple[float, float]:
        return ((self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0)

    @property
    def is_valid(self) -> bool:
        coords = self.as_tuple()
        return all(math.isfinite(c) for c in coords) and self.x2 > self.x1 and self.y2 > self.y1

    def check(self) -> "Box":
        if not self.is_valid:
            raise InvalidGeometryError(f"degenerate box {self.as_list()}")
        return self

    def shifted(self, dx: float, dy: float) -> "Box":
        return Box(self.x1 + dx, self.y1 + dy, self.x2 + dx, self.y2 + dy)

    def scaled(self, s: float) -> "Box":
        return Box(self.x1 * s, self.y1 * s, self.x2 * s, self.y2 * s)

    def clipped(self, width: float, height: float) -> "Box":
        """Clip to the frame ``[0, width] x [0, height]``; the result may be degenerate."""
        return Box(
            min(max(self.x1, 0.0), width),
            min(max(self.y1, 0.0), height),
            min(max(self.x2, 0.0), width),
            min(max(self.y2, 0.0), height),
        )

    def covers(self, other: "Box") -> bool:
        return (
            self.x1 <= other.x1 and self.y1 <= other.y1
            and self.x2 >= other.x2 and self.y2 >= other.y2
        )


@dataclass(frozen=True)
class Keypoint:
    name: str
    x: float
    y: float
    confidence: float


def intersection_area(a: Box, b: Box) -> float:
    a.check()
    b.check()
    w = min(a.x2, b.x2) - max(a.x1, b.x1)
    h = min(a.y2, b.y2) - max(a.y1, b.y1)
    if w <= 0 or h <= 0:
        return 0.0
    return w * h


def iou(a: Box, b: Box) -> float:
    """Intersection over union of two boxes; 0.0 for disjoint boxes."""
    inter = intersection_area(a, b)
    if inter == 0.0:
        return 0.0
    return inter / (a.area + b.area - inter)


def enclosure(inner: Box, outer: Box) -> float:
    """Fraction of ``inner``'s area covered by ``outer``."""
    inter = intersection_area(inner, outer)
    if inter == 0.0:
        return 0.0
    return min(inter / inner.area, 1.0)


def union_box(a: Box, b: Box) -> Box:
    """Smallest axis-aligned box containing both ``a`` and ``b``."""
    a.check()
    b.check()
    return Box(min(a.x1, b.x1), min(a.y1, b.y1), max(a.x2, b.x2), max(a.y2, b.y2))


def contains(box: Box, x: float, y: float) -> bool:
    return box.x1 <= x <= box.x2 and box.y1 <= y <= box.y2


def count_inside(box: Box, keypoints: Iterable[Keypoint]) -> int:
    return sum(1 for k in keypoints if contains(box, k.x, k.y))


def round_half_away(value: float) -> int:
    # Python's round() is banker's rounding; resize outputs must not depend on it.
    return int(math.floor(abs(value) + 0.5)) * (1 if value >= 0 else -1)


def resize_long_side(width: float, height: float, target: float = 600) -> tuple[int, int, float]:
    """Scale dimensions so the longer side equals ``target``.

    Returns ``(new_width, new_height, scale)`` where the new dimensions are
    rounded half away from zero.
    """
    if not (width > 0 and height > 0) or not (math.isfinite(width) and math.isfinite(height)):
        raise InvalidGeometryError(f"non-positive image dimensions {width}x{height}")
    if not target > 0:
        raise InvalidGeometryError(f"non-positive resize target {target}")
    scale = target / max(width, height)
    return round_half_away(width * scale), round_half_away(height * scale), scale
