"""Axis-aligned bounding boxes and deterministic spatial-relation heuristics."""

from __future__ import annotations

import enum
from dataclasses import dataclass


class RelationType(enum.Enum):
    """The seven spatial relations resolvable between two boxes."""

    LEFT = "left"
    RIGHT = "right"
    ABOVE = "above"
    BELOW = "below"
    BIGGER = "bigger"
    SMALLER = "smaller"
    INSIDE = "inside"


# Superlative phrasing ("leftmost dog") applies to every relation except INSIDE.
SUPERLATIVE_RELATIONS = frozenset(
    r for r in RelationType if r is not RelationType.INSIDE
)


@dataclass(frozen=True)
class Box:
    """Axis-aligned box in pixel coordinates: (x1, y1) top-left, (x2, y2) bottom-right.

    Image convention: x grows rightward, y grows downward. Zero-area boxes are
    allowed; negative extents are rejected at construction.
    """

    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self) -> None:
        if self.x2 < self.x1 or self.y2 < self.y1:
            raise ValueError(f"box has negative extent: {self.as_tuple()}")

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
        return (self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x1, self.y1, self.x2, self.y2)

    def intersection_area(self, other: Box) -> float:
        iw = min(self.x2, other.x2) - max(self.x1, other.x1)
        ih = min(self.y2, other.y2) - max(self.y1, other.y1)
        if iw <= 0.0 or ih <= 0.0:
            return 0.0
        return iw * ih


def iou(a: Box, b: Box) -> float:
    """Intersection over union of two boxes; 0.0 when the union has zero area."""
    inter = a.intersection_area(b)
    union = a.area + b.area - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def relation_prob(r: RelationType, a: Box, b: Box) -> float:
    """Probability in [0, 1] that relation ``r`` holds from box ``a`` to box ``b``.

    LEFT/RIGHT/ABOVE/BELOW compare box centers and are strict: ties (equal
    center coordinate) yield 0 for both directions. BIGGER/SMALLER compare
    areas, also strictly. INSIDE is graded: the fraction of ``a``'s area
    covered by ``b`` (0 when ``a`` has zero area).
    """
    if r is RelationType.INSIDE:
        if a.area <= 0.0:
            return 0.0
        return a.intersection_area(b) / a.area

    ax, ay = a.center
    bx, by = b.center
    if r is RelationType.LEFT:
        return 1.0 if ax < bx else 0.0
    if r is RelationType.RIGHT:
        return 1.0 if ax > bx else 0.0
    if r is RelationType.ABOVE:
        return 1.0 if ay < by else 0.0
    if r is RelationType.BELOW:
        return 1.0 if ay > by else 0.0
    if r is RelationType.BIGGER:
        return 1.0 if a.area > b.area else 0.0
    if r is RelationType.SMALLER:
        return 1.0 if a.area < b.area else 0.0
    raise ValueError(f"unknown relation: {r!r}")


def area_fraction(b: Box, image_w: float, image_h: float) -> float:
    """Fraction of the image area covered by ``b``, clipped to [0, 1]."""
    if image_w <= 0 or image_h <= 0:
        raise ValueError(f"image dimensions must be positive, got {image_w}x{image_h}")
    frac = b.area / (image_w * image_h)
    return min(max(frac, 0.0), 1.0)
