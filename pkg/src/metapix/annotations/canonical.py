"""Canonical labeled-item form all annotation formats convert through.

Boxes are pixels with a top-left origin. Defining every parser and
exporter against this one shape keeps format support linear instead of
quadratic in the number of formats.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from metapix.errors import MetapixError

# float slack for boxes that brush the image edge after unit conversion
GEOM_EPS = 1e-6


@dataclass
class Box:
    category: str
    x: float
    y: float
    w: float
    h: float
    extra: dict = field(default_factory=dict)

    def as_tuple(self) -> tuple:
        return (self.category, self.x, self.y, self.w, self.h)


@dataclass
class LabeledItem:
    uri: str
    width: int
    height: int
    boxes: list[Box] = field(default_factory=list)
    attributes: dict = field(default_factory=dict)
    content_hash: Optional[str] = None


def validate_box(box: Box, width: float, height: float, context: str = "") -> Box:
    """Check LabeledItem geometry; clamps float dust at the edges.

    Raises BAD_BBOX when the box truly leaves the image, has
    non-positive size, or has an empty category.
    """
    where = f" in {context}" if context else ""
    if not box.category:
        raise MetapixError("BAD_BBOX", f"box with empty category{where}")
    if box.w <= 0 or box.h <= 0:
        raise MetapixError(
            "BAD_BBOX", f"box {box.as_tuple()} has non-positive size{where}"
        )
    if box.x < -GEOM_EPS or box.y < -GEOM_EPS:
        raise MetapixError(
            "BAD_BBOX", f"box {box.as_tuple()} starts outside the image{where}"
        )
    if box.x + box.w > width + GEOM_EPS or box.y + box.h > height + GEOM_EPS:
        raise MetapixError(
            "BAD_BBOX",
            f"box {box.as_tuple()} exceeds image {width}x{height}{where}",
        )
    box.x = min(max(box.x, 0.0), width)
    box.y = min(max(box.y, 0.0), height)
    box.w = min(box.w, width - box.x)
    box.h = min(box.h, height - box.y)
    return box
