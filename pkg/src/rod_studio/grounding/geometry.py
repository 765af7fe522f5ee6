"""Normalized xyxy boxes, IoU and generalized IoU.

Coordinates are fractions of the image extent. Zero-area boxes are valid
(detectors emit them); ground truth is required to have positive area at
ingestion time.
"""

import math
from typing import Sequence, Tuple

from pydantic import BaseModel, ConfigDict, model_validator

from rod_studio.errors import InvalidBox

# Pixel conversions may overshoot the image edge by rounding noise.
_EDGE_SLACK = 1e-9


class BoxN(BaseModel):
    model_config = ConfigDict(frozen=True)

    x1: float
    y1: float
    x2: float
    y2: float

    @model_validator(mode="after")
    def _check(self) -> "BoxN":
        coords = (self.x1, self.y1, self.x2, self.y2)
        if not all(math.isfinite(c) for c in coords):
            raise ValueError(f"non-finite box coordinates: {coords}")
        if any(c < 0.0 or c > 1.0 for c in coords):
            raise ValueError(f"box coordinates outside [0,1]: {coords}")
        if self.x2 < self.x1 or self.y2 < self.y1:
            raise ValueError(f"box has negative extent: {coords}")
        return self

    @classmethod
    def of(cls, coords: Sequence[float]) -> "BoxN":
        """Build from an ``[x1, y1, x2, y2]`` sequence, raising InvalidBox."""
        if len(coords) != 4:
            raise InvalidBox(f"expected 4 coordinates, got {len(coords)}")
        try:
            return cls(x1=coords[0], y1=coords[1], x2=coords[2], y2=coords[3])
        except ValueError as e:
            raise InvalidBox(str(e)) from e

    @classmethod
    def from_xywh_pixels(
        cls, coords: Sequence[float], width: int, height: int
    ) -> "BoxN":
        if width <= 0 or height <= 0:
            raise InvalidBox(f"image size must be positive, got {width}x{height}")
        if len(coords) != 4:
            raise InvalidBox(f"expected 4 coordinates, got {len(coords)}")
        x, y, w, h = (float(c) for c in coords)
        if w < 0 or h < 0:
            raise InvalidBox(f"negative pixel extent: {list(coords)}")
        return cls.of(
            [
                _snap(x / width),
                _snap(y / height),
                _snap((x + w) / width),
                _snap((y + h) / height),
            ]
        )

    def as_list(self) -> list[float]:
        return [self.x1, self.y1, self.x2, self.y2]

    @property
    def width(self) -> float:
        return self.x2 - self.x1

    @property
    def height(self) -> float:
        return self.y2 - self.y1


def _snap(v: float) -> float:
    if -_EDGE_SLACK <= v < 0.0:
        return 0.0
    if 1.0 < v <= 1.0 + _EDGE_SLACK:
        return 1.0
    return v


def area(b: BoxN) -> float:
    return b.width * b.height


def center(b: BoxN) -> Tuple[float, float]:
    return (b.x1 + b.x2) / 2.0, (b.y1 + b.y2) / 2.0


def _intersection(a: BoxN, b: BoxN) -> float:
    iw = min(a.x2, b.x2) - max(a.x1, b.x1)
    ih = min(a.y2, b.y2) - max(a.y1, b.y1)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    return iw * ih


def _union(a: BoxN, b: BoxN, inter: float) -> float:
    return area(a) + area(b) - inter


def iou(a: BoxN, b: BoxN) -> float:
    inter = _intersection(a, b)
    union = _union(a, b, inter)
    if union <= 0.0:
        return 0.0
    return min(1.0, max(0.0, inter / union))


def giou(a: BoxN, b: BoxN) -> float:
    inter = _intersection(a, b)
    union = _union(a, b, inter)
    enclosing = (max(a.x2, b.x2) - min(a.x1, b.x1)) * (
        max(a.y2, b.y2) - min(a.y1, b.y1)
    )
    if enclosing <= 0.0:
        return 0.0
    overlap = inter / union if union > 0.0 else 0.0
    value = overlap - (enclosing - union) / enclosing
    return min(1.0, max(-1.0, value))


def l1_distance(a: BoxN, b: BoxN) -> float:
    """Sum of absolute coordinate differences."""
    return (
        abs(a.x1 - b.x1) + abs(a.y1 - b.y1) + abs(a.x2 - b.x2) + abs(a.y2 - b.y2)
    )
