"""Spatial and visual priors per candidate box.

The spatial prior indexes an analytic direction field at the box centre; the
visual prior averages a text-conditioned relevance grid over the box. Both are
in [0, 1] and are averaged into the unified prior ``h``.
"""

import math
from functools import cached_property
from typing import Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from rod_studio.config import CompositeWeights, PriorConfig, SpatialVocabulary
from rod_studio.errors import DegenerateBox, LengthMismatch, RodStudioError
from rod_studio.grounding.geometry import BoxN, center
from rod_studio.grounding.phrase import (
    BaseKind,
    SpatialTerm,
    extract_spatial_terms,
    tokenize,
)
from rod_studio.grounding.sample import Sample
from rod_studio.logging import get_logger

log = get_logger("rod_studio.priors")

# Distance from the image centre to a corner in normalized units.
_CENTER_REACH = math.sqrt(0.5)


class SpatialPriorField(BaseModel):
    model_config = ConfigDict(frozen=True)

    terms: Tuple[SpatialTerm, ...] = ()
    decay: Literal["linear", "gaussian"] = "linear"
    sigma: float = Field(0.35, gt=0.0)
    neutral: float = Field(0.5, ge=0.0, le=1.0)
    composite_weights: CompositeWeights = Field(default_factory=CompositeWeights)

    @cached_property
    def weighted_bases(self) -> List[Tuple[BaseKind, float]]:
        out: List[Tuple[BaseKind, float]] = []
        cw = self.composite_weights
        for term in self.terms:
            if term.is_composite:
                vertical, horizontal = term.parts
                out.append((vertical, cw.vertical))
                out.append((horizontal, cw.horizontal))
            else:
                out.append((term.parts[0], 1.0))
        return [(kind, w) for kind, w in out if w > 0.0]

    def _distance(self, kind: BaseKind, cx: float, cy: float) -> float:
        if kind is BaseKind.LEFT:
            return cx
        if kind is BaseKind.RIGHT:
            return 1.0 - cx
        if kind is BaseKind.TOP:
            return cy
        if kind is BaseKind.BOTTOM:
            return 1.0 - cy
        return math.hypot(cx - 0.5, cy - 0.5) / _CENTER_REACH

    def base_value(self, kind: BaseKind, cx: float, cy: float) -> float:
        d = self._distance(kind, cx, cy)
        if kind is BaseKind.CENTER and self.decay == "gaussian":
            # undo the corner normalisation so sigma is in image units
            d *= _CENTER_REACH
        if self.decay == "gaussian":
            value = math.exp(-(d * d) / (2.0 * self.sigma * self.sigma))
        else:
            value = 1.0 - d
        return min(1.0, max(0.0, value))

    def value(self, cx: float, cy: float) -> float:
        bases = self.weighted_bases
        if not bases:
            return self.neutral
        total = sum(w for _, w in bases)
        acc = sum(w * self.base_value(kind, cx, cy) for kind, w in bases)
        return min(1.0, max(0.0, acc / total))

    def raster(self, resolution: int) -> np.ndarray:
        """Field sampled at pixel centres of a ``resolution`` square grid."""
        if resolution < 1:
            raise RodStudioError("resolution must be >= 1", resolution=resolution)
        coords = (np.arange(resolution) + 0.5) / resolution
        return np.array(
            [[self.value(float(cx), float(cy)) for cx in coords] for cy in coords]
        )

    def export(self, resolution: int) -> Dict[str, object]:
        grid = self.raster(resolution)
        return {
            "width": resolution,
            "height": resolution,
            "terms": [t.label for t in self.terms],
            "decay": self.decay,
            "sigma": self.sigma,
            "values": [float(v) for v in grid.ravel()],
        }


def field_from_terms(
    terms: Sequence[SpatialTerm], config: Optional[PriorConfig] = None
) -> SpatialPriorField:
    cfg = config or PriorConfig()
    return SpatialPriorField(
        terms=tuple(terms),
        decay=cfg.decay,
        sigma=cfg.sigma,
        neutral=cfg.neutral,
        composite_weights=cfg.composite_weights,
    )


def spatial_prior(field: SpatialPriorField, box: BoxN) -> float:
    cx, cy = center(box)
    return field.value(cx, cy)


class RelevanceGrid(BaseModel):
    """Row-major relevance values in [0, 1] over the image plane."""

    model_config = ConfigDict(frozen=True)

    width: int = Field(..., ge=1)
    height: int = Field(..., ge=1)
    values: Tuple[float, ...]
    clamped: int = 0

    @model_validator(mode="after")
    def _check_values(self) -> "RelevanceGrid":
        if len(self.values) != self.width * self.height:
            raise ValueError(
                f"expected {self.width * self.height} values, got {len(self.values)}"
            )
        if any(not (0.0 <= v <= 1.0) for v in self.values):
            raise ValueError("relevance values must lie in [0,1]; use from_values")
        return self

    @classmethod
    def from_values(
        cls, width: int, height: int, values: Sequence[float]
    ) -> "RelevanceGrid":
        """Clamp raw values into [0, 1], counting how many were out of range."""
        arr = np.asarray(values, dtype=float)
        if not np.all(np.isfinite(arr)):
            raise ValueError("relevance values must be finite")
        clipped = np.clip(arr, 0.0, 1.0)
        n_clamped = int(np.count_nonzero(clipped != arr))
        if n_clamped:
            log.warning("Clamped %d relevance values into [0,1]", n_clamped)
        return cls(
            width=width,
            height=height,
            values=tuple(float(v) for v in clipped),
            clamped=n_clamped,
        )

    @cached_property
    def array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float).reshape(self.height, self.width)


def visual_prior(grid: RelevanceGrid, box: BoxN) -> float:
    """Mean relevance of the cells whose centres fall inside the box.

    When no cell centre is covered (thin or tiny boxes) the single cell
    nearest to the box centre is used.
    """
    coords = (box.x1, box.y1, box.x2, box.y2)
    if not all(math.isfinite(c) for c in coords) or not (
        0.0 <= box.x1 <= box.x2 <= 1.0 and 0.0 <= box.y1 <= box.y2 <= 1.0
    ):
        raise DegenerateBox(f"box {list(coords)} does not map onto the grid")
    xs = (np.arange(grid.width) + 0.5) / grid.width
    ys = (np.arange(grid.height) + 0.5) / grid.height
    cols = np.nonzero((xs >= box.x1) & (xs <= box.x2))[0]
    rows = np.nonzero((ys >= box.y1) & (ys <= box.y2))[0]
    arr = grid.array
    if cols.size and rows.size:
        return float(arr[np.ix_(rows, cols)].mean())
    cx, cy = center(box)
    col = min(grid.width - 1, int(math.floor(cx * grid.width)))
    row = min(grid.height - 1, int(math.floor(cy * grid.height)))
    return float(arr[row, col])


def aggregate(h_s: Sequence[float], h_v: Sequence[float]) -> List[float]:
    if len(h_s) != len(h_v):
        raise LengthMismatch(
            f"h_s has {len(h_s)} entries, h_v has {len(h_v)}",
            h_s=len(h_s),
            h_v=len(h_v),
        )
    return [min(1.0, max(0.0, (s + v) / 2.0)) for s, v in zip(h_s, h_v)]


class PriorBundle(BaseModel):
    """Per-candidate priors alongside the detector score ``p``."""

    model_config = ConfigDict(frozen=True)

    h_s: List[float]
    h_v: List[float]
    h: List[float]
    p: List[float]

    @model_validator(mode="after")
    def _same_length(self) -> "PriorBundle":
        n = len(self.p)
        if not (len(self.h_s) == len(self.h_v) == len(self.h) == n):
            raise ValueError("prior arrays must match the candidate count")
        return self

    @classmethod
    def build(
        cls, h_s: Sequence[float], h_v: Sequence[float], p: Sequence[float]
    ) -> "PriorBundle":
        h = aggregate(h_s, h_v)
        if len(p) != len(h):
            raise LengthMismatch(
                f"{len(p)} detector scores for {len(h)} prior values",
                p=len(p),
                h=len(h),
            )
        return cls(h_s=list(h_s), h_v=list(h_v), h=h, p=list(p))

    def __len__(self) -> int:
        return len(self.p)

    def features(self) -> np.ndarray:
        """``(K, 3)`` matrix of ``[h_s, h_v, p]`` rows, the fusion net input."""
        return np.column_stack(
            [
                np.asarray(self.h_s, dtype=float),
                np.asarray(self.h_v, dtype=float),
                np.asarray(self.p, dtype=float),
            ]
        ).reshape(len(self.p), 3)

    def additive(self) -> np.ndarray:
        return (
            np.asarray(self.p, dtype=float)
            + np.asarray(self.h_s, dtype=float)
            + np.asarray(self.h_v, dtype=float)
        )


def compute_bundle(
    sample: Sample,
    grid: Optional[RelevanceGrid] = None,
    config: Optional[PriorConfig] = None,
    vocabulary: Optional[SpatialVocabulary] = None,
) -> PriorBundle:
    cfg = config or PriorConfig()
    boxes = [c.box for c in sample.candidates]
    if cfg.use_spatial:
        terms = extract_spatial_terms(tokenize(sample.phrase), vocabulary)
        field = field_from_terms(terms, cfg)
        h_s = [spatial_prior(field, b) for b in boxes]
    else:
        h_s = [cfg.neutral] * len(boxes)
    if cfg.use_visual and grid is not None:
        h_v = [visual_prior(grid, b) for b in boxes]
    else:
        h_v = [cfg.neutral] * len(boxes)
    return PriorBundle.build(h_s, h_v, sample.scores)
