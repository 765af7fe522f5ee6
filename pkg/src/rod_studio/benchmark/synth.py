"""Seeded synthetic scenes for measuring what the priors buy.

Each scene holds a few labelled boxes, a referring phrase for one of them,
detector scores and a relevance grid. In ambiguous scenes the referent shares
class and colour with at least one distractor, so only the spatial word in the
phrase and the relevance grid can tell them apart.
"""

import math
from typing import List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from rod_studio.grounding.geometry import BoxN, iou
from rod_studio.grounding.phrase import SpatialTerm
from rod_studio.grounding.priors import RelevanceGrid, field_from_terms, spatial_prior
from rod_studio.grounding.sample import Candidate, Sample
from rod_studio.logging import get_logger

log = get_logger("rod_studio.benchmark")

DEFAULT_CLASSES = ["person", "dog", "chair", "cup", "car", "bottle"]
DEFAULT_COLORS = ["red", "blue", "green", "white", "black"]
DEFAULT_DIRECTIONS = [
    "left",
    "right",
    "top",
    "bottom",
    "center",
    "top left",
    "top right",
    "bottom left",
    "bottom right",
]
_DECIMALS = 6
_MAX_LAYOUT_TRIES = 50


class SceneSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    min_objects: int = Field(2, ge=1)
    max_objects: int = Field(4, ge=1)
    classes: List[str] = Field(default_factory=lambda: list(DEFAULT_CLASSES))
    colors: List[str] = Field(default_factory=lambda: list(DEFAULT_COLORS))
    directions: List[str] = Field(default_factory=lambda: list(DEFAULT_DIRECTIONS))
    ambiguity_rate: float = Field(1.0, ge=0.0, le=1.0)
    noise: float = Field(0.05, ge=0.0)
    fidelity: float = Field(0.9, ge=0.0, le=1.0)
    grid_res: int = Field(32, ge=1)
    image_size: int = Field(640, ge=1)
    target_score: float = Field(0.8, ge=0.0, le=1.0)
    other_score: float = Field(0.15, ge=0.0, le=1.0)
    min_box: float = Field(0.1, gt=0.0, le=1.0)
    max_box: float = Field(0.25, gt=0.0, le=1.0)
    max_overlap: float = Field(0.2, ge=0.0, le=1.0)
    spatial_margin: float = Field(0.05, ge=0.0)
    bump_scale: float = Field(0.5, gt=0.0)
    background: float = Field(0.1, ge=0.0, le=1.0)
    peak: float = Field(0.9, ge=0.0, le=1.0)
    seed: int = 0

    @model_validator(mode="after")
    def _check(self) -> "SceneSpec":
        if self.min_objects > self.max_objects:
            raise ValueError("min_objects must not exceed max_objects")
        if self.min_box > self.max_box:
            raise ValueError("min_box must not exceed max_box")
        if len(self.classes) < 2 and self.max_objects > 1:
            raise ValueError("need at least two classes for distractors")
        if not self.colors or not self.directions:
            raise ValueError("colors and directions must not be empty")
        if self.background > self.peak:
            raise ValueError("background must not exceed peak")
        for d in self.directions:
            SpatialTerm(parts=tuple(d.split()))
        return self


def phrase_for(color: str, cls: str, direction: Optional[str]) -> str:
    if direction is None:
        return f"the {color} {cls}"
    if direction == "center":
        return f"the {color} {cls} in the center"
    if " " in direction:
        return f"the {color} {cls} at the {direction}"
    return f"the {color} {cls} on the {direction}"


class SceneGenerator:
    """Draws scenes from a single ``numpy`` generator seeded once."""

    def __init__(self, spec: SceneSpec, seed: Optional[int] = None) -> None:
        self.spec = spec
        self.rng = np.random.default_rng(spec.seed if seed is None else seed)

    def _box(self) -> BoxN:
        s = self.spec
        w = self.rng.uniform(s.min_box, s.max_box)
        h = self.rng.uniform(s.min_box, s.max_box)
        x1 = self.rng.uniform(0.0, 1.0 - w)
        y1 = self.rng.uniform(0.0, 1.0 - h)
        coords = [round(v, _DECIMALS) for v in (x1, y1, x1 + w, y1 + h)]
        return BoxN.of([min(1.0, c) for c in coords])

    def _layout(self, n: int) -> List[BoxN]:
        boxes: List[BoxN] = []
        tries = 0
        while len(boxes) < n:
            box = self._box()
            tries += 1
            if tries > _MAX_LAYOUT_TRIES * n or all(
                iou(box, b) < self.spec.max_overlap for b in boxes
            ):
                boxes.append(box)
        return boxes

    def _score(self, base: float) -> float:
        noisy = base
        if self.spec.noise:
            noisy += self.rng.normal(0.0, self.spec.noise)
        return round(min(1.0, max(0.0, noisy)), _DECIMALS)

    def _grid(self, box: BoxN) -> RelevanceGrid:
        s = self.spec
        coords = (np.arange(s.grid_res) + 0.5) / s.grid_res
        gx, gy = np.meshgrid(coords, coords)
        cx, cy = (box.x1 + box.x2) / 2.0, (box.y1 + box.y2) / 2.0
        sigma = s.bump_scale * max(box.width, box.height)
        d2 = (gx - cx) ** 2 + (gy - cy) ** 2
        values = s.background + (s.peak - s.background) * np.exp(
            -d2 / (2.0 * sigma * sigma)
        )
        return RelevanceGrid(
            width=s.grid_res,
            height=s.grid_res,
            values=tuple(round(float(v), _DECIMALS) for v in values.ravel()),
        )

    def _pick_target(
        self, boxes: Sequence[BoxN], group: Sequence[int], direction: str
    ) -> Tuple[int, float]:
        field = field_from_terms([SpatialTerm(parts=tuple(direction.split()))])
        values = sorted(
            ((spatial_prior(field, boxes[i]), -i) for i in group), reverse=True
        )
        margin = values[0][0] - values[1][0] if len(values) > 1 else math.inf
        return -values[0][1], margin

    def scene(self, index: int) -> Tuple[Sample, RelevanceGrid]:
        s = self.spec
        n = int(self.rng.integers(s.min_objects, s.max_objects + 1))
        ambiguous = n >= 2 and bool(self.rng.random() < s.ambiguity_rate)
        cls = str(self.rng.choice(s.classes))
        color = str(self.rng.choice(s.colors))
        n_same = int(self.rng.integers(2, n + 1)) if ambiguous else 1

        direction: Optional[str] = None
        if ambiguous:
            direction = str(self.rng.choice(s.directions))
            for _ in range(_MAX_LAYOUT_TRIES):
                boxes = self._layout(n)
                target, margin = self._pick_target(boxes, range(n_same), direction)
                if margin >= s.spatial_margin:
                    break
        else:
            boxes = self._layout(n)
            target = 0

        scores = [
            self._score(s.target_score if i < n_same else s.other_score)
            for i in range(n)
        ]

        distractors = [i for i in range(n_same) if i != target] or [
            i for i in range(n) if i != target
        ]
        on_target = not distractors or bool(self.rng.random() < s.fidelity)
        bump = target if on_target else int(self.rng.choice(distractors))
        grid = self._grid(boxes[bump])

        order = [int(i) for i in self.rng.permutation(n)]
        sample = Sample(
            id=f"s{index:06d}",
            width=s.image_size,
            height=s.image_size,
            phrase=phrase_for(color, cls, direction),
            gt=boxes[target],
            category=cls,
            candidates=[Candidate(box=boxes[i], score=scores[i]) for i in order],
            ambiguous=ambiguous,
            spatial=direction,
        )
        return sample, grid

    def generate(self, n_scenes: int) -> List[Tuple[Sample, RelevanceGrid]]:
        out = [self.scene(i) for i in range(n_scenes)]
        log.info(
            "Generated %d scenes (ambiguous=%d)",
            len(out),
            sum(1 for smp, _ in out if smp.ambiguous),
        )
        return out


def generate(
    spec: SceneSpec, n_scenes: int, seed: Optional[int] = None
) -> List[Tuple[Sample, RelevanceGrid]]:
    return SceneGenerator(spec, seed).generate(n_scenes)
