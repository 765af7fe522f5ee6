"""On-disk record shapes for samples, relevance maps and predictions."""

import math
from typing import Dict, List, Literal, Optional, Sequence

from pydantic import BaseModel, ConfigDict, Field, field_validator

from rod_studio.errors import InvalidBox
from rod_studio.grounding.geometry import BoxN, area
from rod_studio.grounding.phrase import tokenize
from rod_studio.grounding.priors import RelevanceGrid
from rod_studio.grounding.sample import Candidate, Sample

BoxFormat = Literal["xyxy_norm", "xywh_px"]
DEFAULT_BOX_FORMAT: BoxFormat = "xywh_px"


class Header(BaseModel):
    box_format: BoxFormat = DEFAULT_BOX_FORMAT


def _to_box(coords: Sequence[float], fmt: BoxFormat, w: int, h: int) -> BoxN:
    if fmt == "xyxy_norm":
        return BoxN.of(coords)
    return BoxN.from_xywh_pixels(coords, w, h)


class CandidateRecord(BaseModel):
    box: List[float] = Field(..., min_length=4, max_length=4)
    score: float

    @field_validator("score")
    @classmethod
    def _finite_score(cls, v: float) -> float:
        if not math.isfinite(v) or not (0.0 <= v <= 1.0):
            raise ValueError(f"score must be finite and in [0,1], got {v}")
        return v


class SampleRecord(BaseModel):
    id: str
    w: int = Field(..., ge=1)
    h: int = Field(..., ge=1)
    phrase: str
    gt: List[float] = Field(..., min_length=4, max_length=4)
    category: str = ""
    candidates: List[CandidateRecord] = Field(default_factory=list)
    ambiguous: bool = False
    spatial: Optional[str] = None

    def to_sample(self, fmt: BoxFormat = DEFAULT_BOX_FORMAT) -> Sample:
        tokenize(self.phrase)
        gt = _to_box(self.gt, fmt, self.w, self.h)
        if area(gt) <= 0.0:
            raise InvalidBox(f"ground truth of {self.id!r} has zero area", id=self.id)
        return Sample(
            id=self.id,
            width=self.w,
            height=self.h,
            phrase=self.phrase,
            gt=gt,
            category=self.category,
            candidates=[
                Candidate(box=_to_box(c.box, fmt, self.w, self.h), score=c.score)
                for c in self.candidates
            ],
            ambiguous=self.ambiguous,
            spatial=self.spatial,
        )

    @classmethod
    def from_sample(cls, sample: Sample) -> "SampleRecord":
        """Normalized xyxy record; pair with a ``xyxy_norm`` header."""
        return cls(
            id=sample.id,
            w=sample.width,
            h=sample.height,
            phrase=sample.phrase,
            gt=sample.gt.as_list(),
            category=sample.category,
            candidates=[
                CandidateRecord(box=c.box.as_list(), score=c.score)
                for c in sample.candidates
            ],
            ambiguous=sample.ambiguous,
            spatial=sample.spatial,
        )


class RelmapRecord(BaseModel):
    id: str
    w: int = Field(..., ge=1)
    h: int = Field(..., ge=1)
    values: List[float]

    def to_grid(self) -> RelevanceGrid:
        return RelevanceGrid.from_values(self.w, self.h, self.values)

    @classmethod
    def from_grid(cls, sample_id: str, grid: RelevanceGrid) -> "RelmapRecord":
        return cls(
            id=sample_id, w=grid.width, h=grid.height, values=list(grid.values)
        )


class PredictionsFile(BaseModel):
    model_config = ConfigDict(frozen=True)

    mode: str
    top_n: Optional[int] = None
    predictions: Dict[str, Optional[int]]
