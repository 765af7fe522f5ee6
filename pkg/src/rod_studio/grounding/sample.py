from typing import List, Optional

from pydantic import BaseModel, ConfigDict, Field

from rod_studio.grounding.geometry import BoxN


class Candidate(BaseModel):
    model_config = ConfigDict(frozen=True)

    box: BoxN
    score: float = Field(..., ge=0.0, le=1.0)


class Sample(BaseModel):
    """One image-phrase pair with its detector candidates and ground truth."""

    model_config = ConfigDict(frozen=True)

    id: str
    width: int = Field(..., ge=1)
    height: int = Field(..., ge=1)
    phrase: str
    gt: BoxN
    category: str = ""
    candidates: List[Candidate] = Field(default_factory=list)
    ambiguous: bool = False
    spatial: Optional[str] = None

    @property
    def gt_boxes(self) -> List[BoxN]:
        return [self.gt]

    @property
    def scores(self) -> List[float]:
        return [c.score for c in self.candidates]
