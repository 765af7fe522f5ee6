from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict

from rod_studio.config import LossWeights
from rod_studio.errors import LengthMismatch, NonFiniteCost
from rod_studio.grounding.geometry import giou, l1_distance
from rod_studio.grounding.priors import PriorBundle
from rod_studio.grounding.sample import Sample


class CostMatrix(BaseModel):
    """Prediction-by-ground-truth matching cost with its components kept.

    Rows are candidates and columns ground-truth boxes. Each cell satisfies
    ``total = cls + l1_w * l1 + giou_w * giou - prior_w * prior``.
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    cls: np.ndarray
    l1: np.ndarray
    giou: np.ndarray
    prior: np.ndarray
    total: np.ndarray
    weights: LossWeights

    @property
    def shape(self):
        return self.total.shape


def combine(
    cls: np.ndarray,
    l1: np.ndarray,
    giou_cost: np.ndarray,
    prior: np.ndarray,
    weights: LossWeights,
) -> np.ndarray:
    return cls + weights.l1 * l1 + weights.giou * giou_cost - weights.prior * prior


def build_cost(
    sample: Sample, bundle: PriorBundle, weights: Optional[LossWeights] = None
) -> CostMatrix:
    w = weights or LossWeights()
    candidates = sample.candidates
    if len(bundle) != len(candidates):
        raise LengthMismatch(
            f"{len(bundle)} prior values for {len(candidates)} candidates",
            sample=sample.id,
        )
    gts = sample.gt_boxes
    shape = (len(candidates), len(gts))
    p = np.asarray(bundle.p, dtype=float).reshape(-1, 1)
    h = np.asarray(bundle.h, dtype=float).reshape(-1, 1)
    cls = np.broadcast_to(1.0 - p, shape).copy()
    prior = np.broadcast_to(h, shape).copy()
    l1 = np.zeros(shape)
    giou_cost = np.zeros(shape)
    for i, cand in enumerate(candidates):
        for j, gt in enumerate(gts):
            l1[i, j] = l1_distance(cand.box, gt)
            giou_cost[i, j] = 1.0 - giou(cand.box, gt)
    total = combine(cls, l1, giou_cost, prior, w)
    if not np.all(np.isfinite(total)):
        raise NonFiniteCost("cost matrix has non-finite entries", sample=sample.id)
    return CostMatrix(
        cls=cls, l1=l1, giou=giou_cost, prior=prior, total=total, weights=w
    )
