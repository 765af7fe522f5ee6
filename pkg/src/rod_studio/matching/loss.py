"""Composite training loss over one sample's matched assignment."""

from typing import Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict

from rod_studio.config import LossWeights
from rod_studio.errors import AssignmentMismatch, LengthMismatch
from rod_studio.grounding.geometry import giou, l1_distance
from rod_studio.grounding.priors import PriorBundle
from rod_studio.grounding.sample import Sample

_CLIP = 1e-12


class LossReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    total: float
    cls: float
    bbox: float
    conf: float


def binary_cross_entropy(z: np.ndarray, labels: np.ndarray) -> np.ndarray:
    z = np.clip(z, _CLIP, 1.0 - _CLIP)
    return -(labels * np.log(z) + (1.0 - labels) * np.log(1.0 - z))


def compute_loss(
    sample: Sample,
    bundle: PriorBundle,
    assignment: Sequence[Tuple[int, int]],
    weights: Optional[LossWeights],
    predicted_conf: Sequence[float],
) -> LossReport:
    w = weights or LossWeights()
    k = len(sample.candidates)
    gts = sample.gt_boxes
    z = np.asarray(predicted_conf, dtype=float)
    if len(z) != k or len(bundle) != k:
        raise LengthMismatch(
            "confidence, priors and candidates must have equal length",
            confidences=len(z),
            priors=len(bundle),
            candidates=k,
        )
    labels = np.zeros(k)
    bbox_terms = []
    for row, col in assignment:
        if not (0 <= row < k and 0 <= col < len(gts)):
            raise AssignmentMismatch(
                f"pair ({row}, {col}) outside {k}x{len(gts)}", sample=sample.id
            )
        labels[row] = 1.0
        box, gt = sample.candidates[row].box, gts[col]
        bbox_terms.append(w.l1 * l1_distance(box, gt) + w.giou * (1.0 - giou(box, gt)))

    l_cls = float(np.mean(binary_cross_entropy(z, labels))) if k else 0.0
    l_bbox = float(np.sum(bbox_terms) / len(gts)) if gts else 0.0
    h = np.asarray(bundle.h, dtype=float)
    l_conf = float(np.mean((z - h) ** 2)) if k else 0.0
    total = w.cls * l_cls + l_bbox + w.conf * l_conf
    return LossReport(total=total, cls=l_cls, bbox=l_bbox, conf=l_conf)
