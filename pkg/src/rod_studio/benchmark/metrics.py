from typing import Dict, Mapping, Optional, Sequence

from pydantic import BaseModel, ConfigDict, Field

from rod_studio.errors import EmptyDataset, MissingPrediction, RodStudioError
from rod_studio.grounding.geometry import iou
from rod_studio.grounding.sample import Sample

DEFAULT_IOU_THRESHOLD = 0.5


class Bucket(BaseModel):
    model_config = ConfigDict(frozen=True)

    top1: Optional[float] = None
    n: int = 0


class EvalReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    top1: float
    n: int
    correct: int
    iou_threshold: float
    oracle_top1: float
    by_ambiguity: Dict[str, Bucket] = Field(default_factory=dict)


def is_correct(
    sample: Sample, index: Optional[int], threshold: float = DEFAULT_IOU_THRESHOLD
) -> bool:
    if index is None:
        return False
    if not (0 <= index < len(sample.candidates)):
        raise RodStudioError(
            f"prediction {index} out of range for sample {sample.id!r}",
            id=sample.id,
            index=index,
        )
    return iou(sample.candidates[index].box, sample.gt) >= threshold


def _hits(
    samples: Sequence[Sample],
    predictions: Mapping[str, Optional[int]],
    threshold: float,
) -> Dict[str, bool]:
    hits = {}
    for sample in samples:
        if sample.id not in predictions:
            raise MissingPrediction(sample.id)
        hits[sample.id] = is_correct(sample, predictions[sample.id], threshold)
    return hits


def evaluate(
    samples: Sequence[Sample],
    predictions: Mapping[str, Optional[int]],
    threshold: float = DEFAULT_IOU_THRESHOLD,
) -> float:
    """Top-1 accuracy: share of samples whose chosen box reaches the IoU threshold."""
    if not samples:
        raise EmptyDataset("no samples to evaluate")
    hits = _hits(samples, predictions, threshold)
    return sum(hits.values()) / len(samples)


def oracle_predictions(samples: Sequence[Sample]) -> Dict[str, Optional[int]]:
    """Max-IoU candidate per sample (lowest index on ties)."""
    out: Dict[str, Optional[int]] = {}
    for sample in samples:
        overlaps = [iou(c.box, sample.gt) for c in sample.candidates]
        out[sample.id] = overlaps.index(max(overlaps)) if overlaps else None
    return out


def evaluation_report(
    samples: Sequence[Sample],
    predictions: Mapping[str, Optional[int]],
    threshold: float = DEFAULT_IOU_THRESHOLD,
) -> EvalReport:
    if not samples:
        raise EmptyDataset("no samples to evaluate")
    hits = _hits(samples, predictions, threshold)
    oracle = evaluate(samples, oracle_predictions(samples), threshold)
    buckets = {}
    for name, flag in (("ambiguous", True), ("unambiguous", False)):
        group = [s for s in samples if s.ambiguous is flag]
        correct = sum(hits[s.id] for s in group)
        top1 = correct / len(group) if group else None
        buckets[name] = Bucket(top1=top1, n=len(group))
    correct = sum(hits.values())
    return EvalReport(
        top1=correct / len(samples),
        n=len(samples),
        correct=correct,
        iou_threshold=threshold,
        oracle_top1=oracle,
        by_ambiguity=buckets,
    )
