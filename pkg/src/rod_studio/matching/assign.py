from typing import List, Optional, Sequence

from rod_studio.config import LossWeights
from rod_studio.fusion.net import TrainingExample
from rod_studio.grounding.priors import PriorBundle
from rod_studio.grounding.sample import Sample
from rod_studio.logging import get_logger
from rod_studio.matching.cost import build_cost
from rod_studio.matching.hungarian import hungarian, row_for_column

log = get_logger("rod_studio.matching")


def match_sample(
    sample: Sample, bundle: PriorBundle, weights: Optional[LossWeights] = None
) -> Optional[int]:
    """Candidate index matched to the ground truth under the prior-aware cost."""
    if not sample.candidates:
        return None
    return row_for_column(hungarian(build_cost(sample, bundle, weights)))


def training_examples(
    samples: Sequence[Sample],
    bundles: Sequence[PriorBundle],
    weights: Optional[LossWeights] = None,
) -> List[TrainingExample]:
    examples = []
    skipped = 0
    for sample, bundle in zip(samples, bundles):
        positive = match_sample(sample, bundle, weights)
        if positive is None:
            skipped += 1
            continue
        examples.append(TrainingExample(bundle=bundle, positive=positive))
    if skipped:
        log.warning("Skipped %d samples without candidates", skipped)
    return examples
