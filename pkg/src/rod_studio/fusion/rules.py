"""Stage-specific integration of priors with the detector score."""

from enum import Enum
from typing import List, Optional

import numpy as np

from rod_studio.errors import EmptyCandidates, RodStudioError
from rod_studio.fusion.net import FusionNet, forward_batch
from rod_studio.grounding.priors import PriorBundle


class Stage(str, Enum):
    REFERENCE_GEN = "reference_gen"
    FINAL_PREDICTION = "final_prediction"
    MATCHING = "matching"


class Rule(str, Enum):
    ADDITIVE = "additive"
    LEARNED_MLP = "learned_mlp"
    COST_SUBTRACTION = "cost_subtraction"


ALLOWED_RULES = {
    Stage.REFERENCE_GEN: frozenset({Rule.ADDITIVE}),
    Stage.FINAL_PREDICTION: frozenset({Rule.ADDITIVE, Rule.LEARNED_MLP}),
    Stage.MATCHING: frozenset({Rule.COST_SUBTRACTION}),
}


class StageRule:
    """A (stage, rule) pairing; construction rejects pairings a stage can't use."""

    __slots__ = ("stage", "rule")

    def __init__(self, stage: Stage, rule: Rule) -> None:
        stage, rule = Stage(stage), Rule(rule)
        if rule not in ALLOWED_RULES[stage]:
            raise RodStudioError(
                f"rule {rule.value} is not valid for stage {stage.value}",
                stage=stage.value,
                rule=rule.value,
            )
        self.stage = stage
        self.rule = rule

    def __eq__(self, other: object) -> bool:
        return (
            isinstance(other, StageRule)
            and (self.stage, self.rule) == (other.stage, other.rule)
        )

    def __hash__(self) -> int:
        return hash((self.stage, self.rule))

    def __repr__(self) -> str:
        return f"StageRule({self.stage.value}, {self.rule.value})"


class Mode(str, Enum):
    DETECTOR = "detector"
    ZERO_SHOT = "zeroshot"
    LEARNED = "learned"


def stage_rule_for(mode: Mode) -> StageRule:
    if Mode(mode) is Mode.LEARNED:
        return StageRule(Stage.FINAL_PREDICTION, Rule.LEARNED_MLP)
    return StageRule(Stage.FINAL_PREDICTION, Rule.ADDITIVE)


def _ranked(values: np.ndarray) -> np.ndarray:
    # Stable sort on the negated values keeps lower indices first on ties.
    return np.argsort(-values, kind="stable")


def rank_top_n(bundle: PriorBundle, n: int, use_priors: bool = True) -> List[int]:
    """Indices of the ``n`` largest ``p + h_s + h_v`` values, best first.

    With ``use_priors=False`` references are ranked by the detector score alone.
    """
    if n < 1:
        raise RodStudioError("n must be at least 1", n=n)
    values = bundle.additive() if use_priors else np.asarray(bundle.p, dtype=float)
    return [int(i) for i in _ranked(values)[:n]]


def candidate_scores(
    bundle: PriorBundle, mode: Mode, net: Optional[FusionNet] = None
) -> np.ndarray:
    """The per-candidate quantity the final argmax runs over."""
    mode = Mode(mode)
    if mode is Mode.DETECTOR:
        return np.asarray(bundle.p, dtype=float)
    if mode is Mode.ZERO_SHOT:
        return bundle.additive()
    if net is None:
        raise RodStudioError("learned mode needs a fusion net", mode=mode.value)
    return forward_batch(net, bundle.features())


def predict(
    bundle: PriorBundle, mode: Mode, net: Optional[FusionNet] = None
) -> int:
    if len(bundle) == 0:
        raise EmptyCandidates("no candidates to select from")
    return int(np.argmax(candidate_scores(bundle, mode, net)))


def select(
    bundle: PriorBundle,
    mode: Mode,
    net: Optional[FusionNet] = None,
    top_n: Optional[int] = None,
    reference_priors: bool = True,
) -> int:
    """Final prediction restricted to the top-N reference set.

    Ties inside the reference set resolve to the lowest candidate index.
    """
    if len(bundle) == 0:
        raise EmptyCandidates("no candidates to select from")
    if top_n is None:
        return predict(bundle, mode, net)
    refs = sorted(rank_top_n(bundle, top_n, use_priors=reference_priors))
    scores = candidate_scores(bundle, mode, net)[refs]
    return refs[int(np.argmax(scores))]
