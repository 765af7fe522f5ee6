import math

import numpy as np
import pytest

from rod_studio.config import LossWeights
from rod_studio.errors import AssignmentMismatch, LengthMismatch
from rod_studio.grounding.geometry import BoxN, giou, l1_distance
from rod_studio.grounding.priors import PriorBundle
from rod_studio.grounding.sample import Candidate, Sample
from rod_studio.matching.assign import match_sample, training_examples
from rod_studio.matching.cost import build_cost, combine
from rod_studio.matching.hungarian import hungarian
from rod_studio.matching.loss import compute_loss

GT = BoxN.of([0.2, 0.2, 0.6, 0.6])


def _sample(boxes, scores, gt=GT):
    return Sample(
        id="m",
        width=10,
        height=10,
        phrase="the cup",
        gt=gt,
        candidates=[Candidate(box=BoxN.of(b), score=s) for b, s in zip(boxes, scores)],
    )


def _bundle(h, p):
    # h_s = h_v = h makes the aggregated prior exactly h
    return PriorBundle.build(h, h, p)


def test_perfect_candidate_with_full_prior():
    sample = _sample([GT.as_list()], [1.0])
    cost = build_cost(sample, _bundle([1.0], [1.0]), LossWeights())
    assert cost.total[0, 0] == -1.0


def test_perfect_candidate_without_prior():
    sample = _sample([GT.as_list()], [1.0])
    cost = build_cost(sample, _bundle([0.0], [1.0]))
    assert cost.total[0, 0] == 0.0


def test_prior_difference_is_linear():
    sample = _sample([[0.1, 0.1, 0.5, 0.5]] * 2, [0.7, 0.7])
    cost = build_cost(sample, _bundle([0.9, 0.1], [0.7, 0.7]))
    assert cost.total[0, 0] < cost.total[1, 0]
    assert cost.total[1, 0] - cost.total[0, 0] == pytest.approx(0.8, abs=1e-12)


def test_per_cell_decomposition_identity():
    rng = np.random.default_rng(4)
    w = LossWeights(l1=3.0, giou=1.5, prior=0.7)
    for _ in range(50):
        k = int(rng.integers(1, 6))
        boxes = []
        for _ in range(k):
            x = np.sort(rng.uniform(0, 1, 2))
            y = np.sort(rng.uniform(0, 1, 2))
            boxes.append([x[0], y[0], x[1], y[1]])
        p = list(rng.uniform(0, 1, k))
        hs, hv = list(rng.uniform(0, 1, k)), list(rng.uniform(0, 1, k))
        sample = _sample(boxes, p)
        bundle = PriorBundle.build(hs, hv, p)
        cost = build_cost(sample, bundle, w)
        for i, cand in enumerate(sample.candidates):
            cls = 1.0 - p[i]
            l1 = l1_distance(cand.box, GT)
            g = 1.0 - giou(cand.box, GT)
            h = bundle.h[i]
            assert cost.cls[i, 0] == cls
            assert cost.l1[i, 0] == l1
            assert cost.giou[i, 0] == g
            assert cost.prior[i, 0] == h
            assert cost.total[i, 0] == cls + w.l1 * l1 + w.giou * g - w.prior * h


def test_zero_prior_weight_reproduces_plain_cost():
    rng = np.random.default_rng(6)
    boxes = [[0.1, 0.1, 0.3, 0.4], [0.2, 0.25, 0.55, 0.7], [0.6, 0.6, 0.9, 0.95]]
    p = [0.3, 0.8, 0.5]
    sample = _sample(boxes, p)
    bundle = PriorBundle.build(list(rng.uniform(0, 1, 3)), [0.2, 0.9, 0.4], p)
    with_h = build_cost(sample, bundle, LossWeights(prior=0.0))
    plain = np.array(
        [
            [
                (1.0 - p[i])
                + 5.0 * l1_distance(BoxN.of(b), GT)
                + 2.0 * (1.0 - giou(BoxN.of(b), GT))
            ]
            for i, b in enumerate(boxes)
        ]
    )
    assert np.array_equal(with_h.total, plain)


def test_combine_matches_built_total():
    sample = _sample([[0.1, 0.1, 0.5, 0.5]], [0.4])
    cost = build_cost(sample, _bundle([0.3], [0.4]))
    again = combine(cost.cls, cost.l1, cost.giou, cost.prior, cost.weights)
    assert np.array_equal(again, cost.total)


def test_bundle_length_must_match_candidates():
    with pytest.raises(LengthMismatch):
        build_cost(_sample([GT.as_list()], [0.5]), _bundle([0.1, 0.2], [0.5, 0.5]))


def test_matching_prefers_max_prior():
    rng = np.random.default_rng(31)
    for _ in range(1000):
        k = int(rng.integers(2, 7))
        box = [0.3, 0.3, 0.7, 0.7]
        sample = _sample([box] * k, [0.6] * k)
        h = rng.permutation(np.linspace(0.05, 0.95, k))
        bundle = _bundle(list(h), [0.6] * k)
        assert hungarian(build_cost(sample, bundle)) == [(int(np.argmax(h)), 0)]
        assert match_sample(sample, bundle) == int(np.argmax(h))


def test_conf_loss_vanishes_when_z_equals_h():
    sample = _sample([GT.as_list(), [0.0, 0.0, 0.1, 0.1]], [0.9, 0.2])
    bundle = _bundle([0.7, 0.2], [0.9, 0.2])
    report = compute_loss(sample, bundle, [(0, 0)], None, bundle.h)
    assert report.conf == 0.0


def test_bbox_loss_vanishes_for_exact_match():
    sample = _sample([GT.as_list(), [0.0, 0.0, 0.1, 0.1]], [0.9, 0.2])
    bundle = _bundle([0.7, 0.2], [0.9, 0.2])
    report = compute_loss(sample, bundle, [(0, 0)], None, [0.8, 0.1])
    assert report.bbox == 0.0


def test_single_candidate_loss_by_hand():
    cand = [0.3, 0.3, 0.7, 0.7]
    sample = _sample([cand], [0.5])
    bundle = _bundle([0.9], [0.5])
    report = compute_loss(sample, bundle, [(0, 0)], LossWeights(), [0.5])
    # candidate is GT shifted by 0.1 on every coordinate
    inter = 0.3 * 0.3
    union = 0.16 + 0.16 - inter
    enclosing = 0.5 * 0.5
    g = inter / union - (enclosing - union) / enclosing
    expected = math.log(2.0) + 5 * 0.4 + 2 * (1 - g) + (0.5 - 0.9) ** 2
    assert report.total == pytest.approx(expected, rel=1e-9)
    assert report.cls == pytest.approx(math.log(2.0))
    assert report.conf == pytest.approx(0.16)


def test_assignment_out_of_range():
    sample = _sample([GT.as_list()], [0.5])
    bundle = _bundle([0.5], [0.5])
    with pytest.raises(AssignmentMismatch):
        compute_loss(sample, bundle, [(1, 0)], None, [0.5])
    with pytest.raises(AssignmentMismatch):
        compute_loss(sample, bundle, [(0, 1)], None, [0.5])


def test_training_examples_skip_empty_samples():
    full = _sample([GT.as_list(), [0.0, 0.0, 0.1, 0.1]], [0.5, 0.5])
    empty = _sample([], [])
    examples = training_examples(
        [full, empty],
        [_bundle([0.5, 0.5], [0.5, 0.5]), _bundle([], [])],
    )
    assert len(examples) == 1
    assert examples[0].positive == 0
