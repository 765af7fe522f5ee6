"""The learnable fusion of priors and detector score.

A 3-8-1 perceptron (rectifier hidden layer, logistic output) maps
``[h_s, h_v, p]`` to a confidence ``z`` in (0, 1). Gradients are derived by
hand and the net is trained by full-batch gradient descent with a fixed step,
so a run is a deterministic function of its data, seed and epoch count.
"""

from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.special import expit

from rod_studio.config import FusionConfig, LossWeights
from rod_studio.errors import NoPositives
from rod_studio.grounding.priors import PriorBundle
from rod_studio.logging import get_logger

log = get_logger("rod_studio.fusion")

INPUTS = 3
HIDDEN = 8
OUTPUTS = 1


class FusionNet(BaseModel):
    model_config = ConfigDict(frozen=True)

    layer_sizes: Tuple[int, int, int] = (INPUTS, HIDDEN, OUTPUTS)
    w1: List[List[float]]
    b1: List[float]
    w2: List[List[float]]
    b2: List[float]
    seed: Optional[int] = None
    learning_rate: float = Field(0.05, gt=0.0)

    @model_validator(mode="after")
    def _check_shapes(self) -> "FusionNet":
        if self.layer_sizes != (INPUTS, HIDDEN, OUTPUTS):
            raise ValueError(f"layer sizes must be {(INPUTS, HIDDEN, OUTPUTS)}")
        if np.shape(self.w1) != (HIDDEN, INPUTS) or len(self.b1) != HIDDEN:
            raise ValueError("hidden layer shape mismatch")
        if np.shape(self.w2) != (OUTPUTS, HIDDEN) or len(self.b2) != OUTPUTS:
            raise ValueError("output layer shape mismatch")
        if not all(np.all(np.isfinite(a)) for a in self.arrays()):
            raise ValueError("fusion parameters must be finite")
        return self

    @property
    def parameter_count(self) -> int:
        return sum(a.size for a in self.arrays())

    def arrays(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        return (
            np.asarray(self.w1, dtype=float),
            np.asarray(self.b1, dtype=float),
            np.asarray(self.w2, dtype=float),
            np.asarray(self.b2, dtype=float),
        )

    @classmethod
    def from_arrays(
        cls,
        w1: np.ndarray,
        b1: np.ndarray,
        w2: np.ndarray,
        b2: np.ndarray,
        seed: Optional[int] = None,
        learning_rate: float = 0.05,
    ) -> "FusionNet":
        return cls(
            w1=np.asarray(w1, dtype=float).tolist(),
            b1=np.asarray(b1, dtype=float).tolist(),
            w2=np.asarray(w2, dtype=float).tolist(),
            b2=np.asarray(b2, dtype=float).tolist(),
            seed=seed,
            learning_rate=learning_rate,
        )


def init_fusion_net(
    seed: int, learning_rate: float = 0.05, init_scale: float = 0.5
) -> FusionNet:
    """Parameters drawn uniformly from ``[-init_scale, init_scale]``."""
    rng = np.random.default_rng(seed)
    return FusionNet.from_arrays(
        rng.uniform(-init_scale, init_scale, size=(HIDDEN, INPUTS)),
        rng.uniform(-init_scale, init_scale, size=HIDDEN),
        rng.uniform(-init_scale, init_scale, size=(OUTPUTS, HIDDEN)),
        rng.uniform(-init_scale, init_scale, size=OUTPUTS),
        seed=seed,
        learning_rate=learning_rate,
    )


def zero_fusion_net(learning_rate: float = 0.05) -> FusionNet:
    return FusionNet.from_arrays(
        np.zeros((HIDDEN, INPUTS)),
        np.zeros(HIDDEN),
        np.zeros((OUTPUTS, HIDDEN)),
        np.zeros(OUTPUTS),
        learning_rate=learning_rate,
    )


class _Cache(NamedTuple):
    x: np.ndarray
    pre: np.ndarray
    hidden: np.ndarray
    z: np.ndarray


class FusionGradients(NamedTuple):
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    inputs: np.ndarray


def _forward(params: Sequence[np.ndarray], x: np.ndarray) -> Tuple[np.ndarray, _Cache]:
    w1, b1, w2, b2 = params
    pre = x @ w1.T + b1
    hidden = np.maximum(pre, 0.0)
    logits = (hidden @ w2.T + b2).reshape(-1)
    z = expit(logits)
    return logits, _Cache(x=x, pre=pre, hidden=hidden, z=z)


def _backward(
    params: Sequence[np.ndarray], cache: _Cache, d_logits: np.ndarray
) -> FusionGradients:
    """Gradients given dL/d(logit) per row, summed over rows."""
    w1, _, w2, _ = params
    d_logits = d_logits.reshape(-1)
    g_w2 = (d_logits @ cache.hidden).reshape(OUTPUTS, HIDDEN)
    g_b2 = np.array([d_logits.sum()])
    d_hidden = np.outer(d_logits, w2.reshape(-1))
    d_pre = d_hidden * (cache.pre > 0.0)
    g_w1 = d_pre.T @ cache.x
    g_b1 = d_pre.sum(axis=0)
    g_x = d_pre @ w1
    return FusionGradients(w1=g_w1, b1=g_b1, w2=g_w2, b2=g_b2, inputs=g_x)


def forward_batch(net: FusionNet, features: np.ndarray) -> np.ndarray:
    """Confidence per row of an ``(K, 3)`` feature matrix."""
    x = np.asarray(features, dtype=float).reshape(-1, INPUTS)
    _, cache = _forward(net.arrays(), x)
    return cache.z


def fuse_forward(net: FusionNet, h_s: float, h_v: float, p: float) -> float:
    return float(forward_batch(net, np.array([[h_s, h_v, p]]))[0])


def fuse_backward(
    net: FusionNet, inputs: Sequence[float], upstream: float
) -> FusionGradients:
    """Exact gradients of ``upstream * z`` w.r.t. every parameter and input."""
    params = net.arrays()
    x = np.asarray(inputs, dtype=float).reshape(1, INPUTS)
    _, cache = _forward(params, x)
    z = cache.z
    grads = _backward(params, cache, upstream * z * (1.0 - z))
    return grads._replace(inputs=grads.inputs.reshape(INPUTS))


class TrainingExample(BaseModel):
    """A sample's priors plus the index of its matched (positive) candidate."""

    model_config = ConfigDict(frozen=True)

    bundle: PriorBundle
    positive: Optional[int] = None


class TrainingResult(NamedTuple):
    net: FusionNet
    loss_trace: List[float]


def _stack(
    dataset: Sequence[TrainingExample],
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    xs, ys, hs = [], [], []
    for i, example in enumerate(dataset):
        k = len(example.bundle)
        if example.positive is None or not (0 <= example.positive < k):
            raise NoPositives(
                f"training example {i} has no matched candidate",
                index=i,
                positive=example.positive,
            )
        labels = np.zeros(k)
        labels[example.positive] = 1.0
        xs.append(example.bundle.features())
        ys.append(labels)
        hs.append(np.asarray(example.bundle.h, dtype=float))
    if not xs:
        return np.zeros((0, INPUTS)), np.zeros(0), np.zeros(0)
    return np.vstack(xs), np.concatenate(ys), np.concatenate(hs)


def objective(
    logits: np.ndarray,
    z: np.ndarray,
    labels: np.ndarray,
    soft: np.ndarray,
    weights: LossWeights,
) -> float:
    """Mean of weighted BCE toward labels plus weighted MSE toward priors."""
    bce = np.logaddexp(0.0, logits) - labels * logits
    mse = (z - soft) ** 2
    return float(np.mean(weights.cls * bce + weights.conf * mse))


def train_fusion(
    dataset: Sequence[TrainingExample],
    epochs: int,
    seed: int = 0,
    net: Optional[FusionNet] = None,
    weights: Optional[LossWeights] = None,
    config: Optional[FusionConfig] = None,
) -> TrainingResult:
    """Full-batch gradient descent on the per-candidate objective.

    Starts from ``net`` when given (fine-tuning), otherwise from a seeded
    uniform initialization. ``loss_trace[e]`` is the objective before update
    ``e``.
    """
    cfg = config or FusionConfig()
    w = weights or LossWeights()
    if net is None:
        net = init_fusion_net(
            seed, learning_rate=cfg.learning_rate, init_scale=cfg.init_scale
        )
    x, labels, soft = _stack(dataset)
    if epochs <= 0 or x.shape[0] == 0:
        return TrainingResult(net=net, loss_trace=[])

    lr = net.learning_rate
    params = [a.copy() for a in net.arrays()]
    m = x.shape[0]
    trace: List[float] = []
    log.info(
        "Training fusion net: samples=%d rows=%d epochs=%d lr=%g",
        len(dataset),
        m,
        epochs,
        lr,
    )
    for epoch in range(epochs):
        logits, cache = _forward(params, x)
        z = cache.z
        trace.append(objective(logits, z, labels, soft, w))
        d_logits = (
            w.cls * (z - labels) + w.conf * 2.0 * (z - soft) * z * (1.0 - z)
        ) / m
        grads = _backward(params, cache, d_logits)
        for p, g in zip(params, (grads.w1, grads.b1, grads.w2, grads.b2)):
            p -= lr * g
        if epoch % 100 == 0:
            log.debug("epoch=%d loss=%.6f", epoch, trace[-1])
    log.info("Training finished: first=%.6f last=%.6f", trace[0], trace[-1])
    trained = FusionNet.from_arrays(*params, seed=net.seed, learning_rate=lr)
    return TrainingResult(net=trained, loss_trace=trace)
