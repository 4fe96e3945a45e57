"""Synthetic driving-regression task, local SGD, and asynchronous aggregation.

The task replaces the image-based driving models with a linear regression
whose labels mix a shared signal, a style-dependent interaction and noise.
A model is evaluated by its test gap (mean absolute error); the global
model is maintained by a freshness- and style-weighted running update.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass

import numpy as np

from .sites import ModelParams, StyleIndicator


class LearningError(ValueError):
    """Dimension mismatch, empty data or numerical failure."""


@dataclass(frozen=True)
class TestGap:
    """Mean absolute prediction error on a test set; zero only for exact fits."""

    e: float

    def __post_init__(self):
        if not (self.e >= 0.0 and math.isfinite(self.e)):
            raise LearningError(f"test gap must be finite and >= 0, got {self.e}")

    def __float__(self) -> float:
        return float(self.e)


class Dataset:
    """Examples of (data features x, style indicator m, label y)."""

    __slots__ = ("x", "m", "y")

    def __init__(self, x, m, y):
        x = np.asarray(x, dtype=np.float64)
        m = np.asarray(m, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        if x.ndim != 2 or x.shape[0] == 0:
            raise LearningError("dataset features must be a non-empty (n, d) array")
        n = x.shape[0]
        if m.shape != (n,) or y.shape != (n,):
            raise LearningError("style and label arrays must have one entry per example")
        if np.any(m < 0.0) or np.any(m > 1.0):
            raise LearningError("style indicators must lie in [0, 1]")
        self.x = x
        self.m = m
        self.y = y

    def __len__(self) -> int:
        return self.x.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.x.shape[1]

    @property
    def model_dim(self) -> int:
        # data features + style feature + bias
        return self.feature_dim + 2

    def design_matrix(self) -> np.ndarray:
        n = len(self)
        return np.hstack([self.x, self.m[:, None], np.ones((n, 1))])


@dataclass(frozen=True)
class LearningTask:
    """Run-level label generator weights, fixed by one seed."""

    w_shared: np.ndarray
    w_style: np.ndarray
    bias: float

    @property
    def dim(self) -> int:
        return int(self.w_shared.size)

    @classmethod
    def from_seed(
        cls,
        seed,
        d: int,
        shared_norm: float = 2.0,
        style_norm: float = 0.5,
        bias: float = 0.3,
    ) -> "LearningTask":
        rng = np.random.default_rng(seed)
        w_shared = rng.standard_normal(d)
        w_shared *= shared_norm / max(np.linalg.norm(w_shared), 1e-12)
        w_style = rng.standard_normal(d)
        w_style *= style_norm / max(np.linalg.norm(w_style), 1e-12)
        return cls(w_shared=w_shared, w_style=w_style, bias=bias)

    def labels(self, x: np.ndarray, m: np.ndarray, noise: np.ndarray | float = 0.0):
        return x @ self.w_shared + (m - 0.5) * (x @ self.w_style) + self.bias + noise


def gen_dataset(
    rng: np.random.Generator,
    n: int,
    task: LearningTask,
    style: StyleIndicator | float,
    sigma: float,
) -> Dataset:
    """Sample a constant-style dataset from the task's label model."""
    if n < 1:
        raise LearningError("dataset size must be >= 1")
    if sigma < 0:
        raise LearningError("noise level must be >= 0")
    x = rng.standard_normal((n, task.dim))
    m = np.full(n, float(style))
    noise = rng.normal(0.0, sigma, n) if sigma > 0 else 0.0
    return Dataset(x, m, task.labels(x, m, noise))


def gen_eval_set(
    rng: np.random.Generator,
    n: int,
    task: LearningTask,
    sigma: float,
    styles: np.ndarray | None = None,
) -> Dataset:
    """Evaluation set with per-example styles (uniform on [0, 1] by default)."""
    x = rng.standard_normal((n, task.dim))
    if styles is None:
        m = rng.uniform(0.0, 1.0, n)
    else:
        m = np.asarray(styles, dtype=np.float64)
        if m.shape != (n,):
            raise LearningError("styles array must have one entry per example")
    noise = rng.normal(0.0, sigma, n) if sigma > 0 else 0.0
    return Dataset(x, m, task.labels(x, m, noise))


def predict(model: ModelParams, dataset: Dataset) -> np.ndarray:
    if model.dim != dataset.model_dim:
        raise LearningError(
            f"model dimension {model.dim} does not match dataset ({dataset.model_dim})"
        )
    return dataset.design_matrix() @ model.theta


def test_gap(model: ModelParams, dataset: Dataset) -> TestGap:
    """Mean absolute error of the model's predictions on the dataset."""
    return TestGap(float(np.mean(np.abs(dataset.y - predict(model, dataset)))))


def mse_loss(model: ModelParams, dataset: Dataset) -> float:
    resid = dataset.y - predict(model, dataset)
    return float(np.mean(resid**2))


def least_squares_fit(datasets: list[Dataset] | Dataset) -> ModelParams:
    """Closed-form least-squares model over the union of the given datasets."""
    if isinstance(datasets, Dataset):
        datasets = [datasets]
    if not datasets:
        raise LearningError("need at least one dataset")
    design = np.vstack([d.design_matrix() for d in datasets])
    labels = np.concatenate([d.y for d in datasets])
    theta, *_ = np.linalg.lstsq(design, labels, rcond=None)
    return ModelParams(theta)


def local_sgd(
    init: ModelParams,
    data: Dataset,
    epochs: int,
    batch_size: int,
    rate: float,
    rng: np.random.Generator,
    delay_dist=None,
) -> tuple[ModelParams, float]:
    """Mini-batch SGD on the squared-error loss; returns (model, completion delay).

    Batches are reshuffled each epoch. The completion delay models the
    vehicle's compute time and is drawn from ``delay_dist(rng)`` when given.
    """
    if rate < 0:
        raise LearningError("learning rate must be >= 0")
    if epochs < 1:
        raise LearningError("need at least one epoch")
    design = data.design_matrix()
    labels = data.y
    n = len(data)
    batch_size = max(1, min(batch_size, n))
    theta = init.theta.copy()
    if theta.size != data.model_dim:
        raise LearningError("initial model does not match dataset dimension")
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(epochs):
            order = rng.permutation(n)
            for start in range(0, n, batch_size):
                idx = order[start : start + batch_size]
                xb = design[idx]
                resid = labels[idx] - xb @ theta
                grad = -2.0 * (xb.T @ resid) / idx.size
                theta -= rate * grad
                if not np.all(np.isfinite(theta)):
                    raise LearningError("SGD diverged to non-finite parameters")
    delay = float(delay_dist(rng)) if delay_dist is not None else 0.0
    return ModelParams(theta), delay


def freshness(t: float, horizon: float) -> float:
    """Time-decay factor e^(1 - t/T) weighting a model submitted at time t."""
    if horizon <= 0:
        raise LearningError("freshness horizon must be positive")
    if not 0.0 <= t <= horizon:
        raise LearningError(f"submission time {t} outside [0, {horizon}]")
    return math.exp(1.0 - t / horizon)


def style_weight(m_t: float, m_avg: float, rule: str = "linear") -> float:
    """Weight from the distance between a style and the population average.

    ``linear`` uses 1 - |m - avg|; ``exponential`` uses e^(-|m - avg|).
    Both peak at 1 when the style matches the average.
    """
    m_t = float(m_t)
    m_avg = float(m_avg)
    if not (0.0 <= m_t <= 1.0 and 0.0 <= m_avg <= 1.0):
        raise LearningError("style values must lie in [0, 1]")
    rel = abs(m_t - m_avg)
    if rule == "linear":
        return 1.0 - rel
    if rule == "exponential":
        return math.exp(-rel)
    raise LearningError(f"unknown style weight rule {rule!r}")


def mixing_coefficient(
    t: float, horizon: float, m_t: float, m_avg: float, rule: str = "linear"
) -> float:
    """Clamped product of style weight and freshness, in [0, 1].

    The raw product exceeds 1 for early submissions (freshness tops out at
    e); clamping keeps the global update a convex combination.
    """
    return min(style_weight(m_t, m_avg, rule) * freshness(t, horizon), 1.0)


@dataclass(frozen=True)
class GlobalModel:
    """Aggregator-side model with version counter and published reference gap."""

    params: ModelParams
    version: int
    reference_gap: float
    last_update: float

    @classmethod
    def initial(cls, dim: int, testset: Dataset | None = None) -> "GlobalModel":
        params = ModelParams.zeros(dim)
        gap = float(test_gap(params, testset)) if testset is not None else math.inf
        return cls(params=params, version=1, reference_gap=gap, last_update=0.0)


def async_update(
    global_model: GlobalModel,
    local: ModelParams,
    t: float,
    horizon: float,
    m_t: float,
    m_avg: float,
    rule: str = "linear",
    rsu_testset: Dataset | None = None,
) -> GlobalModel:
    """Fold one local model into the global one with the clamped mixing weight."""
    if local.dim != global_model.params.dim:
        raise LearningError("local model dimension does not match global model")
    if t < global_model.last_update:
        raise LearningError("updates must arrive in non-decreasing time order")
    w = mixing_coefficient(t, horizon, m_t, m_avg, rule)
    mixed = ModelParams((1.0 - w) * global_model.params.theta + w * local.theta)
    gap = (
        float(test_gap(mixed, rsu_testset))
        if rsu_testset is not None
        else global_model.reference_gap
    )
    return GlobalModel(
        params=mixed,
        version=global_model.version + 1,
        reference_gap=gap,
        last_update=t,
    )


def adaptive_gate(local_gap: float | TestGap, reference_gap: float) -> bool:
    """True when the vehicle should upload (its gap beats the published one).

    False means it downloads the current global model instead; the boundary
    counts as an upload.
    """
    return float(local_gap) <= reference_gap


def rsu_accept(
    received: ModelParams, rsu_testset: Dataset, epsilon: float
) -> bool:
    """Aggregator-side validity check of a received model against its test set."""
    return float(test_gap(received, rsu_testset)) <= epsilon


def fedave_baseline(models: list[ModelParams]) -> ModelParams:
    """Unweighted coordinate mean of local models (synchronous baseline)."""
    if not models:
        raise LearningError("need at least one model to average")
    dim = models[0].dim
    if any(m.dim != dim for m in models):
        raise LearningError("models must share one dimension")
    return ModelParams(np.mean([m.theta for m in models], axis=0))


class StylePath:
    """Piecewise-constant style trajectory m(t) on [0, end)."""

    def __init__(self, breakpoints, values):
        breaks = [float(b) for b in breakpoints]
        vals = [float(v) for v in values]
        if len(breaks) != len(vals):
            raise LearningError("one value per segment start required")
        if breaks != sorted(breaks) or len(set(breaks)) != len(breaks):
            raise LearningError("breakpoints must be strictly increasing")
        if any(not 0.0 <= v <= 1.0 for v in vals):
            raise LearningError("style values must lie in [0, 1]")
        self.breakpoints = breaks
        self.values = vals

    @classmethod
    def constant(cls, value: float) -> "StylePath":
        return cls([0.0], [value])

    def __call__(self, t: float) -> float:
        idx = bisect_right(self.breakpoints, t) - 1
        return self.values[max(idx, 0)]
