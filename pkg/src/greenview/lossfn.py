"""Softmax, per-image class-frequency weights and the weighted cross-entropy.

Score maps are ``(H, W, C)`` float64 arrays (any number of leading spatial
axes works).  The loss is a sum over valid pixels, not a mean.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import EmptyImage, NonFiniteInput, ShapeMismatch
from .labelspace import VOID, class_histogram

__all__ = [
    "WeightVector",
    "LossValue",
    "softmax",
    "log_softmax",
    "image_weights",
    "uniform_weights",
    "weighted_loss",
    "cross_entropy",
    "loss_gradient",
    "loss_and_gradient",
    "finite_difference_check",
]


@dataclass(frozen=True)
class WeightVector:
    weights: np.ndarray
    counts: np.ndarray

    @property
    def C(self) -> int:
        return self.weights.size


@dataclass(frozen=True)
class LossValue:
    total: float
    per_class: np.ndarray
    valid_pixels: int


def _check_finite(a):
    if not np.isfinite(a).all():
        raise NonFiniteInput("activations contain NaN or inf")


def log_softmax(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    shifted = a - a.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def softmax(a: np.ndarray) -> np.ndarray:
    """Channel-wise softmax over the last axis, max-shifted for stability."""
    a = np.asarray(a, dtype=np.float64)
    if a.shape[-1] < 2:
        raise ShapeMismatch("softmax needs at least 2 channels")
    _check_finite(a)
    e = np.exp(a - a.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def image_weights(y: np.ndarray, C: int) -> WeightVector:
    """Per-image weights ``|y| / (|y_c| * C)``; zero for classes absent from the image.

    ``C`` is the dataset class count, not the number of classes present.
    """
    hist = class_histogram(y, C)
    n = hist.valid
    if n == 0:
        raise EmptyImage()
    counts = hist.counts
    w = np.zeros(C, dtype=np.float64)
    present = counts > 0
    w[present] = n / (counts[present] * float(C))
    return WeightVector(w, counts)


def uniform_weights(y: np.ndarray, C: int) -> WeightVector:
    hist = class_histogram(y, C)
    if hist.valid == 0:
        raise EmptyImage()
    return WeightVector(np.ones(C), hist.counts)


def _prepare(y, a, w):
    y = np.asarray(y)
    a = np.asarray(a, dtype=np.float64)
    if a.shape[:-1] != y.shape:
        raise ShapeMismatch(f"label map {y.shape} vs score map {a.shape}")
    weights = np.asarray(w.weights if isinstance(w, WeightVector) else w, dtype=np.float64)
    if weights.shape != (a.shape[-1],):
        raise ShapeMismatch(f"{weights.size} weights for {a.shape[-1]} channels")
    valid = y != VOID
    if not valid.any():
        raise EmptyImage()
    av = a[valid]
    _check_finite(av)
    return y[valid], av, weights, valid


def weighted_loss(y: np.ndarray, a: np.ndarray, w) -> LossValue:
    """``-sum_x w[t(x)] * log p_t(x)(x)`` over non-void pixels, with ``p`` the softmax of ``a``.

    Void pixels are dropped before any arithmetic, so whatever sits in ``a``
    there (even inf) has no effect.
    """
    t, av, weights, _ = _prepare(y, a, w)
    C = av.shape[-1]
    nll = -log_softmax(av)[np.arange(t.size), t]
    per_class = np.zeros(C)
    np.add.at(per_class, t, nll)
    per_class *= weights
    return LossValue(float(per_class.sum()), per_class, int(t.size))


def cross_entropy(y: np.ndarray, a: np.ndarray) -> float:
    """Plain (unweighted) cross-entropy summed over non-void pixels."""
    y = np.asarray(y)
    valid = y != VOID
    if not valid.any():
        raise EmptyImage()
    av = np.asarray(a, dtype=np.float64)[valid]
    t = y[valid]
    lp = log_softmax(av)
    return float(-lp[np.arange(t.size), t].sum())


def loss_gradient(y: np.ndarray, a: np.ndarray, w) -> np.ndarray:
    """``dL/da = w[t] * (softmax(a) - onehot(t))`` at valid pixels, zero at void pixels."""
    return loss_and_gradient(y, a, w)[1]


def loss_and_gradient(y: np.ndarray, a: np.ndarray, w) -> tuple[LossValue, np.ndarray]:
    t, av, weights, valid = _prepare(y, a, w)
    n, C = av.shape
    lp = log_softmax(av)
    rows = np.arange(n)
    nll = -lp[rows, t]
    per_class = np.zeros(C)
    np.add.at(per_class, t, nll)
    per_class *= weights

    gv = np.exp(lp)
    gv[rows, t] -= 1.0
    gv *= weights[t][:, None]
    grad = np.zeros(np.shape(a), dtype=np.float64)
    grad[valid] = gv
    return LossValue(float(per_class.sum()), per_class, int(n)), grad


def finite_difference_check(
    lossfn: Callable[[np.ndarray], float],
    params: np.ndarray,
    analytic: np.ndarray,
    samples: int | None = None,
    epsilon: float = 1e-4,
    seed: int = 0,
) -> float:
    """Worst relative error between ``analytic`` and central differences of ``lossfn``.

    ``samples`` coordinates are drawn without replacement (all of them when
    ``None`` or larger than the vector).  The relative error denominator is
    ``max(|analytic|, |numeric|, 1e-8)``.
    """
    theta = np.array(params, dtype=np.float64, copy=True).ravel()
    analytic = np.asarray(analytic, dtype=np.float64).ravel()
    if analytic.shape != theta.shape:
        raise ShapeMismatch("analytic gradient and parameter vector differ in size")
    if samples is None or samples >= theta.size:
        coords = np.arange(theta.size)
    else:
        coords = np.sort(np.random.default_rng(seed).choice(theta.size, size=samples, replace=False))
    worst = 0.0
    for i in coords:
        orig = theta[i]
        theta[i] = orig + epsilon
        hi = lossfn(theta)
        theta[i] = orig - epsilon
        lo = lossfn(theta)
        theta[i] = orig
        numeric = (hi - lo) / (2.0 * epsilon)
        denom = max(abs(analytic[i]), abs(numeric), 1e-8)
        worst = max(worst, abs(analytic[i] - numeric) / denom)
    return worst
