"""Loss kernels on class probabilities, each returning ``(value, grad)``.

Every kernel takes probabilities (not logits) and returns the gradient with
respect to those probabilities. Targets are constants. Reductions are means
over the participating points.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import IGNORE

EPS = 1e-12
RCE_LOG_ZERO = -4.0


@dataclass(frozen=True)
class LossWeights:
    seg: float = 1.0
    r: float = 1.0
    a: float = 1.0
    m: float = 1.0

    def __post_init__(self):
        for name in ("seg", "r", "a", "m"):
            w = getattr(self, name)
            if not (np.isfinite(w) and w >= 0):
                raise ValueError(f"weight lambda_{name} must be finite and >= 0, got {w}")

    def as_dict(self) -> dict:
        return {"lambda_seg": self.seg, "lambda_r": self.r, "lambda_a": self.a, "lambda_m": self.m}


@dataclass
class LossReport:
    value: float
    terms: dict
    weights: LossWeights
    counts: dict
    gradient: np.ndarray          # w.r.t. the unaugmented prediction
    stack_gradient: np.ndarray = field(repr=False)  # w.r.t. every stack slice

    def to_dict(self) -> dict:
        return {"value": self.value, "terms": dict(self.terms),
                "weights": self.weights.as_dict(), "counts": dict(self.counts)}


def _labeled(labels, P):
    labels = np.asarray(labels, dtype=np.int64)
    P = np.asarray(P, dtype=np.float64)
    if P.ndim != 2 or labels.shape != (P.shape[0],):
        raise ValueError(f"labels {labels.shape} and probabilities {P.shape} are not aligned")
    idx = np.flatnonzero(labels != IGNORE)
    return labels, P, idx


def _floor(x):
    return np.maximum(x, EPS)


def ce(labels, P):
    """Mean ``-log P[i, y_i]`` over labeled points."""
    labels, P, idx = _labeled(labels, P)
    if len(idx) == 0:
        raise ValueError("cross-entropy needs at least one labeled point")
    n = len(idx)
    py = P[idx, labels[idx]]
    value = float(-np.log(_floor(py)).sum() / n)
    grad = np.zeros_like(P)
    grad[idx, labels[idx]] = np.where(py > EPS, -1.0 / (n * _floor(py)), 0.0)
    return value, grad


def kl(Q, P, select=None):
    """Mean ``sum_c Q log(Q / P)`` over selected rows; Q is held constant."""
    Q = np.asarray(Q, dtype=np.float64)
    P = np.asarray(P, dtype=np.float64)
    if Q.shape != P.shape:
        raise ValueError(f"target {Q.shape} and prediction {P.shape} differ in shape")
    idx = np.arange(len(P)) if select is None else np.flatnonzero(np.asarray(select, dtype=bool))
    if len(idx) == 0:
        raise ValueError("KL divergence needs a non-empty selection")
    n = len(idx)
    q, p = Q[idx], P[idx]
    pos = q > 0
    value = float(np.where(pos, q * (np.log(_floor(q)) - np.log(_floor(p))), 0.0).sum() / n)
    grad = np.zeros_like(P)
    grad[idx] = np.where(p > EPS, -q / (n * _floor(p)), 0.0)
    return value, grad


def nce(labels, P):
    """Normalized cross-entropy: ``-log P_y / -sum_j log P_j``, averaged over labeled points."""
    labels, P, idx = _labeled(labels, P)
    if len(idx) == 0:
        raise ValueError("normalized cross-entropy needs at least one labeled point")
    n = len(idx)
    p = _floor(P[idx])
    logp = np.log(p)
    a = -logp[np.arange(n), labels[idx]]
    b = -logp.sum(axis=1)
    value = float((a / b).sum() / n)
    # d(a/b)/dP_k = (a - [k == y] b) / (P_k b^2)
    onehot = np.zeros_like(p)
    onehot[np.arange(n), labels[idx]] = 1.0
    g = (a[:, None] - onehot * b[:, None]) / (p * (b * b)[:, None])
    g[P[idx] <= EPS] = 0.0
    grad = np.zeros_like(P)
    grad[idx] = g / n
    return value, grad


def rce(labels, P, A: float = RCE_LOG_ZERO):
    """Reverse cross-entropy ``-sum_k P_k log q_k`` with one-hot q and ``log 0 := A``."""
    labels, P, idx = _labeled(labels, P)
    if len(idx) == 0:
        raise ValueError("reverse cross-entropy needs at least one labeled point")
    n = len(idx)
    p = P[idx]
    off = np.ones_like(p)
    off[np.arange(n), labels[idx]] = 0.0
    value = float((-A * (p * off).sum(axis=1)).sum() / n)
    grad = np.zeros_like(P)
    grad[idx] = -A * off / n
    return value, grad


def _slices(stack):
    P = getattr(stack, "probs", stack)
    return np.asarray(P, dtype=np.float64)


def loss_r(hard, stack, reliable):
    """Cross-entropy of hard reliable labels against each augmented slice, summed over slices.

    Returns ``(value, grads)`` with ``grads`` shaped like the full stack (slice 0 untouched).
    """
    P = _slices(stack)
    labels = np.where(np.asarray(reliable, dtype=bool), np.asarray(hard, dtype=np.int64), IGNORE)
    grads = np.zeros_like(P)
    if not np.any(labels != IGNORE):
        return 0.0, grads
    value = 0.0
    for j in range(1, P.shape[0]):
        v, g = ce(labels, P[j])
        value += v
        grads[j] = g
    return value, grads


def loss_a(soft, stack, reliable):
    """KL from the soft mean prediction to each augmented slice on ambiguous points, summed."""
    P = _slices(stack)
    ambiguous = ~np.asarray(reliable, dtype=bool)
    grads = np.zeros_like(P)
    if not ambiguous.any():
        return 0.0, grads
    value = 0.0
    for j in range(1, P.shape[0]):
        v, g = kl(soft, P[j], ambiguous)
        value += v
        grads[j] = g
    return value, grads


def loss_m(labels, P, A: float = RCE_LOG_ZERO):
    """NCE + RCE on the (noisy) expanded labels."""
    labels = np.asarray(labels, dtype=np.int64)
    P = np.asarray(P, dtype=np.float64)
    if not np.any(labels != IGNORE):
        return 0.0, np.zeros_like(P)
    v1, g1 = nce(labels, P)
    v2, g2 = rce(labels, P, A)
    return v1 + v2, g1 + g2


def total_loss(Y, Ytilde, split, stack, weights: LossWeights | None = None,
               A: float = RCE_LOG_ZERO) -> LossReport:
    """Weighted sum of the segmentation, reliable, ambiguous and expanded-label terms.

    Terms with zero weight are still evaluated so the report is complete.
    """
    w = weights or LossWeights()
    P = _slices(stack)
    Y = np.asarray(Y, dtype=np.int64)
    Ytilde = np.asarray(Ytilde, dtype=np.int64)
    if not (len(Y) == len(Ytilde) == P.shape[1] == len(split.reliable)):
        raise ValueError("labels, split and stack must cover the same points")

    seg, g_seg = ce(Y, P[0])
    r, g_r = loss_r(split.hard, P, split.reliable)
    a, g_a = loss_a(split.soft, P, split.reliable)
    m, g_m = loss_m(Ytilde, P[0], A)

    grad = w.r * g_r + w.a * g_a
    grad[0] += w.seg * g_seg + w.m * g_m
    value = w.seg * seg + w.r * r + w.a * a + w.m * m
    counts = {"sparse": int(np.count_nonzero(Y != IGNORE)),
              "reliable": int(np.count_nonzero(split.reliable)),
              "ambiguous": int(np.count_nonzero(~np.asarray(split.reliable))),
              "expanded": int(np.count_nonzero(Ytilde != IGNORE)),
              "augmented_slices": int(P.shape[0] - 1)}
    return LossReport(value=float(value), terms={"seg": seg, "r": r, "a": a, "m": m},
                      weights=w, counts=counts, gradient=grad[0], stack_gradient=grad)
