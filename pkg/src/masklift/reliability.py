"""Prediction stacks over augmented clouds and the reliable/ambiguous split."""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree
from scipy.spatial.transform import Rotation

from .core import IGNORE, PointCloud

DEFAULT_TAU = 0.9
DEFAULT_KAPPA = 0.01
DEFAULT_K = 2
DEFAULT_KNN = 8
DEFAULT_TEMPERATURE = 0.1


@dataclass(frozen=True)
class AugmentParams:
    rotation: tuple = (0.0, 0.0, 0.0)  # xyz Euler angles, radians
    scale: tuple = (1.0, 1.0, 1.0)
    translation: tuple = (0.0, 0.0, 0.0)
    jitter_sigma: float = 0.0

    def __post_init__(self):
        if len(self.rotation) != 3 or len(self.scale) != 3 or len(self.translation) != 3:
            raise ValueError("rotation, scale and translation must have 3 components")
        if not all(0.5 <= s <= 2.0 for s in self.scale):
            raise ValueError(f"scale components must be in [0.5, 2.0], got {self.scale}")
        if self.jitter_sigma < 0:
            raise ValueError("jitter_sigma must be >= 0")

    @classmethod
    def random(cls, rng: np.random.Generator, max_angle=np.deg2rad(10.0), scale_range=(0.9, 1.1),
               max_shift=0.1, jitter_sigma=0.005) -> "AugmentParams":
        return cls(rotation=tuple(rng.uniform(-max_angle, max_angle, 3)),
                   scale=tuple(rng.uniform(*scale_range, 3)),
                   translation=tuple(rng.uniform(-max_shift, max_shift, 3)),
                   jitter_sigma=float(jitter_sigma))

    def rotation_matrix(self) -> np.ndarray:
        return Rotation.from_euler("xyz", self.rotation).as_matrix()


def affine_augment(cloud: PointCloud, params: AugmentParams, seed=None) -> PointCloud:
    """``diag(scale) @ R @ x + translation`` plus seeded Gaussian jitter."""
    A = np.diag(params.scale) @ params.rotation_matrix()
    X = cloud.positions @ A.T + np.asarray(params.translation)
    if params.jitter_sigma > 0:
        X = X + np.random.default_rng(seed).normal(0.0, params.jitter_sigma, X.shape)
    return cloud.with_positions(X)


def knn_soft_predict(cloud, seeds, k: int = DEFAULT_KNN, temperature: float = DEFAULT_TEMPERATURE,
                     num_classes: int | None = None) -> np.ndarray:
    """Soft class distribution from the ``k`` nearest labeled points.

    Each neighbour votes ``exp(-dist / temperature)`` for its class. A point
    sitting exactly on labeled points takes their (normalized) class counts.
    """
    X = np.asarray(getattr(cloud, "positions", cloud), dtype=np.float64)
    seeds = np.asarray(seeds, dtype=np.int64)
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if not temperature > 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    labeled = np.flatnonzero(seeds != IGNORE)
    if len(labeled) == 0:
        raise ValueError("no labeled seed points")
    C = int(num_classes) if num_classes is not None else int(seeds.max()) + 1
    kk = min(k, len(labeled))
    dist, nn = cKDTree(X[labeled]).query(X, k=kk)
    dist = dist.reshape(len(X), kk)
    cls = seeds[labeled][nn.reshape(len(X), kk)]

    # shifting by the row minimum leaves the normalized result unchanged and avoids underflow
    w = np.exp(-(dist - dist[:, :1]) / temperature)
    on_seed = dist[:, 0] == 0.0
    w[on_seed] = (dist[on_seed] == 0.0).astype(np.float64)

    probs = np.zeros((len(X), C))
    np.add.at(probs, (np.repeat(np.arange(len(X)), kk), cls.ravel()), w.ravel())
    probs /= probs.sum(axis=1, keepdims=True)
    return probs


@dataclass(frozen=True, eq=False)
class PredictionStack:
    """(K+1) x N x C class probabilities; slice 0 is the unaugmented input."""

    probs: np.ndarray

    def __post_init__(self):
        p = np.array(self.probs, dtype=np.float64)
        if p.ndim != 3 or p.shape[0] < 2:
            raise ValueError(f"stack must be (K+1) x N x C with K >= 1, got {p.shape}")
        if not np.all(np.isfinite(p)) or p.min() < 0:
            raise ValueError("stack entries must be finite and non-negative")
        if np.abs(p.sum(axis=2) - 1.0).max() > 1e-6:
            raise ValueError("stack rows must sum to 1")
        p.flags.writeable = False
        object.__setattr__(self, "probs", p)

    @property
    def K(self) -> int:
        return self.probs.shape[0] - 1

    @property
    def original(self) -> np.ndarray:
        return self.probs[0]

    @property
    def augmented(self) -> np.ndarray:
        return self.probs[1:]


def build_stack(cloud: PointCloud, seeds, K: int = DEFAULT_K, aug_seed: int = 0,
                k: int = DEFAULT_KNN, temperature: float = DEFAULT_TEMPERATURE,
                num_classes: int | None = None, params: list | None = None) -> PredictionStack:
    """Predict on the original cloud and ``K`` augmented copies.

    ``params`` overrides the randomly drawn augmentations (one per slice).
    """
    if K < 1:
        raise ValueError(f"K must be >= 1, got {K}")
    if num_classes is None:
        num_classes = int(np.max(seeds)) + 1
    rng = np.random.default_rng(aug_seed)
    slices = [knn_soft_predict(cloud, seeds, k, temperature, num_classes)]
    for j in range(K):
        p = params[j] if params is not None else AugmentParams.random(rng)
        jitter_seed = int(rng.integers(2**63 - 1))
        slices.append(knn_soft_predict(affine_augment(cloud, p, jitter_seed), seeds, k, temperature,
                                       num_classes))
    return PredictionStack(np.stack(slices))


@dataclass(frozen=True, eq=False)
class ReliabilitySplit:
    reliable: np.ndarray  # N bools
    hard: np.ndarray      # N labels, IGNORE where not reliable
    soft: np.ndarray      # N x C mean prediction

    @property
    def ambiguous(self) -> np.ndarray:
        return ~self.reliable


def split_reliable(stack: PredictionStack, tau: float = DEFAULT_TAU,
                   kappa: float = DEFAULT_KAPPA) -> ReliabilitySplit:
    """A point is reliable when some class has mean probability >= tau and
    population variance across the stack <= kappa."""
    P = stack.probs if isinstance(stack, PredictionStack) else np.asarray(stack, dtype=np.float64)
    mean = P.mean(axis=0)
    # shifted by slice 0 so that identical slices give exactly zero variance
    D = P - P[0]
    var = np.maximum((D * D).mean(axis=0) - D.mean(axis=0) ** 2, 0.0)
    reliable = np.any((mean >= tau) & (var <= kappa), axis=1)
    hard = np.where(reliable, np.argmax(mean, axis=1), IGNORE).astype(np.int64)
    soft = mean / mean.sum(axis=1, keepdims=True)
    return ReliabilitySplit(reliable=reliable, hard=hard, soft=soft)


# -- stack files: little-endian int64 header (K+1, N, C), then float64 row-major

def save_stack(stack: PredictionStack, path) -> None:
    P = stack.probs
    with open(path, "wb") as f:
        f.write(struct.pack("<qqq", *P.shape))
        f.write(np.ascontiguousarray(P, dtype="<f8").tobytes())


def load_stack(path) -> PredictionStack:
    path = Path(path)
    data = path.read_bytes()
    if len(data) < 24:
        raise ValueError(f"{path}: truncated header")
    shape = struct.unpack("<qqq", data[:24])
    expected = 24 + 8 * int(np.prod(shape))
    if len(data) != expected:
        raise ValueError(f"{path}: expected {expected} bytes for shape {shape}, got {len(data)}")
    return PredictionStack(np.frombuffer(data[24:], dtype="<f8").reshape(shape))
