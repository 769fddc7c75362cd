"""Spread sparse annotations and reliable pseudo labels over fused 3D masks."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import IGNORE
from .lift import MaskSet3D

DEFAULT_ETA = 0.7

# branch codes reported by propagate_branches
NONE, RELIABLE, ANNOTATED = 0, 1, 2


@dataclass(frozen=True)
class PropagationConfig:
    eta: float = DEFAULT_ETA

    def __post_init__(self):
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError(f"eta must be in [0, 1], got {self.eta}")


def mode(values) -> tuple[int, int]:
    """Most frequent non-IGNORE label and its count; ties go to the smallest label.

    Returns ``(IGNORE, 0)`` when there is nothing to count.
    """
    values = np.asarray(values)
    values = values[values != IGNORE]
    if len(values) == 0:
        return IGNORE, 0
    counts = np.bincount(values)
    label = int(np.argmax(counts))
    return label, int(counts[label])


def _mask_rows(masks) -> np.ndarray:
    return masks.masks if isinstance(masks, MaskSet3D) else np.asarray(masks, dtype=bool)


def init_labels(Y, masks) -> np.ndarray:
    """Give every point of a mask the mode of the annotations inside it.

    Masks without annotations and points outside every mask keep their input
    value.
    """
    Y = np.asarray(Y, dtype=np.int64)
    rows = _mask_rows(masks)
    if rows.shape[1:] != Y.shape:
        raise ValueError(f"masks cover {rows.shape[1]} points, labels have {len(Y)}")
    out = Y.copy()
    for row in rows:
        idx = np.flatnonzero(row)
        label, _ = mode(Y[idx])
        if label != IGNORE:
            out[idx] = label
    return out


def propagate_branches(Y, Yr, masks, cfg: PropagationConfig | float = DEFAULT_ETA):
    """Run label propagation and report which branch each mask took.

    Returns ``(Ytilde, branch)`` with ``branch[t]`` one of ``RELIABLE``,
    ``ANNOTATED`` or ``NONE``.
    """
    eta = cfg.eta if isinstance(cfg, PropagationConfig) else PropagationConfig(float(cfg)).eta
    Y = np.asarray(Y, dtype=np.int64)
    Yr = np.asarray(Yr, dtype=np.int64)
    rows = _mask_rows(masks)
    if Y.shape != Yr.shape or rows.shape[1:] != Y.shape:
        raise ValueError(f"length mismatch: Y {Y.shape}, Yr {Yr.shape}, masks {rows.shape}")

    out = np.full_like(Y, IGNORE)
    annotated = Y != IGNORE
    out[annotated] = Y[annotated]
    written = np.zeros(len(Y), dtype=bool)
    branch = np.full(len(rows), NONE, dtype=np.int64)
    for t, row in enumerate(rows):
        idx = np.flatnonzero(row)
        if len(idx) == 0:
            continue
        label_m, count = mode(Yr[idx])
        if label_m != IGNORE and count / len(idx) > eta:
            target, branch[t] = label_m, RELIABLE
        else:
            target, _ = mode(Y[idx])
            if target == IGNORE:
                continue
            branch[t] = ANNOTATED
        if written[idx].any():
            raise ValueError(f"mask {t} overlaps an earlier mask; masks must be point-exclusive")
        written[idx] = True
        out[idx] = target
    return out, branch


def propagate(Y, Yr, masks, cfg: PropagationConfig | float = DEFAULT_ETA) -> np.ndarray:
    """Fuse expanded annotations with mask-expanded reliable pseudo labels.

    ``Yr`` holds hard reliable pseudo labels (IGNORE outside the reliable set).
    A mask takes the modal reliable label when that label covers more than
    ``eta`` of the mask's points; otherwise it takes the mode of the
    annotations it contains, if any.
    """
    return propagate_branches(Y, Yr, masks, cfg)[0]
