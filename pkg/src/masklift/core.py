"""Scene data model and label conventions."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .geometry import CameraIntrinsics, CameraPose
from .lift import MaskSet2D

IGNORE = -1


class SceneFormatError(ValueError):
    """A scene file is missing or violates the scene layout."""

    def __init__(self, message, path=None, index=None):
        self.path = path
        self.index = index
        where = ""
        if path is not None:
            where = f"{path}"
            if index is not None:
                where += f"[{index}]"
            where += ": "
        super().__init__(where + message)


def check_labels(values, n: int | None = None, num_classes: int | None = None,
                 name: str = "labels") -> np.ndarray:
    """Validate and return a label array as int64 (``IGNORE`` marks unlabeled points)."""
    arr = np.asarray(values)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be 1-D, got shape {arr.shape}")
    if arr.size and not np.issubdtype(arr.dtype, np.integer):
        if not np.all(np.mod(arr, 1) == 0):
            raise ValueError(f"{name} must be integers")
    arr = arr.astype(np.int64)
    if n is not None and len(arr) != n:
        raise ValueError(f"{name} has length {len(arr)}, expected {n}")
    bad = (arr < 0) & (arr != IGNORE)
    if num_classes is not None:
        bad |= arr >= num_classes
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise ValueError(f"{name}[{i}] = {arr[i]} is outside [0, {num_classes}) and not IGNORE")
    return arr


def ignore_like(n: int) -> np.ndarray:
    return np.full(n, IGNORE, dtype=np.int64)


@dataclass(frozen=True, eq=False)
class PointCloud:
    positions: np.ndarray
    colors: Optional[np.ndarray] = None

    def __post_init__(self):
        pos = np.array(self.positions, dtype=np.float64)
        if pos.ndim != 2 or pos.shape[1] != 3 or pos.shape[0] < 1:
            raise ValueError(f"positions must be N x 3 with N >= 1, got {pos.shape}")
        finite = np.isfinite(pos).all(axis=1)
        if not finite.all():
            raise ValueError(f"non-finite coordinate at point {int(np.flatnonzero(~finite)[0])}")
        pos.flags.writeable = False
        object.__setattr__(self, "positions", pos)
        if self.colors is not None:
            col = np.array(self.colors, dtype=np.float64)
            if col.shape != pos.shape:
                raise ValueError(f"colors shape {col.shape} does not match positions {pos.shape}")
            if not (np.all(col >= 0) and np.all(col <= 1)):
                raise ValueError("colors must lie in [0, 1]")
            col.flags.writeable = False
            object.__setattr__(self, "colors", col)

    def __len__(self):
        return self.positions.shape[0]

    def with_positions(self, positions) -> "PointCloud":
        return PointCloud(positions, self.colors)


@dataclass(frozen=True, eq=False)
class ViewObservation:
    intrinsics: CameraIntrinsics
    pose: CameraPose
    depth: np.ndarray
    mask2d: MaskSet2D
    name: str = ""

    def __post_init__(self):
        depth = np.array(self.depth, dtype=np.float64)
        if depth.shape != self.intrinsics.shape:
            raise ValueError(f"view {self.name!r}: depth shape {depth.shape} != {self.intrinsics.shape}")
        if not (np.all(np.isfinite(depth)) and np.all(depth >= 0)):
            raise ValueError(f"view {self.name!r}: depth must be finite and >= 0")
        if self.mask2d.shape != self.intrinsics.shape:
            raise ValueError(f"view {self.name!r}: mask shape {self.mask2d.shape} != {self.intrinsics.shape}")
        depth.flags.writeable = False
        object.__setattr__(self, "depth", depth)


@dataclass(frozen=True, eq=False)
class SceneBundle:
    cloud: PointCloud
    sparse: np.ndarray
    num_classes: int
    views: list = field(default_factory=list)
    gt: Optional[np.ndarray] = None
    depth_scale: float = 1000.0
    delta: float = 0.05
    name: str = ""

    def __post_init__(self):
        if self.num_classes < 1:
            raise ValueError(f"num_classes must be >= 1, got {self.num_classes}")
        n = len(self.cloud)
        object.__setattr__(self, "sparse", _frozen(check_labels(self.sparse, n, self.num_classes, "sparse")))
        if self.gt is not None:
            object.__setattr__(self, "gt", _frozen(check_labels(self.gt, n, self.num_classes, "gt")))
        object.__setattr__(self, "views", list(self.views))

    @property
    def num_points(self) -> int:
        return len(self.cloud)


def _frozen(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a
