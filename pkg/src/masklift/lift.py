"""Back-project per-view 2D masks onto the cloud and fuse them across views."""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import LinkMatrix, round_half_up

DEFAULT_THETA = 0.3


@dataclass(frozen=True, eq=False)
class MaskSet2D:
    """Exclusive 2D masks stored as an H x W id map (0 = unsegmented, ids 1..M)."""

    ids: np.ndarray

    def __post_init__(self):
        ids = np.array(self.ids)
        if ids.ndim != 2:
            raise ValueError(f"mask id map must be 2D, got shape {ids.shape}")
        if not np.issubdtype(ids.dtype, np.integer):
            raise ValueError(f"mask id map must be integer, got {ids.dtype}")
        ids = ids.astype(np.int64)
        if ids.size and ids.min() < 0:
            raise ValueError("mask ids must be non-negative")
        present = np.unique(ids[ids > 0])
        if len(present) and not np.array_equal(present, np.arange(1, len(present) + 1)):
            missing = sorted(set(range(1, int(present.max()) + 1)) - set(present.tolist()))
            raise ValueError(f"mask ids must be contiguous 1..M; missing {missing[:5]}")
        ids.flags.writeable = False
        object.__setattr__(self, "ids", ids)

    @property
    def num_masks(self) -> int:
        return int(self.ids.max()) if self.ids.size else 0

    @property
    def shape(self) -> tuple[int, int]:
        return self.ids.shape

    def to_boolean(self) -> np.ndarray:
        """The M x H x W boolean form."""
        return self.ids[None] == np.arange(1, self.num_masks + 1)[:, None, None]

    @classmethod
    def from_labels(cls, label_map) -> "MaskSet2D":
        """Relabel an arbitrary integer map (0 = background) into contiguous ids, in sorted order."""
        label_map = np.asarray(label_map)
        values = np.unique(label_map[label_map > 0])
        lut = np.zeros(int(values.max()) + 1 if len(values) else 1, dtype=np.int64)
        lut[values] = np.arange(1, len(values) + 1)
        out = np.where(label_map > 0, lut[np.clip(label_map, 0, None)], 0)
        return cls(out)


@dataclass(frozen=True, eq=False)
class MaskSet3D:
    """T x N boolean membership of points in fused masks.

    ``provenance[t]`` lists the ``(view_index, mask_id)`` pairs absorbed into row
    ``t``; ``mask_id`` is zero-based (the on-disk pixel value minus one).
    """

    masks: np.ndarray
    provenance: list = field(default_factory=list)

    def __post_init__(self):
        masks = np.array(self.masks, dtype=bool)
        if masks.ndim != 2:
            raise ValueError(f"mask matrix must be T x N, got shape {masks.shape}")
        if self.provenance and len(self.provenance) != masks.shape[0]:
            raise ValueError("provenance length does not match number of masks")
        masks.flags.writeable = False
        object.__setattr__(self, "masks", masks)

    @property
    def num_masks(self) -> int:
        return self.masks.shape[0]

    @property
    def num_points(self) -> int:
        return self.masks.shape[1]

    def point_to_mask(self) -> np.ndarray:
        """Mask index per point, -1 where uncovered. Requires exclusive masks."""
        if np.any(self.masks.sum(axis=0) > 1):
            raise ValueError("masks are not point-exclusive")
        out = np.full(self.num_points, -1, dtype=np.int64)
        t, i = np.nonzero(self.masks)
        out[i] = t
        return out

    def indices(self, t: int) -> np.ndarray:
        return np.flatnonzero(self.masks[t])


def sample_views(views: list, n_view: int) -> list:
    """Pick ``n_view`` views evenly spread over the sequence, first and last included."""
    if not views:
        raise ValueError("cannot sample from an empty view list")
    if n_view < 1:
        raise ValueError(f"n_view must be >= 1, got {n_view}")
    L = len(views)
    if n_view >= L:
        return list(views)
    if n_view == 1:
        idx = [int(round_half_up((L - 1) / 2))]
    else:
        idx = [int(round_half_up(j * (L - 1) / (n_view - 1))) for j in range(n_view)]
    seen = []
    for i in idx:
        if i not in seen:
            seen.append(i)
    return [views[i] for i in seen]


def sample_view_indices(num_views: int, n_view: int) -> list[int]:
    return sample_views(list(range(num_views)), n_view)


def backproject_masks(mask2d: MaskSet2D, link: LinkMatrix) -> np.ndarray:
    """M x N boolean matrix: point i joins the mask its pixel belongs to, if visible."""
    M = mask2d.num_masks
    n = len(link)
    pixel_id = np.zeros(n, dtype=np.int64)
    ok = np.asarray(link.valid)
    pixel_id[ok] = mask2d.ids[link.v[ok], link.u[ok]]
    out = np.zeros((M, n), dtype=bool)
    hit = pixel_id > 0
    out[pixel_id[hit] - 1, np.flatnonzero(hit)] = True
    return out


def merge_mask_sets(view_sets: list, theta: float = DEFAULT_THETA,
                    view_indices: list | None = None) -> MaskSet3D:
    """Fuse per-view 3D masks into one point-exclusive mask set.

    Views are consumed in order. Each mask of a later view is compared against
    every mask accumulated so far using intersection over the smaller mask; it
    is unioned into the best match when that overlap exceeds ``theta`` (ties go
    to the lowest accumulated index) and appended otherwise. Points claimed by
    several fused masks end up in the largest one, ties to the lower index.
    """
    if not view_sets:
        raise ValueError("no view sets to merge")
    sets = [np.asarray(s, dtype=bool) for s in view_sets]
    n = sets[0].shape[1]
    for k, s in enumerate(sets):
        if s.ndim != 2 or s.shape[1] != n:
            raise ValueError(f"view set {k} has shape {s.shape}, expected (*, {n})")
    if view_indices is None:
        view_indices = list(range(len(sets)))

    capacity = sum(s.shape[0] for s in sets)
    claimed = np.zeros((capacity, n), dtype=bool)
    sizes = np.zeros(capacity, dtype=np.int64)
    prov: list[list] = []
    T = 0
    for k, s in enumerate(sets):
        for m in range(s.shape[0]):
            row = s[m]
            idx = np.flatnonzero(row)
            if len(idx) == 0:
                continue
            src = (int(view_indices[k]), m)
            if k > 0 and T:
                inter = claimed[:T, idx].sum(axis=1)
                overlap = inter / np.minimum(len(idx), sizes[:T])
                best = int(np.argmax(overlap))
                if overlap[best] > theta:
                    claimed[best, idx] = True
                    sizes[best] = np.count_nonzero(claimed[best])
                    prov[best].append(src)
                    continue
            claimed[T, idx] = True
            sizes[T] = len(idx)
            prov.append([src])
            T += 1

    if T == 0:
        return MaskSet3D(np.zeros((0, n), dtype=bool), [])
    claimed = claimed[:T]
    owner = _resolve_owner(claimed, sizes[:T])
    resolved = np.zeros_like(claimed)
    covered = owner >= 0
    resolved[owner[covered], np.flatnonzero(covered)] = True
    keep = resolved.any(axis=1)
    return MaskSet3D(resolved[keep], [p for p, k in zip(prov, keep) if k])


def _resolve_owner(claimed: np.ndarray, sizes: np.ndarray) -> np.ndarray:
    # visit masks by (size desc, index asc); first claimant wins each point
    order = np.lexsort((np.arange(len(sizes)), -sizes))
    owner = np.full(claimed.shape[1], -1, dtype=np.int64)
    for t in order:
        owner[claimed[t] & (owner < 0)] = t
    return owner


def lift_views(cloud, views: list, delta: float, theta: float = DEFAULT_THETA,
               view_indices: list | None = None) -> MaskSet3D:
    """Link, back-project and merge a list of ``ViewObservation``."""
    from .geometry import build_link_matrix

    sets = []
    for view in views:
        link = build_link_matrix(cloud, view.intrinsics, view.pose, view.depth, delta)
        sets.append(backproject_masks(view.mask2d, link))
    return merge_mask_sets(sets, theta, view_indices)


# -- mask3d.bin: little-endian int64 (T, N) header, then T rows packed
# -- little-endian bit order, ceil(N/8) bytes each.

def save_mask3d(mask3d: MaskSet3D, path) -> None:
    path = Path(path)
    T, N = mask3d.masks.shape
    with open(path, "wb") as f:
        f.write(struct.pack("<qq", T, N))
        if T:
            f.write(np.packbits(mask3d.masks, axis=1, bitorder="little").tobytes())
    prov = {"num_masks": T, "num_points": N,
            "provenance": [[[int(a), int(b)] for a, b in p] for p in mask3d.provenance]}
    with open(_prov_path(path), "w") as f:
        json.dump(prov, f, indent=1)
        f.write("\n")


def load_mask3d(path) -> MaskSet3D:
    path = Path(path)
    data = path.read_bytes()
    if len(data) < 16:
        raise ValueError(f"{path}: truncated header")
    T, N = struct.unpack("<qq", data[:16])
    row_bytes = (N + 7) // 8
    if len(data) != 16 + T * row_bytes:
        raise ValueError(f"{path}: expected {16 + T * row_bytes} bytes for T={T}, N={N}, got {len(data)}")
    packed = np.frombuffer(data[16:], dtype=np.uint8).reshape(T, row_bytes)
    masks = np.unpackbits(packed, axis=1, count=N, bitorder="little").astype(bool)
    prov_path = _prov_path(path)
    prov = []
    if prov_path.exists():
        prov = [[tuple(x) for x in p] for p in json.loads(prov_path.read_text())["provenance"]]
    return MaskSet3D(masks, prov)


def _prov_path(path: Path) -> Path:
    name = path.name[:-4] if path.name.endswith(".bin") else path.name
    return path.with_name(name + ".prov.json")
