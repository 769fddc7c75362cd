"""Synthetic rooms with a point-splat z-buffer renderer.

The renderer is written independently of :mod:`masklift.geometry` (it goes
through ``R @ x + t`` and the focal lengths directly, never through the
composed projection matrix), so its per-view visibility serves as a reference
for the link matrix.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .core import IGNORE, PointCloud, SceneBundle, ViewObservation
from .geometry import CameraIntrinsics, CameraPose
from .lift import MaskSet2D

FLOOR, WALL = 0, 1

_PALETTE = np.array([
    [0.60, 0.87, 0.54], [0.68, 0.78, 0.91], [1.00, 0.60, 0.59], [0.74, 0.74, 0.13],
    [0.55, 0.34, 0.29], [0.58, 0.40, 0.74], [0.09, 0.75, 0.81], [0.97, 0.71, 0.82],
])


@dataclass
class SynthSpec:
    seed: int = 0
    room: tuple = (6.0, 5.0, 2.5)
    num_boxes: int = 4
    box_min: tuple = (0.4, 0.4, 0.4)
    box_max: tuple = (1.2, 1.0, 1.2)
    num_classes: int = 8
    point_density: float = 400.0     # points per square meter
    num_cameras: int = 6
    camera_height: float = 1.6
    camera_radius: float = 1.6       # ring radius around the room center, meters
    look_at_height: float = 0.5
    image_size: tuple = (320, 240)   # W, H
    fov_deg: float = 70.0
    depth_scale: float = 1000.0
    delta: float = 0.05
    sparse_scheme: str = "fixed-n"
    sparse_n: int = 20
    walls: bool = True
    wall_margin: float = 0.3
    box_gap: float = 0.3

    def __post_init__(self):
        self.room = tuple(float(x) for x in self.room)
        self.box_min = tuple(float(x) for x in self.box_min)
        self.box_max = tuple(float(x) for x in self.box_max)
        self.image_size = tuple(int(x) for x in self.image_size)
        if min(self.room) <= 0:
            raise ValueError(f"room extents must be positive, got {self.room}")
        if self.num_cameras < 1:
            raise ValueError("need at least one camera")
        if self.num_boxes + 1 + (4 if self.walls else 0) < 2:
            raise ValueError("a scene needs at least two objects")
        if self.num_boxes and self.num_classes < 3:
            raise ValueError("boxes need num_classes >= 3 (floor and wall are 0 and 1)")
        if self.point_density <= 0 or self.depth_scale <= 0 or self.delta <= 0:
            raise ValueError("point_density, depth_scale and delta must be positive")
        if any(lo <= 0 or lo > hi for lo, hi in zip(self.box_min, self.box_max)):
            raise ValueError("box size bounds must satisfy 0 < min <= max")
        if self.sparse_scheme not in ("fixed-n", "otoc"):
            raise ValueError(f"unknown sparse scheme {self.sparse_scheme!r}")

    @classmethod
    def from_dict(cls, d: dict) -> "SynthSpec":
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "SynthSpec":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        return asdict(self)

    def intrinsics(self) -> CameraIntrinsics:
        W, H = self.image_size
        f = (W / 2) / np.tan(np.deg2rad(self.fov_deg) / 2)
        return CameraIntrinsics(f, f, (W - 1) / 2, (H - 1) / 2, W, H)


@dataclass
class RenderResult:
    depth: np.ndarray        # H x W quantized meters, 0 where empty
    mask2d: MaskSet2D
    visible: np.ndarray      # N bools: point survives the depth test at its own pixel
    zbuffer: np.ndarray      # H x W exact nearest depth (inf where empty)
    pixel_object: np.ndarray  # H x W object id of the nearest point, -1 where empty


@dataclass
class SynthScene:
    bundle: SceneBundle
    object_ids: np.ndarray
    object_classes: dict
    renders: list = field(default_factory=list)

    @property
    def visible(self) -> list:
        return [r.visible for r in self.renders]


def render_view(positions, object_ids, intrinsics: CameraIntrinsics, pose: CameraPose,
                depth_scale: float = 1000.0, delta: float = 0.05) -> RenderResult:
    """Splat points to their nearest pixel and keep the closest one per pixel."""
    X = np.asarray(positions, dtype=np.float64)
    object_ids = np.asarray(object_ids, dtype=np.int64)
    W, H = intrinsics.width, intrinsics.height
    cam = X @ pose.R.T + pose.t
    z = cam[:, 2]
    front = z > 1e-9
    zs = np.where(front, z, 1.0)
    col = np.floor(intrinsics.fx * (cam[:, 0] / zs) + intrinsics.cx + 0.5)
    row = np.floor(intrinsics.fy * (cam[:, 1] / zs) + intrinsics.cy + 0.5)
    hit = front & (col >= 0) & (col < W) & (row >= 0) & (row < H)
    pts = np.flatnonzero(hit)
    pix = row[pts].astype(np.int64) * W + col[pts].astype(np.int64)

    # nearest point per pixel; equal depths resolved by point index
    order = np.lexsort((pts, z[pts]))
    first_pix, first = np.unique(pix[order], return_index=True)
    winner = pts[order[first]]

    zbuffer = np.full(H * W, np.inf)
    zbuffer[first_pix] = z[winner]
    q = np.zeros(H * W)
    q[first_pix] = np.round(z[winner] * depth_scale)
    if q.max(initial=0) > 65535:
        raise ValueError("scene depth exceeds the 16-bit depth range")
    depth = q / depth_scale
    owner = np.full(H * W, -1, dtype=np.int64)
    owner[first_pix] = object_ids[winner]

    visible = np.zeros(len(X), dtype=bool)
    d = depth[pix]
    visible[pts] = (d > 0) & (np.abs(d - z[pts]) <= delta)

    owner = owner.reshape(H, W)
    return RenderResult(depth=depth.reshape(H, W), mask2d=MaskSet2D.from_labels(owner + 1),
                        visible=visible, zbuffer=zbuffer.reshape(H, W), pixel_object=owner)


def _rect(rng, origin, e1, e2, density):
    origin, e1, e2 = (np.asarray(a, dtype=np.float64) for a in (origin, e1, e2))
    area = np.linalg.norm(np.cross(e1, e2))
    n = max(1, int(round(area * density)))
    ab = rng.random((n, 2))
    return origin + ab[:, :1] * e1 + ab[:, 1:] * e2


def _place_boxes(rng, spec: SynthSpec):
    Lx, Ly, _ = spec.room
    lo, hi = np.array(spec.box_min), np.array(spec.box_max)
    boxes = []
    for _ in range(spec.num_boxes):
        for _attempt in range(1000):
            size = rng.uniform(lo, hi)
            m = spec.wall_margin
            if Lx - 2 * m <= size[0] or Ly - 2 * m <= size[1]:
                continue
            x0 = rng.uniform(m, Lx - m - size[0])
            y0 = rng.uniform(m, Ly - m - size[1])
            g = spec.box_gap
            if all(x0 + size[0] + g <= b[0] or b[0] + b[3] + g <= x0 or
                   y0 + size[1] + g <= b[1] or b[1] + b[4] + g <= y0 for b in boxes):
                boxes.append((x0, y0, 0.0, *size))
                break
        else:
            raise ValueError("could not place all boxes; room too small for the requested count")
    return boxes


def generate_scene(spec: SynthSpec) -> SynthScene:
    """Sample a room of floor, walls and boxes, render every camera, and pick sparse labels."""
    rng = np.random.default_rng(spec.seed)
    Lx, Ly, Lz = spec.room
    d = spec.point_density
    boxes = _place_boxes(rng, spec)

    chunks, classes = [], {}

    def add(points, obj, cls):
        chunks.append((points, obj))
        classes[obj] = cls

    floor = _rect(rng, (0, 0, 0), (Lx, 0, 0), (0, Ly, 0), d)
    for x0, y0, _, sx, sy, _ in boxes:
        inside = (floor[:, 0] > x0) & (floor[:, 0] < x0 + sx) & (floor[:, 1] > y0) & (floor[:, 1] < y0 + sy)
        floor = floor[~inside]
    add(floor, 0, FLOOR)
    obj = 1
    if spec.walls:
        for o, e1 in [((0, 0, 0), (Lx, 0, 0)), ((Lx, 0, 0), (0, Ly, 0)),
                      ((Lx, Ly, 0), (-Lx, 0, 0)), ((0, Ly, 0), (0, -Ly, 0))]:
            add(_rect(rng, o, e1, (0, 0, Lz), d), obj, WALL)
            obj += 1
    for x0, y0, z0, sx, sy, sz in boxes:
        faces = [((x0, y0, z0 + sz), (sx, 0, 0), (0, sy, 0)),
                 ((x0, y0, z0), (sx, 0, 0), (0, 0, sz)),
                 ((x0, y0 + sy, z0), (sx, 0, 0), (0, 0, sz)),
                 ((x0, y0, z0), (0, sy, 0), (0, 0, sz)),
                 ((x0 + sx, y0, z0), (0, sy, 0), (0, 0, sz))]
        cls = int(rng.integers(2, spec.num_classes))
        add(np.concatenate([_rect(rng, *f, d) for f in faces]), obj, cls)
        obj += 1

    positions = np.concatenate([c[0] for c in chunks])
    object_ids = np.concatenate([np.full(len(c[0]), c[1], dtype=np.int64) for c in chunks])
    gt = np.array([classes[o] for o in range(obj)], dtype=np.int64)[object_ids]
    colors = np.clip(_PALETTE[gt % len(_PALETTE)] + rng.normal(0, 0.03, positions.shape), 0, 1)
    cloud = PointCloud(positions, colors)

    intr = spec.intrinsics()
    center = np.array([Lx / 2, Ly / 2])
    views, renders = [], []
    for k in range(spec.num_cameras):
        ang = 2 * np.pi * k / spec.num_cameras
        eye = [*(center + spec.camera_radius * np.array([np.cos(ang), np.sin(ang)])), spec.camera_height]
        pose = CameraPose.look_at(eye, [*center, spec.look_at_height])
        r = render_view(positions, object_ids, intr, pose, spec.depth_scale, spec.delta)
        renders.append(r)
        views.append(ViewObservation(intr, pose, r.depth, r.mask2d, name=f"view_{k:03d}"))

    sparse = sample_sparse(gt, spec.sparse_scheme, spec.sparse_n, spec.seed, object_ids)
    bundle = SceneBundle(cloud=cloud, sparse=sparse, num_classes=spec.num_classes, views=views,
                         gt=gt, depth_scale=spec.depth_scale, delta=spec.delta,
                         name=f"synth_{spec.seed:04d}")
    return SynthScene(bundle=bundle, object_ids=object_ids, object_classes=classes, renders=renders)


def sample_sparse(gt, scheme: str = "fixed-n", n: int = 20, seed=0, object_ids=None) -> np.ndarray:
    """Keep the ground truth of a few points and IGNORE the rest.

    ``fixed-n`` keeps ``n`` distinct uniformly chosen points; ``otoc`` keeps one
    random point per object id.
    """
    gt = np.asarray(gt, dtype=np.int64)
    rng = np.random.default_rng(seed)
    out = np.full(len(gt), IGNORE, dtype=np.int64)
    if scheme == "fixed-n":
        if n < 1:
            raise ValueError(f"n must be >= 1, got {n}")
        if n > len(gt):
            raise ValueError(f"cannot keep {n} labels from {len(gt)} points")
        idx = rng.choice(len(gt), size=n, replace=False)
    elif scheme == "otoc":
        if object_ids is None:
            raise ValueError("the otoc scheme needs per-point object ids")
        object_ids = np.asarray(object_ids)
        idx = np.array([rng.choice(np.flatnonzero(object_ids == o)) for o in np.unique(object_ids)])
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    out[idx] = gt[idx]
    return out


def write_synth_scene(scene: SynthScene, out_dir) -> None:
    """Write the scene directory plus ``instances.labels`` (per-point object ids)."""
    from .io import save_labels, save_scene

    save_scene(scene.bundle, out_dir)
    save_labels(scene.object_ids, Path(out_dir) / "instances.labels")
