"""Scene directory reader/writer.

Layout::

    meta.json               {"num_classes", "depth_scale", "delta_depth"}
    cloud.ply               ASCII PLY, x y z [red green blue]
    gt.labels               optional, one integer per line, -1 = IGNORE
    sparse.labels           same format
    views/<name>.cam        4 rows of the 4x4 world-to-camera matrix, then "fx fy cx cy W H"
    views/<name>.depth.png  16-bit, depth_scale * meters, 0 = invalid
    views/<name>.mask.png   16-bit, 2D mask id + 1, 0 = unsegmented
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from PIL import Image

from .core import IGNORE, PointCloud, SceneBundle, SceneFormatError, ViewObservation
from .geometry import CameraIntrinsics, CameraPose
from .lift import MaskSet2D

_PLY_FLOAT = {"float", "float32", "double", "float64"}
_PLY_INT = {"uchar", "uint8", "char", "int8", "ushort", "uint16", "short", "int16",
            "uint", "uint32", "int", "int32"}


def save_labels(labels, path) -> None:
    labels = np.asarray(labels, dtype=np.int64)
    Path(path).write_text("".join(f"{v}\n" for v in labels.tolist()))


def load_labels(path, n: int | None = None, num_classes: int | None = None) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise SceneFormatError("missing file", path)
    lines = path.read_text().split()
    try:
        labels = np.array(lines, dtype=np.int64)
    except ValueError:
        for i, tok in enumerate(lines):
            try:
                int(tok)
            except ValueError:
                raise SceneFormatError(f"not an integer: {tok!r}", path, i) from None
        raise
    if n is not None and len(labels) != n:
        raise SceneFormatError(f"dimension mismatch: {len(labels)} labels for {n} points", path)
    bad = (labels < 0) & (labels != IGNORE)
    if num_classes is not None:
        bad |= labels >= num_classes
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise SceneFormatError(f"label {labels[i]} out of range [0, {num_classes})", path, i)
    return labels


def write_ply(cloud: PointCloud, path) -> None:
    n = len(cloud)
    header = ["ply", "format ascii 1.0", f"element vertex {n}",
              "property double x", "property double y", "property double z"]
    data = cloud.positions
    if cloud.colors is not None:
        header += ["property double red", "property double green", "property double blue"]
        data = np.concatenate([data, cloud.colors], axis=1)
    header.append("end_header")
    with open(path, "w") as f:
        f.write("\n".join(header) + "\n")
        np.savetxt(f, data, fmt="%.17g")


def read_ply(path) -> PointCloud:
    path = Path(path)
    if not path.exists():
        raise SceneFormatError("missing file", path)
    with open(path) as f:
        if f.readline().strip() != "ply":
            raise SceneFormatError("not a PLY file", path)
        n = None
        props: list[tuple[str, str]] = []
        in_vertex = False
        while True:
            line = f.readline()
            if not line:
                raise SceneFormatError("unterminated header", path)
            tok = line.split()
            if not tok:
                continue
            if tok[0] == "format" and tok[1] != "ascii":
                raise SceneFormatError(f"only ASCII PLY is supported, got {tok[1]}", path)
            if tok[0] == "element":
                in_vertex = tok[1] == "vertex"
                if in_vertex:
                    n = int(tok[2])
                elif n is None:
                    raise SceneFormatError("vertex element must come first", path)
            elif tok[0] == "property" and in_vertex:
                props.append((tok[-1], tok[1]))
            elif tok[0] == "end_header":
                break
        if n is None or n < 1:
            raise SceneFormatError("no vertices", path)
        names = [p[0] for p in props]
        for axis in "xyz":
            if axis not in names:
                raise SceneFormatError(f"missing property {axis}", path)
        data = np.loadtxt(f, dtype=np.float64, max_rows=n, ndmin=2)
    if data.shape != (n, len(props)):
        raise SceneFormatError(f"dimension mismatch: expected {n} x {len(props)} values, got {data.shape}", path)
    pos = data[:, [names.index(a) for a in "xyz"]]
    bad = ~np.isfinite(pos).all(axis=1)
    if bad.any():
        raise SceneFormatError("non-finite coordinate", path, int(np.flatnonzero(bad)[0]))
    colors = None
    if all(c in names for c in ("red", "green", "blue")):
        cols = [names.index(c) for c in ("red", "green", "blue")]
        colors = data[:, cols]
        if props[cols[0]][1] in _PLY_INT:
            colors = colors / 255.0
        bad = ~((colors >= 0) & (colors <= 1)).all(axis=1)
        if bad.any():
            raise SceneFormatError("color outside [0, 1]", path, int(np.flatnonzero(bad)[0]))
    return PointCloud(pos, colors)


def write_cam(intrinsics: CameraIntrinsics, pose: CameraPose, path) -> None:
    E = pose.as_matrix()
    rows = [" ".join(f"{x:.17g}" for x in r) for r in E]
    k = intrinsics
    rows.append(f"{k.fx:.17g} {k.fy:.17g} {k.cx:.17g} {k.cy:.17g} {k.width} {k.height}")
    Path(path).write_text("\n".join(rows) + "\n")


def read_cam(path) -> tuple[CameraIntrinsics, CameraPose]:
    path = Path(path)
    if not path.exists():
        raise SceneFormatError("missing file", path)
    rows = [r.split() for r in path.read_text().splitlines() if r.strip()]
    if len(rows) != 5 or any(len(r) != 4 for r in rows[:4]) or len(rows[4]) != 6:
        raise SceneFormatError("expected 4 rows of 4 numbers and one row 'fx fy cx cy W H'", path)
    try:
        E = np.array(rows[:4], dtype=np.float64)
        fx, fy, cx, cy = (float(x) for x in rows[4][:4])
        W, H = int(rows[4][4]), int(rows[4][5])
        return CameraIntrinsics(fx, fy, cx, cy, W, H), CameraPose.from_matrix(E)
    except ValueError as exc:
        raise SceneFormatError(str(exc), path) from None


def write_depth_png(depth, path, depth_scale: float = 1000.0) -> None:
    q = np.round(np.asarray(depth, dtype=np.float64) * depth_scale)
    if q.max(initial=0) > 65535:
        raise ValueError(f"depth {q.max() / depth_scale:.3f} m exceeds 16-bit range at scale {depth_scale}")
    Image.fromarray(q.astype(np.uint16)).save(path)


def read_depth_png(path, depth_scale: float = 1000.0) -> np.ndarray:
    return _read_png16(path).astype(np.float64) / depth_scale


def write_mask_png(mask2d: MaskSet2D, path) -> None:
    if mask2d.num_masks > 65535:
        raise ValueError("too many masks for a 16-bit id map")
    Image.fromarray(mask2d.ids.astype(np.uint16)).save(path)


def read_mask_png(path) -> MaskSet2D:
    ids = _read_png16(path).astype(np.int64)
    try:
        return MaskSet2D(ids)
    except ValueError as exc:
        raise SceneFormatError(str(exc), path) from None


def _read_png16(path) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise SceneFormatError("missing file", path)
    with Image.open(path) as im:
        arr = np.array(im)
    if arr.ndim != 2:
        raise SceneFormatError(f"expected a single-channel image, got shape {arr.shape}", path)
    return arr


def save_scene(bundle: SceneBundle, scene_dir) -> None:
    scene_dir = Path(scene_dir)
    (scene_dir / "views").mkdir(parents=True, exist_ok=True)
    meta = {"num_classes": bundle.num_classes, "depth_scale": bundle.depth_scale,
            "delta_depth": bundle.delta}
    (scene_dir / "meta.json").write_text(json.dumps(meta, indent=2) + "\n")
    write_ply(bundle.cloud, scene_dir / "cloud.ply")
    save_labels(bundle.sparse, scene_dir / "sparse.labels")
    if bundle.gt is not None:
        save_labels(bundle.gt, scene_dir / "gt.labels")
    for k, view in enumerate(bundle.views):
        name = view.name or f"view_{k:03d}"
        base = scene_dir / "views" / name
        write_cam(view.intrinsics, view.pose, base.with_name(name + ".cam"))
        write_depth_png(view.depth, base.with_name(name + ".depth.png"), bundle.depth_scale)
        write_mask_png(view.mask2d, base.with_name(name + ".mask.png"))


def load_scene(scene_dir) -> SceneBundle:
    scene_dir = Path(scene_dir)
    meta_path = scene_dir / "meta.json"
    if not meta_path.exists():
        raise SceneFormatError("missing file", meta_path)
    try:
        meta = json.loads(meta_path.read_text())
        C = int(meta["num_classes"])
    except (ValueError, KeyError) as exc:
        raise SceneFormatError(f"bad metadata: {exc}", meta_path) from None
    depth_scale = float(meta.get("depth_scale", 1000.0))
    delta = float(meta.get("delta_depth", 0.05))

    cloud = read_ply(scene_dir / "cloud.ply")
    n = len(cloud)
    sparse = load_labels(scene_dir / "sparse.labels", n, C)
    gt = None
    if (scene_dir / "gt.labels").exists():
        gt = load_labels(scene_dir / "gt.labels", n, C)

    views = []
    view_dir = scene_dir / "views"
    names = sorted(p.name[:-4] for p in view_dir.glob("*.cam")) if view_dir.is_dir() else []
    for name in names:
        intr, pose = read_cam(view_dir / f"{name}.cam")
        depth_path = view_dir / f"{name}.depth.png"
        mask_path = view_dir / f"{name}.mask.png"
        depth = read_depth_png(depth_path, depth_scale)
        if depth.shape != intr.shape:
            raise SceneFormatError(f"dimension mismatch in view {name!r}: depth is {depth.shape}, "
                                   f"camera is {intr.shape}", depth_path)
        mask2d = read_mask_png(mask_path)
        if mask2d.shape != intr.shape:
            raise SceneFormatError(f"dimension mismatch in view {name!r}: mask is {mask2d.shape}, "
                                   f"camera is {intr.shape}", mask_path)
        views.append(ViewObservation(intr, pose, depth, mask2d, name=name))
    return SceneBundle(cloud=cloud, sparse=sparse, num_classes=C, views=views, gt=gt,
                       depth_scale=depth_scale, delta=delta, name=scene_dir.name)
