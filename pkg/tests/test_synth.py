import numpy as np
import pytest

from masklift.core import IGNORE
from masklift.geometry import CameraPose
from masklift.synth import SynthSpec, generate_scene, render_view, sample_sparse

from conftest import small_spec


def exhaustive_zbuffer(positions, intr, pose):
    """Per-pixel minimum depth by looping over every point."""
    zb = np.full(intr.shape, np.inf)
    for c in positions @ pose.R.T + pose.t:
        if c[2] <= 1e-9:
            continue
        u = int(np.floor(intr.fx * c[0] / c[2] + intr.cx + 0.5))
        v = int(np.floor(intr.fy * c[1] / c[2] + intr.cy + 0.5))
        if 0 <= u < intr.width and 0 <= v < intr.height and c[2] < zb[v, u]:
            zb[v, u] = c[2]
    return zb


def test_zbuffer_is_exhaustive_minimum():
    spec = small_spec(seed=11, point_density=40.0, image_size=(80, 60), num_cameras=2)
    scene = generate_scene(spec)
    X = scene.bundle.cloud.positions
    for view, r in zip(scene.bundle.views, scene.renders):
        np.testing.assert_array_equal(r.zbuffer, exhaustive_zbuffer(X, view.intrinsics, view.pose))
        hit = np.isfinite(r.zbuffer)
        assert np.max(np.abs(r.depth[hit] - r.zbuffer[hit])) <= spec.delta / 10
        np.testing.assert_array_equal(r.depth[~hit], 0.0)
        np.testing.assert_array_equal(r.mask2d.ids > 0, hit)


def test_single_wall_camera():
    # one camera facing a single wall: every point is visible with matching depth or off-screen
    spec = SynthSpec(seed=0, num_boxes=0, walls=True, num_cameras=1, point_density=80.0)
    scene = generate_scene(spec)
    pts = scene.bundle.cloud.positions
    wall = scene.object_ids == 1  # the y = 0 wall
    intr = spec.intrinsics()
    pose = CameraPose.look_at([3.0, 2.5, 1.0], [3.0, 0.0, 1.0])
    r = render_view(pts[wall], np.zeros(wall.sum(), int), intr, pose)
    c = pts[wall] @ pose.R.T + pose.t
    u = np.floor(intr.fx * c[:, 0] / c[:, 2] + intr.cx + 0.5)
    v = np.floor(intr.fy * c[:, 1] / c[:, 2] + intr.cy + 0.5)
    onscreen = (u >= 0) & (u < intr.width) & (v >= 0) & (v < intr.height)
    np.testing.assert_array_equal(r.visible, onscreen)


def test_pixel_ids_map_to_single_objects(small_scene):
    for r in small_scene.renders:
        for m in range(1, r.mask2d.num_masks + 1):
            assert len(np.unique(r.pixel_object[r.mask2d.ids == m])) == 1


def test_determinism():
    a = generate_scene(small_spec(seed=4))
    b = generate_scene(small_spec(seed=4))
    np.testing.assert_array_equal(a.bundle.cloud.positions, b.bundle.cloud.positions)
    np.testing.assert_array_equal(a.bundle.cloud.colors, b.bundle.cloud.colors)
    np.testing.assert_array_equal(a.bundle.sparse, b.bundle.sparse)
    for va, vb in zip(a.bundle.views, b.bundle.views):
        np.testing.assert_array_equal(va.depth, vb.depth)
        np.testing.assert_array_equal(va.mask2d.ids, vb.mask2d.ids)


def test_sparse_schemes(small_scene):
    gt = small_scene.bundle.gt
    obj = small_scene.object_ids
    full = sample_sparse(gt, "fixed-n", len(gt), seed=0)
    np.testing.assert_array_equal(full, gt)
    s = small_scene.bundle.sparse
    assert np.count_nonzero(s != IGNORE) == 20
    np.testing.assert_array_equal(s[s != IGNORE], gt[s != IGNORE])
    o = sample_sparse(gt, "otoc", seed=1, object_ids=obj)
    assert np.count_nonzero(o != IGNORE) == len(np.unique(obj))
    assert len(np.unique(obj[o != IGNORE])) == len(np.unique(obj))
    with pytest.raises(ValueError):
        sample_sparse(gt, "fixed-n", len(gt) + 1)
    with pytest.raises(ValueError):
        sample_sparse(gt, "otoc")


def test_degenerate_specs():
    with pytest.raises(ValueError):
        SynthSpec(room=(0, 1, 1))
    with pytest.raises(ValueError):
        SynthSpec(num_cameras=0)
    with pytest.raises(ValueError):
        SynthSpec(num_boxes=0, walls=False)
    with pytest.raises(ValueError):
        generate_scene(SynthSpec(num_boxes=40))
