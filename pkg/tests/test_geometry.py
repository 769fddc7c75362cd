import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from masklift.core import PointCloud
from masklift.geometry import (CameraIntrinsics, CameraPose, build_link_matrix, compose_projection,
                               project_points, round_half_up)
from masklift.synth import render_view


def unit_intr(W=10, H=10):
    return CameraIntrinsics(1.0, 1.0, 0.0, 0.0, W, H)


def random_pose(rng):
    return CameraPose(Rotation.random(random_state=rng).as_matrix(), rng.normal(size=3))


def test_identity_projection():
    M = compose_projection(unit_intr(), CameraPose.identity())
    assert M.shape == (3, 4)
    np.testing.assert_array_equal(M, np.hstack([np.eye(3), np.zeros((3, 1))]))


def test_translation_column():
    M = compose_projection(unit_intr(), CameraPose(np.eye(3), [0, 0, 2]))
    np.testing.assert_array_equal(M[:, 3], [0, 0, 2])


def test_projection_matches_direct_product():
    rng = np.random.default_rng(0)
    for _ in range(50):
        fx, fy = rng.uniform(50, 800, 2)
        intr = CameraIntrinsics(fx, fy, *rng.uniform(0, 400, 2), 640, 480)
        pose = random_pose(rng)
        K = np.array([[fx, 0, intr.cx], [0, fy, intr.cy], [0, 0, 1]])
        Rt = np.column_stack([pose.R, pose.t])
        ref = np.array([[sum(K[i, k] * Rt[k, j] for k in range(3)) for j in range(4)] for i in range(3)])
        np.testing.assert_allclose(compose_projection(intr, pose), ref, rtol=0, atol=1e-12)


def test_non_orthonormal_rotation_rejected():
    with pytest.raises(ValueError):
        CameraPose(np.diag([1.0, 1.0, 2.0]), np.zeros(3))
    with pytest.raises(ValueError):
        CameraPose(np.diag([1.0, 1.0, -1.0]), np.zeros(3))


def test_project_points_examples():
    M = compose_projection(unit_intr(), CameraPose.identity())
    u, v, z, behind = project_points(np.array([[0.0, 0, 1], [0, 0, -1]]), M)
    assert (u[0], v[0], z[0]) == (0.0, 0.0, 1.0)
    assert not behind[0] and behind[1]

    M = compose_projection(CameraIntrinsics(100, 100, 50, 50, 200, 200), CameraPose.identity())
    u, v, z, _ = project_points(np.array([[1.0, 0, 2]]), M)
    assert u[0] == pytest.approx(100.0, abs=1e-12)


def test_round_half_up_ties():
    np.testing.assert_array_equal(round_half_up(np.array([0.5, 1.5, -0.5, -1.5, 2.49])),
                                  [1, 2, 0, -1, 2])


def test_link_matrix_rules():
    intr = CameraIntrinsics(1.0, 1.0, 1.0, 1.0, 3, 3)
    depth = np.full((3, 3), 2.0)
    depth[0, 0] = 0.0
    pts = np.array([
        [0.0, 0.0, 2.0],      # center pixel, depth matches
        [0.0, 0.0, 2.2],      # center pixel, behind the surface by more than delta
        [10.0, 0.0, 2.0],     # outside the image
        [-2.0, -2.0, 2.0],    # pixel (0,0) with invalid depth
        [0.0, 0.0, -2.0],     # behind camera
        [0.0, 0.0, 2.05],     # exactly at the tolerance
    ])
    link = build_link_matrix(pts, intr, CameraPose.identity(), depth, 0.05)
    np.testing.assert_array_equal(link.valid, [True, False, False, False, False, True])
    assert (link.u[0], link.v[0]) == (1, 1)


def test_link_matrix_argument_checks():
    intr = unit_intr(4, 3)
    with pytest.raises(ValueError):
        build_link_matrix(np.zeros((1, 3)), intr, CameraPose.identity(), np.ones((4, 3)), 0.05)
    with pytest.raises(ValueError):
        build_link_matrix(np.zeros((1, 3)), intr, CameraPose.identity(), np.ones((3, 4)), 0.0)


def test_huge_projection_does_not_wrap():
    intr = CameraIntrinsics(500.0, 500.0, 10.0, 10.0, 20, 20)
    pts = np.array([[1.0, 1.0, 1e-8], [-1.0, -1.0, 2e-9]])
    link = build_link_matrix(pts, intr, CameraPose.identity(), np.ones((20, 20)), 0.05)
    assert not link.valid.any()


def test_matches_renderer_on_occluding_boxes(small_scene):
    b = small_scene.bundle
    for view, render in zip(b.views, small_scene.renders):
        link = build_link_matrix(b.cloud, view.intrinsics, view.pose, view.depth, b.delta)
        np.testing.assert_array_equal(link.valid, render.visible)


def test_two_boxes_occlusion():
    # a near and a far square, both facing the camera; the far one is hidden where they overlap
    g = np.linspace(-0.3, 0.3, 25)
    near = np.array([[x, y, 2.0] for x in g for y in g])
    far = np.array([[x, y, 3.0] for x in g for y in g]) + [0.2, 0, 0]
    pts = np.vstack([near, far])
    ids = np.repeat([0, 1], len(near))
    intr = CameraIntrinsics(60.0, 60.0, 31.5, 23.5, 64, 48)
    pose = CameraPose.identity()
    r = render_view(pts, ids, intr, pose)
    link = build_link_matrix(pts, intr, pose, r.depth, 0.05)
    np.testing.assert_array_equal(link.valid, r.visible)
    hidden_far = ~link.valid[len(near):]
    assert hidden_far.sum() > 0
    # a far point is hidden exactly when the near square owns its pixel
    u = np.floor(60.0 * far[:, 0] / 3.0 + 31.5 + 0.5).astype(int)
    v = np.floor(60.0 * far[:, 1] / 3.0 + 23.5 + 0.5).astype(int)
    np.testing.assert_array_equal(hidden_far, r.pixel_object[v, u] == 0)


def test_point_order_invariance(small_scene):
    b = small_scene.bundle
    view = b.views[0]
    perm = np.random.default_rng(1).permutation(b.num_points)
    a = build_link_matrix(b.cloud, view.intrinsics, view.pose, view.depth, b.delta)
    p = build_link_matrix(b.cloud.positions[perm], view.intrinsics, view.pose, view.depth, b.delta)
    np.testing.assert_array_equal(a.as_array()[perm], p.as_array())


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_rigid_world_transform_invariance(seed):
    rng = np.random.default_rng(seed)
    intr = CameraIntrinsics(200.0, 210.0, 63.5, 47.5, 128, 96)
    pose = CameraPose.look_at(rng.normal(size=3) * 0.2 + [0, 0, 0], [0, 3.0, 0.2], up=(0, 0, 1))
    pts = rng.normal(size=(300, 3)) * 0.7 + [0, 3.0, 0.2]
    depth = rng.uniform(0.5, 5.0, intr.shape)

    G_R = Rotation.random(random_state=rng).as_matrix()
    G_t = rng.normal(size=3) * 5
    moved = pts @ G_R.T + G_t
    # x_cam = R x + t = R G_R^T (x' - G_t) + t
    pose2 = CameraPose(pose.R @ G_R.T, pose.t - pose.R @ G_R.T @ G_t)

    u1, v1, z1, _ = project_points(pts, compose_projection(intr, pose))
    u2, v2, z2, _ = project_points(moved, compose_projection(intr, pose2))
    assert np.nanmax(np.abs(u1 - u2)) < 1e-6
    assert np.nanmax(np.abs(v1 - v2)) < 1e-6

    a = build_link_matrix(pts, intr, pose, depth, 0.05)
    b = build_link_matrix(moved, intr, pose2, depth, 0.05)
    # away from rounding boundaries and the depth tolerance edge the links agree exactly
    frac_u, frac_v = np.modf(u1 + 0.5)[0], np.modf(v1 + 0.5)[0]
    safe = (np.abs(frac_u) > 1e-5) & (np.abs(frac_v) > 1e-5)
    np.testing.assert_array_equal(a.u[safe], b.u[safe])
    np.testing.assert_array_equal(a.v[safe], b.v[safe])
    dz = np.abs(np.abs(depth[np.clip(a.v, 0, 95), np.clip(a.u, 0, 127)] - z1) - 0.05)
    safe &= dz > 1e-6
    np.testing.assert_array_equal(a.valid[safe], b.valid[safe])


def test_look_at_and_camera_to_world():
    pose = CameraPose.look_at([1.0, 2.0, 3.0], [1.0, 5.0, 3.0])
    np.testing.assert_allclose(pose.center, [1, 2, 3], atol=1e-12)
    # target lies on the optical axis in front of the camera
    cam = pose.R @ np.array([1.0, 5.0, 3.0]) + pose.t
    np.testing.assert_allclose(cam, [0, 0, 3], atol=1e-12)
    c2w = np.linalg.inv(pose.as_matrix())
    again = CameraPose.from_camera_to_world(c2w)
    np.testing.assert_allclose(again.R, pose.R, atol=1e-12)
    np.testing.assert_allclose(again.t, pose.t, atol=1e-12)
