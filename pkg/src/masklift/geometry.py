"""Pinhole projection and the per-view point/pixel link matrix.

Poses are world-to-camera: ``x_cam = R @ x_world + t``. Camera axes follow the
OpenCV convention (x right, y down, z forward), so a point is in front of the
camera when its projected depth is positive.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

BEHIND_CAMERA_EPS = 1e-9
DEFAULT_DELTA = 0.05


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if self.width < 1 or self.height < 1:
            raise ValueError(f"image size must be at least 1x1, got {self.width}x{self.height}")
        if not np.all(np.isfinite([self.fx, self.fy, self.cx, self.cy])):
            raise ValueError("intrinsics must be finite")

    @property
    def K(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    @property
    def shape(self) -> tuple[int, int]:
        """Image shape as ``(H, W)``."""
        return (self.height, self.width)


@dataclass(frozen=True, eq=False)
class CameraPose:
    """Rigid world-to-camera transform."""

    R: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        R = np.array(self.R, dtype=np.float64)
        t = np.array(self.t, dtype=np.float64).reshape(-1)
        if R.shape != (3, 3) or t.shape != (3,):
            raise ValueError(f"expected R 3x3 and t 3-vector, got {R.shape} and {t.shape}")
        if not (np.all(np.isfinite(R)) and np.all(np.isfinite(t))):
            raise ValueError("pose must be finite")
        if np.abs(R.T @ R - np.eye(3)).max() > 1e-6 or abs(np.linalg.det(R) - 1.0) > 1e-6:
            raise ValueError("R is not a proper rotation (R^T R != I or det(R) != 1)")
        R.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "t", t)

    @classmethod
    def identity(cls) -> "CameraPose":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, extrinsic) -> "CameraPose":
        """Build from a 4x4 (or 3x4) world-to-camera matrix ``[R|t]``."""
        E = np.asarray(extrinsic, dtype=np.float64)
        return cls(E[:3, :3], E[:3, 3])

    @classmethod
    def from_camera_to_world(cls, c2w) -> "CameraPose":
        """Invert a camera-to-world matrix (the usual SLAM/ScanNet export) into a world-to-camera pose."""
        c2w = np.asarray(c2w, dtype=np.float64)
        Rc, tc = c2w[:3, :3], c2w[:3, 3]
        return cls(Rc.T, -Rc.T @ tc)

    @classmethod
    def look_at(cls, eye, target, up=(0.0, 0.0, 1.0)) -> "CameraPose":
        """Camera at ``eye`` looking at ``target`` with image-up roughly along ``up``."""
        eye = np.asarray(eye, dtype=np.float64)
        forward = np.asarray(target, dtype=np.float64) - eye
        forward /= np.linalg.norm(forward)
        right = np.cross(forward, np.asarray(up, dtype=np.float64))
        norm = np.linalg.norm(right)
        if norm < 1e-12:
            raise ValueError("up vector is parallel to the viewing direction")
        right /= norm
        down = np.cross(forward, right)
        R = np.stack([right, down, forward])
        return cls(R, -R @ eye)

    def as_matrix(self) -> np.ndarray:
        E = np.eye(4)
        E[:3, :3] = self.R
        E[:3, 3] = self.t
        return E

    @property
    def center(self) -> np.ndarray:
        return -self.R.T @ self.t


@dataclass(frozen=True, eq=False)
class LinkMatrix:
    """Per-point correspondence with one view.

    ``u``/``v`` are rounded pixel columns/rows, ``valid`` is the visibility bit and
    ``z`` the projected camera depth (kept for diagnostics). ``u``/``v`` are only
    meaningful where ``valid`` is set.
    """

    u: np.ndarray
    v: np.ndarray
    valid: np.ndarray
    z: np.ndarray

    def __len__(self):
        return len(self.valid)

    def as_array(self) -> np.ndarray:
        """The N x 3 ``[u, v, m]`` integer matrix."""
        return np.stack([self.u, self.v, self.valid.astype(np.int64)], axis=1)


def round_half_up(x):
    """Round to nearest, ties toward +inf (2.5 -> 3, -2.5 -> -2)."""
    return np.floor(np.asarray(x, dtype=np.float64) + 0.5)


def compose_projection(intrinsics: CameraIntrinsics, pose: CameraPose) -> np.ndarray:
    """Return the 3x4 projection matrix ``K [R | t]``."""
    Rt = np.concatenate([pose.R, pose.t[:, None]], axis=1)
    return intrinsics.K @ Rt


def _positions(cloud) -> np.ndarray:
    return np.asarray(getattr(cloud, "positions", cloud), dtype=np.float64)


def project_points(cloud, M: np.ndarray):
    """Project points through a 3x4 matrix.

    Returns ``(u_raw, v_raw, z, behind)`` where ``behind`` flags points with
    ``z <= 1e-9``. For flagged points ``u_raw``/``v_raw`` are NaN.
    """
    X = _positions(cloud)
    M = np.asarray(M, dtype=np.float64)
    h = X @ M[:, :3].T + M[:, 3]
    z = h[:, 2]
    behind = z <= BEHIND_CAMERA_EPS
    with np.errstate(divide="ignore", invalid="ignore"):
        u_raw = np.where(behind, np.nan, h[:, 0] / z)
        v_raw = np.where(behind, np.nan, h[:, 1] / z)
    return u_raw, v_raw, z, behind


def build_link_matrix(cloud, intrinsics: CameraIntrinsics, pose: CameraPose,
                      depth: np.ndarray, delta: float = DEFAULT_DELTA) -> LinkMatrix:
    """Link each point to the pixel it projects to, rejecting occluded points.

    A point is valid when it lies in front of the camera, rounds to a pixel
    inside ``[0, W) x [0, H)``, the depth map is non-zero there, and the depth
    map agrees with the point's projected depth to within ``delta`` meters.
    """
    if not delta > 0:
        raise ValueError(f"delta must be positive, got {delta}")
    depth = np.asarray(depth, dtype=np.float64)
    if depth.shape != intrinsics.shape:
        raise ValueError(f"depth shape {depth.shape} does not match intrinsics {intrinsics.shape}")

    u_raw, v_raw, z, behind = project_points(cloud, compose_projection(intrinsics, pose))
    # clip before the int cast; near-plane points can project to ~1e300
    uf = np.clip(np.nan_to_num(round_half_up(u_raw), nan=-1.0), -1, intrinsics.width)
    vf = np.clip(np.nan_to_num(round_half_up(v_raw), nan=-1.0), -1, intrinsics.height)
    u = uf.astype(np.int64)
    v = vf.astype(np.int64)

    inside = ~behind & (u >= 0) & (u < intrinsics.width) & (v >= 0) & (v < intrinsics.height)
    d = np.zeros(len(z))
    d[inside] = depth[v[inside], u[inside]]
    valid = inside & (d > 0) & (np.abs(d - z) <= delta)
    for arr in (u, v, valid, z):
        arr.flags.writeable = False
    return LinkMatrix(u=u, v=v, valid=valid, z=z)
