"""Pinhole camera model, rigid transforms and absolute orientation.

Conventions: a :class:`Pose` maps points expressed in frame {p} into
frame {q}, ``x_q = R @ x_p + t``. Points are length-3 float arrays, pixels
length-2 float arrays ``(u, v)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateConfiguration, NonPositiveDepth


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    skew: float = 0.0

    def __post_init__(self):
        vals = (self.fx, self.fy, self.cx, self.cy, self.skew)
        if not all(np.isfinite(v) for v in vals):
            raise ValueError("intrinsics must be finite")
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")

    @property
    def K(self) -> np.ndarray:
        return np.array(
            [[self.fx, self.skew, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )

    @property
    def K_inv(self) -> np.ndarray:
        # closed form inverse of the upper-triangular calibration matrix
        fx, fy, cx, cy, s = self.fx, self.fy, self.cx, self.cy, self.skew
        return np.array(
            [
                [1.0 / fx, -s / (fx * fy), (s * cy - cx * fy) / (fx * fy)],
                [0.0, 1.0 / fy, -cy / fy],
                [0.0, 0.0, 1.0],
            ]
        )

    @classmethod
    def from_matrix(cls, K) -> "CameraIntrinsics":
        K = np.asarray(K, dtype=float)
        if K.shape != (3, 3):
            raise ValueError("K must be 3x3")
        if not np.allclose(K[2], [0.0, 0.0, 1.0]) or K[1, 0] != 0.0:
            raise ValueError("K must be upper triangular with K[2,2] == 1")
        return cls(K[0, 0], K[1, 1], K[0, 2], K[1, 2], K[0, 1])


@dataclass(frozen=True)
class Pose:
    """Rigid transform from frame {p} to frame {q}."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        R = np.array(self.rotation, dtype=float).reshape(3, 3)
        t = np.array(self.translation, dtype=float).reshape(3)
        R.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    def is_valid(self, tol: float = 1e-9) -> bool:
        R = self.rotation
        return bool(
            np.all(np.isfinite(R))
            and np.all(np.isfinite(self.translation))
            and np.max(np.abs(R.T @ R - np.eye(3))) <= tol
            and abs(np.linalg.det(R) - 1.0) <= tol
        )

    def inverse(self) -> "Pose":
        Rt = self.rotation.T
        return Pose(Rt, -Rt @ self.translation)

    def compose(self, other: "Pose") -> "Pose":
        """Return ``self ∘ other`` (apply ``other`` first)."""
        return Pose(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )


def as_vec3(x) -> np.ndarray:
    v = np.asarray(x, dtype=float).reshape(3)
    if not np.all(np.isfinite(v)):
        raise ValueError(f"non-finite vector {v}")
    return v


def project(K: CameraIntrinsics, point) -> np.ndarray:
    """Pinhole projection ``f(K @ point)``; the point must have positive depth."""
    v = as_vec3(point)
    if v[2] <= 0.0:
        raise NonPositiveDepth(f"point {v} has non-positive depth")
    h = K.K @ v
    return h[:2] / h[2]


def bearing_from_pixel(K: CameraIntrinsics, px) -> np.ndarray:
    u, v = np.asarray(px, dtype=float).reshape(2)
    ray = K.K_inv @ np.array([u, v, 1.0])
    ray /= np.linalg.norm(ray)
    assert ray[2] > 0.0
    return ray


def transform(pose: Pose, point) -> np.ndarray:
    return pose.rotation @ as_vec3(point) + pose.translation


def rot_x(deg: float) -> np.ndarray:
    c, s = np.cos(np.radians(deg)), np.sin(np.radians(deg))
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(deg: float) -> np.ndarray:
    c, s = np.cos(np.radians(deg)), np.sin(np.radians(deg))
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(deg: float) -> np.ndarray:
    c, s = np.cos(np.radians(deg)), np.sin(np.radians(deg))
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def absolute_orientation(src, dst, rank_tol: float = 1e-9) -> Pose:
    """Least-squares rigid transform with ``dst ≈ R @ src + t``.

    Centroids are removed, the 3x3 cross-covariance is factored by SVD and
    the rotation sign is corrected so that ``det(R) = +1`` even when the
    unconstrained optimum is a reflection.

    Raises:
        DegenerateConfiguration: if ``src`` is (numerically) collinear.
    """
    A = np.asarray(src, dtype=float)
    B = np.asarray(dst, dtype=float)
    if A.ndim != 2 or A.shape[1] != 3 or A.shape != B.shape:
        raise ValueError("src and dst must be matching (N, 3) arrays")
    if A.shape[0] < 3:
        raise ValueError("at least three correspondences are required")

    ca = A.mean(axis=0)
    cb = B.mean(axis=0)
    A0 = A - ca
    B0 = B - cb

    sv = np.linalg.svd(A0, compute_uv=False)
    if sv[0] == 0.0 or sv[1] <= rank_tol * sv[0]:
        raise DegenerateConfiguration("source points are collinear")

    H = A0.T @ B0
    U, _, Vt = np.linalg.svd(H)
    d = np.sign(np.linalg.det(Vt.T @ U.T))
    if d == 0.0:
        d = 1.0
    R = Vt.T @ np.diag([1.0, 1.0, d]) @ U.T
    t = cb - R @ ca
    return Pose(R, t)


def rotation_error_deg(R_gt, R_est) -> float:
    """Angle of the differential rotation ``R_gt.T @ R_est`` in degrees."""
    R_gt = np.asarray(R_gt, dtype=float)
    R_est = np.asarray(R_est, dtype=float)
    # trace(A.T @ B) as an elementwise sum, which is exactly symmetric in A, B
    c = (np.sum(R_gt * R_est) - 1.0) / 2.0
    return float(np.degrees(np.arccos(np.clip(c, -1.0, 1.0))))


def translation_error(t_gt, t_est) -> float:
    return float(np.linalg.norm(np.asarray(t_gt, float) - np.asarray(t_est, float)))


def rotation_to_quaternion(R) -> np.ndarray:
    """Unit quaternion ``(w, x, y, z)`` with ``w >= 0``."""
    from scipy.spatial.transform import Rotation

    x, y, z, w = Rotation.from_matrix(np.asarray(R, dtype=float)).as_quat()
    q = np.array([w, x, y, z])
    if q[0] < 0.0:
        q = -q
    return q
