"""Rotation / similarity-transform primitives shared by losses, metrics and data.

Pose convention used throughout the package: ``Pose.R`` is the matrix that
appears in the canonical-coordinate projection ``n = R @ (p - t) / |s|``
(applied row-wise to camera-frame points ``p``).  The physical
object-to-camera rotation is therefore ``R.T``, and generated samples are
built with :func:`pose_apply`, the exact inverse of the rigid part of
:func:`nocs_project`.  Rotating an object about a canonical-frame axis
(e.g. the symmetry axis of a can) maps ``R -> rot_about_axis(axis, a) @ R``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateInput


@dataclass
class Pose:
    """9DoF pose: rotation + translation (m) + per-axis size (m)."""

    R: np.ndarray
    t: np.ndarray
    s: np.ndarray

    def __post_init__(self):
        self.R = np.asarray(self.R, dtype=np.float64).reshape(3, 3)
        self.t = np.asarray(self.t, dtype=np.float64).reshape(3)
        self.s = np.asarray(self.s, dtype=np.float64).reshape(3)

    def validate(self, tol: float = 1e-5) -> None:
        if not np.all(np.isfinite(self.R)) or not np.all(np.isfinite(self.t)):
            raise DegenerateInput("non-finite pose entries")
        if np.max(np.abs(self.R.T @ self.R - np.eye(3))) > tol:
            raise DegenerateInput("R is not orthonormal")
        if abs(np.linalg.det(self.R) - 1.0) > tol:
            raise DegenerateInput("det(R) != +1")
        if np.any(self.s <= 0):
            raise DegenerateInput("sizes must be positive")


@dataclass
class PointCloud:
    """N x 3 coordinates in meters, with an optional per-point color channel."""

    points: np.ndarray
    appearance: np.ndarray | None = field(default=None)

    def __post_init__(self):
        self.points = np.asarray(self.points)
        if self.appearance is not None:
            self.appearance = np.asarray(self.appearance)


def rot_x(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[1, 0, 0], [0, c, -s], [0, s, c]], dtype=np.float64)


def rot_y(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]], dtype=np.float64)


def rot_z(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]], dtype=np.float64)


def rot_about_axis(axis: np.ndarray, angle: float) -> np.ndarray:
    """Rodrigues rotation about a unit axis."""
    k = np.asarray(axis, dtype=np.float64).reshape(3)
    k = k / np.linalg.norm(k)
    K = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
    return np.eye(3) + np.sin(angle) * K + (1.0 - np.cos(angle)) * (K @ K)


def rotation_from_6d(v: np.ndarray) -> np.ndarray:
    """Gram-Schmidt two 3-vectors into a right-handed orthonormal frame.

    Raises DegenerateInput when the first vector is near zero or the second
    is near parallel to the first.
    """
    v = np.asarray(v, dtype=np.float64).reshape(6)
    a, b = v[:3], v[3:]
    na = np.linalg.norm(a)
    if na <= 1e-8:
        raise DegenerateInput("first 3-vector has near-zero norm")
    x = a / na
    b_res = b - (b @ x) * x
    nb = np.linalg.norm(b_res)
    if nb <= 1e-8:
        raise DegenerateInput("second 3-vector is near parallel to the first")
    y = b_res / nb
    z = np.cross(x, y)
    return np.stack([x, y, z], axis=1)


def rotation_error_deg(Ra: np.ndarray, Rb: np.ndarray,
                       symmetry_axis: np.ndarray | None = None) -> float:
    """Geodesic rotation error in degrees, in [0, 180].

    With a symmetry axis (given in the canonical frame), returns the angle
    between the two poses' world-frame symmetry axes instead, which is
    invariant to spins about that axis.
    """
    Ra = np.asarray(Ra, dtype=np.float64)
    Rb = np.asarray(Rb, dtype=np.float64)
    if symmetry_axis is None:
        c = (np.trace(Ra.T @ Rb) - 1.0) / 2.0
        return float(np.degrees(np.arccos(np.clip(c, -1.0, 1.0))))
    axis = np.asarray(symmetry_axis, dtype=np.float64).reshape(3)
    axis = axis / np.linalg.norm(axis)
    # R.T maps canonical directions into the camera frame (see module docstring)
    va = Ra.T @ axis
    vb = Rb.T @ axis
    c = np.clip(va @ vb, -1.0, 1.0)
    return float(np.degrees(np.arccos(c)))


def umeyama(src: np.ndarray, dst: np.ndarray):
    """Least-squares similarity transform: dst ~ scale * R @ src + t.

    Returns (scale, R, t) with R in SO(3) (determinant correction applied).
    Raises DegenerateInput on rank-deficient source covariance.
    """
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    if src.shape != dst.shape or src.ndim != 2 or src.shape[1] != 3:
        raise DegenerateInput("point sets must both be N x 3")
    n = src.shape[0]
    if n < 4:
        raise DegenerateInput("need at least 4 points")

    mu_s = src.mean(axis=0)
    mu_d = dst.mean(axis=0)
    ds = src - mu_s
    dd = dst - mu_d

    cov = dd.T @ ds / n
    U, d, Vt = np.linalg.svd(cov)
    if d[0] <= 0 or d[-1] <= 1e-9 * d[0]:
        # also catches collinear/coincident sources (rank <= 1 covariance)
        src_sv = np.linalg.svd(ds, compute_uv=False)
        if src_sv[0] <= 0 or src_sv[-1] <= 1e-9 * src_sv[0]:
            raise DegenerateInput("source covariance is rank-deficient")

    S = np.eye(3)
    if np.linalg.det(U) * np.linalg.det(Vt) < 0:
        S[2, 2] = -1.0
    R = U @ S @ Vt

    var_s = (ds ** 2).sum() / n
    if var_s <= 0:
        raise DegenerateInput("source points are coincident")
    scale = float((d * np.diag(S)).sum() / var_s)
    t = mu_d - scale * R @ mu_s
    return scale, R, t


def nocs_project(P: np.ndarray, pose: Pose, transpose: bool = False) -> np.ndarray:
    """Map camera-frame points into the normalized canonical frame.

    Row-wise ``R @ (p - t) / |s|_2``; ``transpose=True`` uses ``R.T`` instead
    (the alternative reading of the projection, kept behind a flag).
    """
    P = np.asarray(P, dtype=np.float64)
    R = pose.R.T if transpose else pose.R
    return (P - pose.t) @ R.T / np.linalg.norm(pose.s)


def pose_apply(P: np.ndarray, pose: Pose, transpose: bool = False) -> np.ndarray:
    """Inverse of the rigid part of nocs_project: canonical points -> camera frame.

    By construction ``nocs_project(pose_apply(P, pose), pose) == P / |s|_2``.
    """
    P = np.asarray(P, dtype=np.float64)
    R = pose.R.T if transpose else pose.R
    return P @ R + pose.t


def box_corners(pose: Pose) -> np.ndarray:
    """8 x 3 corners of the oriented box with extents s, center t, axes R."""
    sx, sy, sz = pose.s / 2.0
    signs = np.array([[x, y, z] for x in (+1, -1) for y in (+1, -1) for z in (+1, -1)],
                     dtype=np.float64)
    offsets = signs * np.array([sx, sy, sz])
    return pose.t + offsets @ pose.R.T


def euler_to_stored_rotation(yaw: float, pitch: float, roll: float) -> np.ndarray:
    """Build a stored rotation from yaw (about +y, applied first in the
    canonical frame), then pitch (x) and roll (z) tilt.

    The physical object-to-camera rotation is Rz(roll)Rx(pitch)Ry(yaw);
    the stored matrix is its transpose (projection convention).
    """
    Q = rot_z(roll) @ rot_x(pitch) @ rot_y(yaw)
    return Q.T


def yaw_of_rotation(R: np.ndarray) -> float:
    """Extract the yaw angle (rad, in [-pi, pi)) from a stored rotation.

    Exact inverse of euler_to_stored_rotation away from |pitch| = 90 deg.
    """
    Q = np.asarray(R, dtype=np.float64).T
    return float(np.arctan2(-Q[2, 0], Q[2, 2]))
