"""SO(3) / SE(3) primitives.

Rotations are plain ``(3, 3)`` float arrays and translations ``(3,)`` arrays.
Batched variants operate on stacks of shape ``(n, 3, 3)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import (
    DegenerateProjectionError,
    InvalidArgumentError,
    NearSingularityError,
)

__all__ = [
    "Pose",
    "SvdTriple",
    "hat",
    "vee",
    "so3_exp",
    "so3_exp_batch",
    "so3_log",
    "svd3",
    "project_to_so3",
    "project_to_so3_batch",
    "chordal_distance",
    "translation_residual",
    "quat_to_rot",
    "rot_to_quat",
    "is_rotation",
    "geodesic_angle",
]

# Below this angle the Rodrigues coefficients are replaced by their series.
SMALL_ANGLE = 1e-8
ROTATION_TOL = 1e-9


@dataclass(frozen=True)
class Pose:
    """Element of SE(3): ``x -> rotation @ x + translation``."""

    rotation: np.ndarray
    translation: np.ndarray

    def as_matrix(self):
        T = np.eye(4)
        T[:3, :3] = self.rotation
        T[:3, 3] = self.translation
        return T

    def compose(self, other: "Pose") -> "Pose":
        return Pose(self.rotation @ other.rotation,
                    self.translation + self.rotation @ other.translation)

    def inverse(self) -> "Pose":
        Rt = self.rotation.T
        return Pose(Rt, -Rt @ self.translation)


@dataclass(frozen=True)
class SvdTriple:
    """``Y = U @ diag(D) @ V.T`` with ``D`` descending and nonnegative."""

    U: np.ndarray
    D: np.ndarray
    V: np.ndarray


def hat(v):
    """Skew-symmetric matrix with ``hat(v) @ w == cross(v, w)``."""
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def vee(S):
    return np.array([S[2, 1], S[0, 2], S[1, 0]])


def _check_finite_vector(v, name="v"):
    v = np.asarray(v, dtype=float)
    if v.shape != (3,):
        raise InvalidArgumentError(f"{name} must have shape (3,), got {v.shape}")
    if not np.all(np.isfinite(v)):
        raise InvalidArgumentError(f"{name} must be finite")
    return v


def so3_exp(v) -> np.ndarray:
    """Rotation about axis ``v / |v|`` by angle ``|v|`` (Rodrigues formula).

    For ``|v| < 1e-8`` the coefficients ``sin(a)/a`` and ``(1 - cos(a))/a**2``
    are evaluated by their Taylor series, so the map is smooth through zero.
    """
    v = _check_finite_vector(v)
    theta2 = float(v @ v)
    theta = np.sqrt(theta2)
    if theta < SMALL_ANGLE:
        a = 1.0 - theta2 / 6.0
        b = 0.5 - theta2 / 24.0
    else:
        a = np.sin(theta) / theta
        b = (1.0 - np.cos(theta)) / theta2
    K = hat(v)
    return np.eye(3) + a * K + b * (K @ K)


def so3_exp_batch(V) -> np.ndarray:
    """Vectorized :func:`so3_exp` over an ``(n, 3)`` array."""
    V = np.asarray(V, dtype=float).reshape(-1, 3)
    if not np.all(np.isfinite(V)):
        raise InvalidArgumentError("tangent vectors must be finite")
    theta2 = np.einsum("ij,ij->i", V, V)
    theta = np.sqrt(theta2)
    small = theta < SMALL_ANGLE
    safe = np.where(small, 1.0, theta)
    a = np.where(small, 1.0 - theta2 / 6.0, np.sin(safe) / safe)
    b = np.where(small, 0.5 - theta2 / 24.0, (1.0 - np.cos(safe)) / safe**2)
    K = np.zeros((len(V), 3, 3))
    K[:, 0, 1], K[:, 0, 2], K[:, 1, 2] = -V[:, 2], V[:, 1], -V[:, 0]
    K[:, 1, 0], K[:, 2, 0], K[:, 2, 1] = V[:, 2], -V[:, 1], V[:, 0]
    return np.eye(3) + a[:, None, None] * K + b[:, None, None] * (K @ K)


def so3_log(R) -> np.ndarray:
    """Axis-angle vector of a rotation, with magnitude in ``[0, pi)``.

    Raises
    ------
    NearSingularityError
        If ``trace(R) <= -1 + 1e-9``, i.e. the angle is (numerically) pi and
        the axis sign is undetermined.
    """
    R = np.asarray(R, dtype=float)
    tr = np.trace(R)
    if tr <= -1.0 + 1e-9:
        raise NearSingularityError("rotation angle is at or near pi")
    w = 0.5 * vee(R - R.T)  # sin(theta) * axis
    s = np.linalg.norm(w)
    c = 0.5 * (tr - 1.0)
    theta = np.arctan2(s, c)
    if theta < SMALL_ANGLE:
        return w * (1.0 + theta**2 / 6.0)
    if theta < np.pi - 1e-3:
        return w * (theta / s)
    # Near pi the antisymmetric part is tiny; read the axis off the
    # symmetric part (1 - cos) a a^T and take its sign from w.
    S = 0.5 * (R + R.T) - c * np.eye(3)
    k = int(np.argmax(np.diag(S)))
    axis = S[:, k] / np.sqrt(S[k, k])
    if axis @ w < 0:
        axis = -axis
    return theta * axis / np.linalg.norm(axis)


def svd3(Y) -> SvdTriple:
    U, D, Vt = np.linalg.svd(np.asarray(Y, dtype=float))
    return SvdTriple(U, D, Vt.T)


def project_to_so3(Y) -> np.ndarray:
    """Frobenius-nearest rotation to ``Y``.

    Returns ``U @ diag(1, 1, det(U V^T)) @ V^T`` from the SVD of ``Y``. This
    is the orthogonal Procrustes solution with the determinant pinned to +1.

    Raises
    ------
    DegenerateProjectionError
        If ``Y`` is zero, or ``det(Y) < 0`` with the two smallest singular
        values equal (the minimizer is then not unique).
    """
    Y = np.asarray(Y, dtype=float)
    if Y.shape != (3, 3) or not np.all(np.isfinite(Y)):
        raise InvalidArgumentError("expected a finite 3x3 matrix")
    R, bad = project_to_so3_batch(Y[None])
    if bad[0]:
        raise DegenerateProjectionError(
            "nearest rotation is not unique for this matrix")
    return R[0]


def project_to_so3_batch(Y):
    """Project a stack ``(n, 3, 3)`` onto SO(3).

    Returns ``(R, degenerate)`` where ``degenerate`` is a boolean mask of the
    inputs whose projection is not unique. Those entries of ``R`` are still
    filled (with an arbitrary minimizer) so callers can decide what to do.
    """
    Y = np.asarray(Y, dtype=float)
    U, D, Vt = np.linalg.svd(Y)
    d = np.linalg.det(U @ Vt)
    sign = np.where(d < 0.0, -1.0, 1.0)
    Us = U.copy()
    Us[:, :, 2] *= sign[:, None]
    R = Us @ Vt
    scale = np.maximum(D[:, 0], np.finfo(float).tiny)
    zero = D[:, 0] == 0.0
    tie = (d < 0.0) & ((D[:, 1] - D[:, 2]) <= 1e-12 * scale)
    return R, zero | tie


def chordal_distance(Ra, Rb) -> float:
    return float(np.linalg.norm(np.asarray(Ra) - np.asarray(Rb)))


def translation_residual(ti, tj, Ri, tij) -> float:
    """Euclidean norm ``|t_j - t_i - R_i t_ij|``."""
    return float(np.linalg.norm(np.asarray(tj) - np.asarray(ti)
                                - np.asarray(Ri) @ np.asarray(tij)))


def quat_to_rot(q) -> np.ndarray:
    """Rotation from a Hamilton quaternion ``(qx, qy, qz, qw)``.

    The quaternion is normalized first; a zero quaternion is rejected.
    """
    q = np.asarray(q, dtype=float)
    n = np.linalg.norm(q)
    if q.shape != (4,) or not np.isfinite(n) or n == 0.0:
        raise InvalidArgumentError("quaternion must be a finite nonzero 4-vector")
    x, y, z, w = q / n
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])


def rot_to_quat(R) -> np.ndarray:
    """Inverse of :func:`quat_to_rot`; returns ``(qx, qy, qz, qw)``, ``qw >= 0``."""
    R = np.asarray(R, dtype=float)
    tr = np.trace(R)
    # Shepperd: branch on the largest of (w, x, y, z) for stability.
    cand = np.array([R[0, 0], R[1, 1], R[2, 2], tr])
    k = int(np.argmax(cand))
    if k == 3:
        s = 2.0 * np.sqrt(1.0 + tr)
        q = np.array([(R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s,
                      (R[1, 0] - R[0, 1]) / s, 0.25 * s])
    elif k == 0:
        s = 2.0 * np.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2])
        q = np.array([0.25 * s, (R[0, 1] + R[1, 0]) / s,
                      (R[0, 2] + R[2, 0]) / s, (R[2, 1] - R[1, 2]) / s])
    elif k == 1:
        s = 2.0 * np.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2])
        q = np.array([(R[0, 1] + R[1, 0]) / s, 0.25 * s,
                      (R[1, 2] + R[2, 1]) / s, (R[0, 2] - R[2, 0]) / s])
    else:
        s = 2.0 * np.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1])
        q = np.array([(R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s,
                      0.25 * s, (R[1, 0] - R[0, 1]) / s])
    q /= np.linalg.norm(q)
    return -q if q[3] < 0 else q


def is_rotation(R, tol=ROTATION_TOL) -> bool:
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3) or not np.all(np.isfinite(R)):
        return False
    return (np.linalg.norm(R.T @ R - np.eye(3)) <= tol
            and abs(np.linalg.det(R) - 1.0) <= tol)


def geodesic_angle(Ra, Rb) -> float:
    """Angle of the relative rotation ``Ra^T Rb`` in ``[0, pi]``."""
    c = 0.5 * (np.trace(np.asarray(Ra).T @ np.asarray(Rb)) - 1.0)
    return float(np.arccos(np.clip(c, -1.0, 1.0)))
