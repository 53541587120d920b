"""SE(3)/SO(3) primitives.

Twists are ordered angular-first, ``(omega, v)``, everywhere in the package.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

TWIST_ORDER = ("wx", "wy", "wz", "vx", "vy", "vz")

ROT_TOL = 1e-9
VEE_SKEW_TOL = 1e-6


def skew(w: np.ndarray) -> np.ndarray:
    x, y, z = w
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


@dataclass(frozen=True, eq=False)
class Pose:
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=float).reshape(3, 3)
        t = np.asarray(self.translation, dtype=float).reshape(3)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, T: np.ndarray) -> "Pose":
        T = np.asarray(T, dtype=float)
        return cls(T[:3, :3], T[:3, 3])

    @classmethod
    def from_list(cls, values) -> "Pose":
        """Inverse of :meth:`to_list`: 9 row-major rotation entries then 3 translation."""
        v = np.asarray(values, dtype=float)
        if v.shape != (12,):
            raise ValueError(f"pose needs 12 numbers, got shape {v.shape}")
        return cls(v[:9].reshape(3, 3), v[9:])

    def to_list(self) -> list[float]:
        return [float(x) for x in self.rotation.ravel()] + [float(x) for x in self.translation]

    def matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.rotation
        T[:3, 3] = self.translation
        return T

    def compose(self, other: "Pose") -> "Pose":
        return Pose(self.rotation @ other.rotation, self.rotation @ other.translation + self.translation)

    def inverse(self) -> "Pose":
        Rt = self.rotation.T
        return Pose(Rt, -Rt @ self.translation)

    def is_valid(self, tol: float = ROT_TOL) -> bool:
        R = self.rotation
        return (
            np.linalg.norm(R.T @ R - np.eye(3)) < tol
            and abs(np.linalg.det(R) - 1.0) < tol
            and bool(np.all(np.isfinite(self.translation)))
        )


def hat(twist) -> np.ndarray:
    """R^6 (omega, v) -> 4x4 se(3) matrix."""
    xi = np.asarray(twist, dtype=float)
    X = np.zeros((4, 4))
    X[:3, :3] = skew(xi[:3])
    X[:3, 3] = xi[3:]
    return X


def vee(X: np.ndarray) -> np.ndarray:
    """4x4 se(3) matrix -> (omega, v). Rejects unprojected input."""
    X = np.asarray(X, dtype=float)
    W = X[:3, :3]
    if np.max(np.abs(W + W.T)) > VEE_SKEW_TOL or np.max(np.abs(X[3])) > VEE_SKEW_TOL:
        raise ValueError("vee: input is not an se(3) matrix (project it first)")
    return np.array([X[2, 1], X[0, 2], X[1, 0], X[0, 3], X[1, 3], X[2, 3]])


def proj_se3(A: np.ndarray) -> np.ndarray:
    """Frobenius-nearest se(3) element: skew part of the rotation block,
    translation column kept, bottom row zeroed."""
    A = np.asarray(A, dtype=float)
    P = np.zeros((4, 4))
    P[:3, :3] = 0.5 * (A[:3, :3] - A[:3, :3].T)
    P[:3, 3] = A[:3, 3]
    return P


def rot_about_axis(axis, angle: float) -> np.ndarray:
    k = np.asarray(axis, dtype=float)
    if abs(np.linalg.norm(k) - 1.0) > ROT_TOL:
        raise ValueError("rotation axis must be a unit vector")
    K = skew(k)
    return np.eye(3) + np.sin(angle) * K + (1.0 - np.cos(angle)) * (K @ K)


def rot_x(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def euler_zyx(roll: float, pitch: float, yaw: float) -> np.ndarray:
    return rot_z(yaw) @ rot_y(pitch) @ rot_x(roll)


def orthonormalize(R: np.ndarray) -> np.ndarray:
    """Nearest rotation (polar decomposition via SVD)."""
    U, _, Vt = np.linalg.svd(R)
    D = np.diag([1.0, 1.0, np.sign(np.linalg.det(U @ Vt))])
    return U @ D @ Vt


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])
