"""Elementary rigid-body transforms.

Rotations are 3x3 numpy arrays, translations 3-vectors in millimetres,
angles in radians.  Homogeneous 4x4 helpers carry the ``h`` prefix.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ORTHONORMALITY_TOL = 1e-12


def rotx(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def roty(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rotz(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def hrotx(angle: float) -> np.ndarray:
    T = np.eye(4)
    T[:3, :3] = rotx(angle)
    return T


def hroty(angle: float) -> np.ndarray:
    T = np.eye(4)
    T[:3, :3] = roty(angle)
    return T


def hrotz(angle: float) -> np.ndarray:
    T = np.eye(4)
    T[:3, :3] = rotz(angle)
    return T


def htransx(d: float) -> np.ndarray:
    T = np.eye(4)
    T[0, 3] = d
    return T


def htransy(d: float) -> np.ndarray:
    T = np.eye(4)
    T[1, 3] = d
    return T


def htransz(d: float) -> np.ndarray:
    T = np.eye(4)
    T[2, 3] = d
    return T


def euler_zyx(rz: float, ry: float, rx: float) -> np.ndarray:
    """Rotation from ZYX Euler angles: R = Rz(rz) @ Ry(ry) @ Rx(rx)."""
    return rotz(rz) @ roty(ry) @ rotx(rx)


def euler_zyx_angles(R: np.ndarray) -> tuple[float, float, float]:
    """Inverse of :func:`euler_zyx`; ry is taken in (-pi/2, pi/2)."""
    ry = np.arcsin(np.clip(-R[2, 0], -1.0, 1.0))
    if abs(R[2, 0]) > 1.0 - 1e-12:
        # gimbal lock: rz absorbs the free angle
        rz = np.arctan2(-R[0, 1], R[1, 1])
        rx = 0.0
    else:
        rz = np.arctan2(R[1, 0], R[0, 0])
        rx = np.arctan2(R[2, 1], R[2, 2])
    return float(rz), float(ry), float(rx)


def wrap_angle(angle: float) -> float:
    """Wrap to (-pi, pi]."""
    a = (-angle + np.pi) % (2.0 * np.pi)
    return float(np.pi - a)


def orthonormality_error(R: np.ndarray) -> float:
    """max(|R^T R - I|) plus any determinant deviation from +1."""
    err = float(np.abs(R.T @ R - np.eye(3)).max())
    return max(err, abs(float(np.linalg.det(R)) - 1.0))


@dataclass(frozen=True)
class RigidTransform:
    """Rotation + translation, millimetres.

    The rotation must be orthonormal with determinant +1 (checked when
    ``validate`` is used); arrays are frozen after construction.
    """

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rotation", np.asarray(self.rotation, dtype=float))
        object.__setattr__(self, "translation", np.asarray(self.translation, dtype=float))
        self.rotation.setflags(write=False)
        self.translation.setflags(write=False)

    @staticmethod
    def identity() -> "RigidTransform":
        return RigidTransform(np.eye(3), np.zeros(3))

    @staticmethod
    def from_matrix(T: np.ndarray, validate: bool = False) -> "RigidTransform":
        T = np.asarray(T, dtype=float)
        if T.shape != (4, 4):
            raise ValueError(f"expected 4x4 homogeneous matrix, got {T.shape}")
        tf = RigidTransform(T[:3, :3].copy(), T[:3, 3].copy())
        if validate and tf.orthonormality_error() > 1e-9:
            raise ValueError("rotation block is not orthonormal")
        return tf

    def matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.rotation
        T[:3, 3] = self.translation
        return T

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        return RigidTransform(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def __matmul__(self, other: "RigidTransform") -> "RigidTransform":
        return self.compose(other)

    def inverse(self) -> "RigidTransform":
        Rt = self.rotation.T
        return RigidTransform(Rt, -Rt @ self.translation)

    def apply_point(self, p: np.ndarray) -> np.ndarray:
        return self.rotation @ np.asarray(p, dtype=float) + self.translation

    def apply_direction(self, d: np.ndarray) -> np.ndarray:
        return self.rotation @ np.asarray(d, dtype=float)

    def orthonormality_error(self) -> float:
        return orthonormality_error(self.rotation)

    @property
    def tool_axis(self) -> np.ndarray:
        """Third rotation column: the z axis of the moving frame."""
        return self.rotation[:, 2]
