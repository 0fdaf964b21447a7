"""Minimal 3-D rigid transform helpers (rotations, poses)."""

from __future__ import annotations

import numpy as np

I3 = np.eye(3)


def hat(v: np.ndarray) -> np.ndarray:
    """Skew-symmetric matrix such that hat(v) @ w == cross(v, w)."""
    return np.array(
        [
            [0.0, -v[2], v[1]],
            [v[2], 0.0, -v[0]],
            [-v[1], v[0], 0.0],
        ]
    )


def axis_angle(axis: np.ndarray, angle: float) -> np.ndarray:
    """Rotation matrix about a unit axis (Rodrigues)."""
    a = np.asarray(axis, dtype=float)
    c, s = np.cos(angle), np.sin(angle)
    K = hat(a)
    return c * I3 + s * K + (1.0 - c) * np.outer(a, a)


def rpy_matrix(rpy: np.ndarray) -> np.ndarray:
    """Roll-pitch-yaw (x, y, z fixed-axis) rotation matrix."""
    r, p, y = rpy
    cr, sr = np.cos(r), np.sin(r)
    cp, sp = np.cos(p), np.sin(p)
    cy, sy = np.cos(y), np.sin(y)
    Rz = np.array([[cy, -sy, 0], [sy, cy, 0], [0, 0, 1]])
    Ry = np.array([[cp, 0, sp], [0, 1, 0], [-sp, 0, cp]])
    Rx = np.array([[1, 0, 0], [0, cr, -sr], [0, sr, cr]])
    return Rz @ Ry @ Rx


class Pose:
    """World pose of a frame: rotation R and origin p."""

    __slots__ = ("R", "p")

    def __init__(self, R: np.ndarray | None = None, p: np.ndarray | None = None):
        self.R = I3.copy() if R is None else np.asarray(R, dtype=float)
        self.p = np.zeros(3) if p is None else np.asarray(p, dtype=float)

    @staticmethod
    def identity() -> "Pose":
        return Pose()

    @staticmethod
    def from_xyz_rpy(xyz, rpy) -> "Pose":
        return Pose(rpy_matrix(np.asarray(rpy, dtype=float)), np.asarray(xyz, dtype=float))

    def compose(self, other: "Pose") -> "Pose":
        """self * other: apply `other` in this frame."""
        return Pose(self.R @ other.R, self.R @ other.p + self.p)

    def apply(self, point: np.ndarray) -> np.ndarray:
        return self.R @ point + self.p

    def rotate(self, vec: np.ndarray) -> np.ndarray:
        return self.R @ vec

    def copy(self) -> "Pose":
        return Pose(self.R.copy(), self.p.copy())

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        return f"Pose(p={self.p}, R=\n{self.R})"
