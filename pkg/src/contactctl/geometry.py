"""Collision primitives and closed-form signed distances.

Supported shapes: sphere, capsule (axis = local z), half-space (outward
normal = local z, surface through the frame origin). Supported queries:
sphere-sphere, sphere-capsule, sphere-half-space, capsule-half-space.

Convention: ``signed_distance(a, pose_a, b, pose_b)`` returns the normal
pointing from body b toward body a; negative distance means penetration.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .transforms import Pose


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class Sphere:
    radius: float
    kind: str = field(default="sphere", init=False)


@dataclass(frozen=True)
class Capsule:
    radius: float
    half_length: float
    kind: str = field(default="capsule", init=False)


@dataclass(frozen=True)
class HalfSpace:
    kind: str = field(default="half_space", init=False)


@dataclass(frozen=True)
class SdfResult:
    phi: float
    witness_a: np.ndarray
    witness_b: np.ndarray
    normal: np.ndarray  # unit, from b toward a


_COINCIDENT_TOL = 1e-12


def _sphere_centers(phi_centers, c_a, c_b, r_a, r_b):
    d = np.linalg.norm(c_a - c_b)
    if d < _COINCIDENT_TOL:
        raise GeometryError("coincident centers: contact normal undefined")
    n = (c_a - c_b) / d
    return SdfResult(d - r_a - r_b, c_a - r_a * n, c_b + r_b * n, n)


def _closest_on_segment(p: np.ndarray, e0: np.ndarray, e1: np.ndarray) -> np.ndarray:
    u = e1 - e0
    denom = float(u @ u)
    if denom < _COINCIDENT_TOL:
        return e0
    t = np.clip(float((p - e0) @ u) / denom, 0.0, 1.0)
    return e0 + t * u


def _capsule_segment(pose: Pose, cap: Capsule):
    axis = pose.R[:, 2]
    return pose.p - cap.half_length * axis, pose.p + cap.half_length * axis


def signed_distance(geom_a, pose_a: Pose, geom_b, pose_b: Pose) -> SdfResult:
    """Signed distance between two primitives; normal points from b to a."""
    ka, kb = geom_a.kind, geom_b.kind

    if ka == "sphere" and kb == "sphere":
        return _sphere_centers(None, pose_a.p, pose_b.p, geom_a.radius, geom_b.radius)

    if ka == "sphere" and kb == "capsule":
        q = _closest_on_segment(pose_a.p, *_capsule_segment(pose_b, geom_b))
        return _sphere_centers(None, pose_a.p, q, geom_a.radius, geom_b.radius)

    if ka == "capsule" and kb == "sphere":
        res = signed_distance(geom_b, pose_b, geom_a, pose_a)
        return SdfResult(res.phi, res.witness_b, res.witness_a, -res.normal)

    if ka == "sphere" and kb == "half_space":
        n = pose_b.R[:, 2]
        s = float(n @ (pose_a.p - pose_b.p))
        return SdfResult(
            s - geom_a.radius,
            pose_a.p - geom_a.radius * n,
            pose_a.p - s * n,
            n,
        )

    if ka == "capsule" and kb == "half_space":
        n = pose_b.R[:, 2]
        e0, e1 = _capsule_segment(pose_a, geom_a)
        s0 = float(n @ (e0 - pose_b.p))
        s1 = float(n @ (e1 - pose_b.p))
        # deterministic tie-break: lower endpoint, first on exact tie
        c = e0 if s0 <= s1 else e1
        s = min(s0, s1)
        return SdfResult(s - geom_a.radius, c - geom_a.radius * n, c - s * n, n)

    if kb in ("sphere", "capsule") and ka == "half_space":
        res = signed_distance(geom_b, pose_b, geom_a, pose_a)
        return SdfResult(res.phi, res.witness_b, res.witness_a, -res.normal)

    raise GeometryError(f"unsupported geometry pair: {ka}-{kb}")
