"""Contact detection and contact operators.

Each contact couples one robot or environment geometry ("side a") with the
object ("side b"). Conventions:

* normal points from the object toward the other body, so phi grows along it;
* the contact frame R_C has columns (tangent-x, tangent-y, normal); when a
  sliding direction is available, tangent-y is aligned with it;
* the contact Jacobian rows are [J_n; J_t] and map generalized velocity to
  the relative witness velocity (other body minus object) expressed in the
  contact frame, so J_n @ qdot > 0 means separating;
* the grasp matrix G (3x6, world frame) maps object spatial velocity
  [w; v] to the object witness point velocity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import signed_distance
from .model import SystemModel
from .transforms import hat, rpy_matrix


@dataclass
class ContactInfo:
    pair_id: tuple[str, str]  # (other geometry, object geometry)
    phi: float
    witness_robot: np.ndarray  # witness on the non-object body
    witness_object: np.ndarray
    normal: np.ndarray  # world, object -> other body
    R_C: np.ndarray  # 3x3, columns (t1, t2, n)
    mu: float
    jn: np.ndarray  # (n_q,)
    jt: np.ndarray  # (2, n_q)
    G: np.ndarray  # 3x6 world grasp matrix at the object witness

    @property
    def J(self) -> np.ndarray:
        """Rows [J_n; J_t] (3 x n_q)."""
        return np.vstack([self.jn, self.jt])

    @property
    def name(self) -> str:
        return f"{self.pair_id[0]}|{self.pair_id[1]}"


def contact_frame(normal: np.ndarray, sliding_dir: np.ndarray | None = None) -> np.ndarray:
    """Deterministic orthonormal frame with the normal as the z column.

    Tangent basis: drop the smallest-magnitude normal component and
    Gram-Schmidt the corresponding unit vector. If a sliding direction with
    norm > 1e-6 is given, tangent-y aligns with its tangential projection.
    """
    n = np.asarray(normal, dtype=float)
    nn = np.linalg.norm(n)
    if nn < 1e-12:
        raise ValueError("zero contact normal")
    n = n / nn

    if sliding_dir is not None and np.linalg.norm(sliding_dir) > 1e-6:
        t2 = sliding_dir - (sliding_dir @ n) * n
        t2n = np.linalg.norm(t2)
        if t2n > 1e-9:
            t2 = t2 / t2n
            t1 = np.cross(t2, n)
            return np.column_stack([t1, t2, n])

    e = np.zeros(3)
    e[int(np.argmin(np.abs(n)))] = 1.0
    t1 = e - (e @ n) * n
    t1 /= np.linalg.norm(t1)
    t2 = np.cross(n, t1)
    return np.column_stack([t1, t2, n])


def grasp_matrix(object_origin: np.ndarray, contact_point: np.ndarray) -> np.ndarray:
    """World grasp matrix: v_point = G @ [w; v_lin]."""
    r = np.asarray(contact_point, dtype=float) - np.asarray(object_origin, dtype=float)
    return np.hstack([-hat(r), np.eye(3)])


def detect_contacts(
    model: SystemModel,
    q: np.ndarray,
    phi_max: float = 0.05,
    qdot: np.ndarray | None = None,
) -> list[ContactInfo]:
    """All robot-object and object-environment contacts with phi <= phi_max.

    Results are sorted by pair_id. When qdot is given, each contact frame's
    tangent-y is aligned with the current relative sliding direction.
    """
    if phi_max <= 0:
        raise ValueError("phi_max must be positive")
    poses = model.fk(q)

    out: list[ContactInfo] = []
    for ga, gb in model.contact_pairs:
        pose_a = model.geometry_pose(ga, poses)
        pose_b = model.geometry_pose(gb, poses)
        res = signed_distance(ga.shape, pose_a, gb.shape, pose_b)
        if res.phi > phi_max:
            continue
        Ja = model.point_jacobian(q, ga.frame, res.witness_a, poses)
        Jb = model.point_jacobian(q, gb.frame, res.witness_b, poses)
        Jrel = Ja - Jb
        sliding = None
        if qdot is not None:
            vrel = Jrel @ np.asarray(qdot, dtype=float)
            sliding = vrel - (vrel @ res.normal) * res.normal
        R_C = contact_frame(res.normal, sliding)
        out.append(
            ContactInfo(
                pair_id=(ga.name, gb.name),
                phi=res.phi,
                witness_robot=res.witness_a,
                witness_object=res.witness_b,
                normal=res.normal,
                R_C=R_C,
                mu=model.friction_for(ga.name, gb.name),
                jn=res.normal @ Jrel,
                jt=R_C[:, :2].T @ Jrel,
                G=grasp_matrix(poses["object"].p, res.witness_b),
            )
        )
    out.sort(key=lambda c: c.pair_id)
    return out


def _batch_geom_pose(model, g, frames: dict):
    R0, p0 = frames[g.frame]
    off = model._geom_offset[g.name]
    R = np.einsum("bij,jk->bik", R0, off.R)
    p = np.einsum("bij,j->bi", R0, off.p) + p0
    return R, p


def _batch_sdf(ga, Ra, pa, gb, Rb, pb):
    """Vectorized signed distance for the supported pair kinds.

    Returns (phi (B,), witness_a (B,3), witness_b (B,3), normal (B,3)).
    """
    ka, kb = ga.kind, gb.kind
    if ka == "sphere" and kb == "sphere":
        d = pa - pb
        dist = np.linalg.norm(d, axis=1)
        n = d / dist[:, None]
        phi = dist - ga.radius - gb.radius
        return phi, pa - ga.radius * n, pb + gb.radius * n, n
    if ka == "sphere" and kb == "capsule":
        axis = Rb[:, :, 2]
        e0 = pb - gb.half_length * axis
        u = 2.0 * gb.half_length * axis
        t = np.einsum("bi,bi->b", pa - e0, u) / np.einsum("bi,bi->b", u, u)
        t = np.clip(t, 0.0, 1.0)
        c = e0 + t[:, None] * u
        d = pa - c
        dist = np.linalg.norm(d, axis=1)
        n = d / dist[:, None]
        phi = dist - ga.radius - gb.radius
        return phi, pa - ga.radius * n, c + gb.radius * n, n
    if ka == "capsule" and kb == "sphere":
        phi, wb, wa, n = _batch_sdf(gb, Rb, pb, ga, Ra, pa)
        return phi, wa, wb, -n
    if ka == "sphere" and kb == "half_space":
        n = Rb[:, :, 2]
        s = np.einsum("bi,bi->b", n, pa - pb)
        phi = s - ga.radius
        return phi, pa - ga.radius * n, pa - s[:, None] * n, n
    if ka == "capsule" and kb == "half_space":
        n = Rb[:, :, 2]
        axis = Ra[:, :, 2]
        e0 = pa - ga.half_length * axis
        e1 = pa + ga.half_length * axis
        s0 = np.einsum("bi,bi->b", n, e0 - pb)
        s1 = np.einsum("bi,bi->b", n, e1 - pb)
        take0 = s0 <= s1
        c = np.where(take0[:, None], e0, e1)
        s = np.where(take0, s0, s1)
        phi = s - ga.radius
        return phi, c - ga.radius * n, c - s[:, None] * n, n
    if ka == "half_space":
        phi, wb, wa, n = _batch_sdf(gb, Rb, pb, ga, Ra, pa)
        return phi, wa, wb, -n
    raise ValueError(f"unsupported pair for batch path: {ka}-{kb}")


def _batch_point_jacobian(model, frames, Q, frame, point_w):
    """(B, 3, n_q) world translational Jacobian of batched points on `frame`."""
    B = point_w.shape[0]
    J = np.zeros((B, 3, model.n_q))
    if frame == "world":
        return J
    if frame == "object":
        E = model.object_dof_map(Q[0, model.n_q_r :])
        _, p_obj = frames["object"]
        r = point_w - p_obj
        for k in range(model.n_q_o):
            J[:, :, model.n_q_r + k] = np.cross(np.broadcast_to(E[:3, k], (B, 3)), r) + E[3:, k]
        return J
    chain = model.chains[model._joint_chain[frame]]
    for js in chain.joints:
        col = model._joint_index[js.name]
        Rj, pj = frames[js.name]
        ax_w = np.einsum("bij,j->bi", Rj, np.asarray(js.axis, float))
        if js.kind == "revolute":
            J[:, :, col] = np.cross(ax_w, point_w - pj)
        else:
            J[:, :, col] = ax_w
        if js.name == frame:
            break
    return J


def contact_pack_batch(model: SystemModel, Q: np.ndarray, pair_ids: list[tuple[str, str]]):
    """Batched (phi, J_n, J_rel, normal) over configurations Q (B, n_q).

    J_rel is the full relative point Jacobian (B, 3, n_q); tangential terms
    of the barrier only need the projector I - n n', so no tangent basis is
    built here. Matches contact_pack row for row.
    """
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    B = Q.shape[0]
    frames = model.fk_batch(Q)
    nc = len(pair_ids)
    phi = np.zeros((B, nc))
    Jn = np.zeros((B, nc, model.n_q))
    Jrel = np.zeros((B, nc, 3, model.n_q))
    normals = np.zeros((B, nc, 3))
    for i, (na, nb) in enumerate(pair_ids):
        ga, gb = model.geometry(na), model.geometry(nb)
        Ra, pa = _batch_geom_pose(model, ga, frames)
        Rb, pb = _batch_geom_pose(model, gb, frames)
        ph, wa, wb, n = _batch_sdf(ga.shape, Ra, pa, gb.shape, Rb, pb)
        Ja = _batch_point_jacobian(model, frames, Q, ga.frame, wa)
        Jb = _batch_point_jacobian(model, frames, Q, gb.frame, wb)
        Jr = Ja - Jb
        phi[:, i] = ph
        Jrel[:, i] = Jr
        normals[:, i] = n
        Jn[:, i] = np.einsum("bi,biq->bq", n, Jr)
    return phi, Jn, Jrel, normals


def contact_pack(
    model: SystemModel, q: np.ndarray, pair_ids: list[tuple[str, str]]
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(phi, J_n, J_t) for a frozen list of pairs, re-evaluated at q.

    Used to differentiate the contact terms of a dynamics step without
    re-running detection: the pair set stays fixed while witness points and
    Jacobians follow the configuration.
    """
    poses = model.fk(q)
    nc = len(pair_ids)
    phi = np.zeros(nc)
    Jn = np.zeros((nc, model.n_q))
    Jt = np.zeros((nc, 2, model.n_q))
    for i, (na, nb) in enumerate(pair_ids):
        ga, gb = model.geometry(na), model.geometry(nb)
        res = signed_distance(
            ga.shape, model.geometry_pose(ga, poses), gb.shape, model.geometry_pose(gb, poses)
        )
        Ja = model.point_jacobian(q, ga.frame, res.witness_a, poses)
        Jb = model.point_jacobian(q, gb.frame, res.witness_b, poses)
        Jrel = Ja - Jb
        R_C = contact_frame(res.normal)
        phi[i] = res.phi
        Jn[i] = res.normal @ Jrel
        Jt[i] = R_C[:, :2].T @ Jrel
    return phi, Jn, Jt
