"""System model: serial robot chains plus one hinged or planar-free object.

The world is always 3-D. A robot is a set of serial chains of revolute or
prismatic joints; each joint owns a child link frame, and collision
geometries attach to link frames, the object frame, or the world. The
object has either a single damped hinge DOF or three planar DOFs
(x, y, yaw). Generalized coordinates are ordered q = [q_r; q_o] with q_r
concatenated chain by chain.

All units SI, angles in radians. The model file format is documented in
docs/model_schema.md.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .geometry import Capsule, HalfSpace, Sphere
from .transforms import Pose, axis_angle, hat


class ModelError(ValueError):
    pass


def _batch_axis_angle(axis: np.ndarray, angles: np.ndarray) -> np.ndarray:
    """(B, 3, 3) rotations about one fixed unit axis."""
    K = hat(axis)
    outer = np.outer(axis, axis)
    c = np.cos(angles)[:, None, None]
    s = np.sin(angles)[:, None, None]
    return c * np.eye(3) + s * K + (1.0 - c) * outer


@dataclass(frozen=True)
class JointSpec:
    name: str
    kind: str  # "revolute" | "prismatic"
    axis: tuple[float, float, float]
    origin_xyz: tuple[float, float, float] = (0.0, 0.0, 0.0)
    origin_rpy: tuple[float, float, float] = (0.0, 0.0, 0.0)
    limits: tuple[float, float] = (-1e9, 1e9)
    link_mass: float = 0.0
    link_com: tuple[float, float, float] = (0.0, 0.0, 0.0)


@dataclass(frozen=True)
class ChainSpec:
    name: str
    joints: tuple[JointSpec, ...]


@dataclass(frozen=True)
class ObjectJointSpec:
    kind: str  # "hinge" | "planar_free"
    axis: tuple[float, float, float] = (0.0, 0.0, 1.0)
    origin_xyz: tuple[float, float, float] = (0.0, 0.0, 0.0)
    origin_rpy: tuple[float, float, float] = (0.0, 0.0, 0.0)
    damping: object = 0.0  # scalar, or one value per object DOF
    mass: float = 0.0

    @property
    def n_dof(self) -> int:
        return 1 if self.kind == "hinge" else 3

    def damping_vector(self) -> np.ndarray:
        if np.isscalar(self.damping):
            return np.full(self.n_dof, float(self.damping))
        return np.asarray(self.damping, dtype=float).reshape(self.n_dof)


@dataclass(frozen=True)
class GeometrySpec:
    name: str
    frame: str  # "world", "object", or a joint name
    shape: object  # Sphere | Capsule | HalfSpace
    offset_xyz: tuple[float, float, float] = (0.0, 0.0, 0.0)
    offset_rpy: tuple[float, float, float] = (0.0, 0.0, 0.0)
    body: str = ""  # "robot" | "object" | "env", filled by SystemModel


class SystemModel:
    """Immutable kinematic/inertial description of robot chains + object."""

    def __init__(
        self,
        chains: list[ChainSpec],
        object_joint: ObjectJointSpec,
        object_inertia: np.ndarray,
        joint_stiffness: np.ndarray,
        geometries: list[GeometrySpec],
        gravity=(0.0, 0.0, 0.0),
        friction_default: float = 0.8,
        friction_pairs: dict[str, float] | None = None,
    ):
        self.chains = tuple(chains)
        self.object_joint = object_joint
        self.n_q_o = object_joint.n_dof
        self.n_q_r = sum(len(c.joints) for c in self.chains)
        self.n_q = self.n_q_r + self.n_q_o

        M_o = np.atleast_2d(np.asarray(object_inertia, dtype=float))
        if M_o.shape != (self.n_q_o, self.n_q_o):
            raise ModelError(f"object inertia must be {self.n_q_o}x{self.n_q_o}")
        if not np.allclose(M_o, M_o.T) or np.any(np.linalg.eigvalsh(M_o) <= 0):
            raise ModelError("object inertia must be symmetric positive definite")
        self.object_inertia = M_o

        K_r = np.asarray(joint_stiffness, dtype=float).reshape(-1)
        if K_r.shape != (self.n_q_r,):
            raise ModelError(f"joint stiffness needs {self.n_q_r} entries")
        if np.any(K_r <= 0):
            raise ModelError("joint stiffness entries must be positive")
        self.joint_stiffness = K_r

        self.gravity = np.asarray(gravity, dtype=float).reshape(3)
        self.friction_default = float(friction_default)
        self.friction_pairs = dict(friction_pairs or {})
        if self.friction_default < 0 or any(v < 0 for v in self.friction_pairs.values()):
            raise ModelError("friction coefficients must be nonnegative")

        # joint bookkeeping: global column index and owning chain per joint name
        self._joint_index: dict[str, int] = {}
        self._joint_chain: dict[str, int] = {}
        col = 0
        for ci, chain in enumerate(self.chains):
            for js in chain.joints:
                if js.name in self._joint_index:
                    raise ModelError(f"duplicate joint name {js.name!r}")
                if js.kind not in ("revolute", "prismatic"):
                    raise ModelError(f"unknown joint type {js.kind!r}")
                self._joint_index[js.name] = col
                self._joint_chain[js.name] = ci
                col += 1

        # constant offset transforms, cached once (hot path in rollouts)
        self._joint_offset = {
            js.name: Pose.from_xyz_rpy(js.origin_xyz, js.origin_rpy)
            for c in self.chains
            for js in c.joints
        }
        self._object_base = Pose.from_xyz_rpy(object_joint.origin_xyz, object_joint.origin_rpy)

        seen = set()
        resolved = []
        for g in geometries:
            if g.name in seen:
                raise ModelError(f"duplicate geometry name {g.name!r}")
            seen.add(g.name)
            if g.frame == "world":
                body = "env"
            elif g.frame == "object":
                body = "object"
            elif g.frame in self._joint_index:
                body = "robot"
            else:
                raise ModelError(f"geometry {g.name!r} attached to unknown frame {g.frame!r}")
            resolved.append(
                GeometrySpec(g.name, g.frame, g.shape, g.offset_xyz, g.offset_rpy, body)
            )
        self.geometries = tuple(resolved)
        self._geom_by_name = {g.name: g for g in self.geometries}
        self._geom_offset = {
            g.name: Pose.from_xyz_rpy(g.offset_xyz, g.offset_rpy) for g in self.geometries
        }
        # candidate contact pairs: (robot or env geometry, object geometry)
        self.contact_pairs = tuple(
            (ga, gb)
            for ga in self.geometries
            if ga.body in ("robot", "env")
            for gb in self.geometries
            if gb.body == "object"
        )

    @property
    def gravity_active(self) -> bool:
        """True when gravity can produce configuration-dependent torques."""
        if not np.any(self.gravity):
            return False
        has_mass = self.object_joint.mass > 0 or any(
            js.link_mass > 0 for c in self.chains for js in c.joints
        )
        return bool(has_mass)

    # ------------------------------------------------------------------
    # coordinate partitions
    # ------------------------------------------------------------------
    def split(self, q: np.ndarray):
        q = np.asarray(q, dtype=float).reshape(-1)
        if q.shape != (self.n_q,):
            raise ModelError(f"expected q of length {self.n_q}, got {q.shape}")
        return q[: self.n_q_r], q[self.n_q_r :]

    def joint_column(self, name: str) -> int:
        return self._joint_index[name]

    def geometry(self, name: str) -> GeometrySpec:
        return self._geom_by_name[name]

    # ------------------------------------------------------------------
    # forward kinematics
    # ------------------------------------------------------------------
    def fk(self, q: np.ndarray) -> dict[str, Pose]:
        """Poses of every link frame plus 'object' and 'world'."""
        q_r, q_o = self.split(q)
        poses: dict[str, Pose] = {"world": Pose.identity()}
        for chain in self.chains:
            cur = Pose.identity()
            for js in chain.joints:
                cur = cur.compose(self._joint_offset[js.name])
                qj = q_r[self._joint_index[js.name]]
                ax = np.asarray(js.axis, dtype=float)
                if js.kind == "revolute":
                    cur = Pose(cur.R @ axis_angle(ax, qj), cur.p)
                else:
                    cur = Pose(cur.R, cur.p + cur.R @ (ax * qj))
                poses[js.name] = cur
        poses["object"] = self.object_pose(q_o)
        return poses

    def object_pose(self, q_o: np.ndarray) -> Pose:
        oj = self.object_joint
        base = self._object_base
        if oj.kind == "hinge":
            return Pose(base.R @ axis_angle(np.asarray(oj.axis, float), q_o[0]), base.p)
        x, y, yaw = q_o
        local = Pose(axis_angle(np.array([0.0, 0.0, 1.0]), yaw), np.array([x, y, 0.0]))
        return base.compose(local)

    def geometry_pose(self, g: GeometrySpec, poses: dict[str, Pose]) -> Pose:
        return poses[g.frame].compose(self._geom_offset[g.name])

    # ------------------------------------------------------------------
    # differential kinematics
    # ------------------------------------------------------------------
    def object_dof_map(self, q_o: np.ndarray) -> np.ndarray:
        """E (6 x n_q_o): object DOF rates -> world spatial velocity [w; v]."""
        oj = self.object_joint
        R0 = Pose.from_xyz_rpy(oj.origin_xyz, oj.origin_rpy).R
        E = np.zeros((6, self.n_q_o))
        if oj.kind == "hinge":
            E[:3, 0] = R0 @ np.asarray(oj.axis, float)
        else:
            E[3:, 0] = R0[:, 0]
            E[3:, 1] = R0[:, 1]
            E[:3, 2] = R0[:, 2]
        return E

    def point_jacobian(self, q: np.ndarray, frame: str, point_w: np.ndarray,
                       poses: dict[str, Pose] | None = None) -> np.ndarray:
        """3 x n_q world-frame translational Jacobian of a point fixed to `frame`."""
        if poses is None:
            poses = self.fk(q)
        J = np.zeros((3, self.n_q))
        if frame == "world":
            return J
        if frame == "object":
            r = point_w - poses["object"].p
            G = np.hstack([-hat(r), np.eye(3)])  # [w; v] -> point velocity
            J[:, self.n_q_r :] = G @ self.object_dof_map(self.split(q)[1])
            return J
        chain = self.chains[self._joint_chain[frame]]
        for js in chain.joints:
            col = self._joint_index[js.name]
            jp = poses[js.name]
            # joint axis in world, at the joint's own frame
            ax_w = jp.R @ np.asarray(js.axis, float)
            if js.kind == "revolute":
                r = point_w - jp.p
                J[0, col] = ax_w[1] * r[2] - ax_w[2] * r[1]
                J[1, col] = ax_w[2] * r[0] - ax_w[0] * r[2]
                J[2, col] = ax_w[0] * r[1] - ax_w[1] * r[0]
            else:
                J[:, col] = ax_w
            if js.name == frame:
                break
        return J

    def fk_batch(self, Q: np.ndarray) -> dict[str, tuple[np.ndarray, np.ndarray]]:
        """Vectorized FK over a batch of configurations Q (B, n_q).

        Returns {frame: (R (B,3,3), p (B,3))}. Matches fk() exactly; used by
        the finite-difference sensitivity path where many nearby
        configurations are evaluated per dynamics step.
        """
        Q = np.atleast_2d(np.asarray(Q, dtype=float))
        B = Q.shape[0]
        eye = np.broadcast_to(np.eye(3), (B, 3, 3))
        out: dict[str, tuple[np.ndarray, np.ndarray]] = {
            "world": (eye.copy(), np.zeros((B, 3)))
        }
        for chain in self.chains:
            R = eye.copy()
            p = np.zeros((B, 3))
            for js in chain.joints:
                off = self._joint_offset[js.name]
                p = np.einsum("bij,j->bi", R, off.p) + p
                R = np.einsum("bij,jk->bik", R, off.R)
                qj = Q[:, self._joint_index[js.name]]
                ax = np.asarray(js.axis, dtype=float)
                if js.kind == "revolute":
                    Rm = _batch_axis_angle(ax, qj)
                    R = np.einsum("bij,bjk->bik", R, Rm)
                else:
                    p = p + np.einsum("bij,j->bi", R, ax) * qj[:, None]
                out[js.name] = (R.copy(), p.copy())
        out["object"] = self._object_pose_batch(Q[:, self.n_q_r :])
        return out

    def _object_pose_batch(self, Qo: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        oj = self.object_joint
        B = Qo.shape[0]
        base = self._object_base
        if oj.kind == "hinge":
            Rm = _batch_axis_angle(np.asarray(oj.axis, float), Qo[:, 0])
            R = np.einsum("ij,bjk->bik", base.R, Rm)
            p = np.broadcast_to(base.p, (B, 3)).copy()
            return R, p
        Rm = _batch_axis_angle(np.array([0.0, 0.0, 1.0]), Qo[:, 2])
        R = np.einsum("ij,bjk->bik", base.R, Rm)
        local_p = np.zeros((B, 3))
        local_p[:, 0] = Qo[:, 0]
        local_p[:, 1] = Qo[:, 1]
        p = np.einsum("ij,bj->bi", base.R, local_p) + base.p
        return R, p

    def gravity_torque(self, q: np.ndarray, poses: dict[str, Pose] | None = None) -> np.ndarray:
        """Generalized gravity torque tau_g (n_q,), from link and object masses."""
        if poses is None:
            poses = self.fk(q)
        tau = np.zeros(self.n_q)
        g = self.gravity
        if not np.any(g):
            return tau
        for chain in self.chains:
            for js in chain.joints:
                if js.link_mass == 0.0:
                    continue
                com_w = poses[js.name].apply(np.asarray(js.link_com, float))
                Jc = self.point_jacobian(q, js.name, com_w, poses)
                tau += Jc.T @ (js.link_mass * g)
        if self.object_joint.mass:
            com_w = poses["object"].p
            Jc = self.point_jacobian(q, "object", com_w, poses)
            tau += Jc.T @ (self.object_joint.mass * g)
        return tau

    # ------------------------------------------------------------------
    # serialization
    # ------------------------------------------------------------------
    def to_dict(self) -> dict:
        def shape_dict(s):
            if s.kind == "sphere":
                return {"type": "sphere", "radius": s.radius}
            if s.kind == "capsule":
                return {"type": "capsule", "radius": s.radius, "half_length": s.half_length}
            return {"type": "half_space"}

        return {
            "chains": [
                {
                    "name": c.name,
                    "joints": [
                        {
                            "name": j.name,
                            "type": j.kind,
                            "axis": list(j.axis),
                            "origin_xyz": list(j.origin_xyz),
                            "origin_rpy": list(j.origin_rpy),
                            "limits": list(j.limits),
                            "link_mass": j.link_mass,
                            "link_com": list(j.link_com),
                        }
                        for j in c.joints
                    ],
                }
                for c in self.chains
            ],
            "object": {
                "type": self.object_joint.kind,
                "axis": list(self.object_joint.axis),
                "origin_xyz": list(self.object_joint.origin_xyz),
                "origin_rpy": list(self.object_joint.origin_rpy),
                "damping": self.object_joint.damping
                if np.isscalar(self.object_joint.damping)
                else list(self.object_joint.damping),
                "mass": self.object_joint.mass,
                "inertia": self.object_inertia.tolist(),
            },
            "joint_stiffness": self.joint_stiffness.tolist(),
            "gravity": self.gravity.tolist(),
            "friction": {"default": self.friction_default, "pairs": self.friction_pairs},
            "geometries": [
                {
                    "name": g.name,
                    "frame": g.frame,
                    "shape": shape_dict(g.shape),
                    "offset_xyz": list(g.offset_xyz),
                    "offset_rpy": list(g.offset_rpy),
                }
                for g in self.geometries
            ],
        }

    @staticmethod
    def from_dict(d: dict) -> "SystemModel":
        try:
            chains = [
                ChainSpec(
                    c["name"],
                    tuple(
                        JointSpec(
                            j["name"],
                            j["type"],
                            tuple(j["axis"]),
                            tuple(j.get("origin_xyz", (0, 0, 0))),
                            tuple(j.get("origin_rpy", (0, 0, 0))),
                            tuple(j.get("limits", (-1e9, 1e9))),
                            j.get("link_mass", 0.0),
                            tuple(j.get("link_com", (0, 0, 0))),
                        )
                        for j in c["joints"]
                    ),
                )
                for c in d["chains"]
            ]
            o = d["object"]
            damping = o.get("damping", 0.0)
            oj = ObjectJointSpec(
                o["type"],
                tuple(o.get("axis", (0, 0, 1))),
                tuple(o.get("origin_xyz", (0, 0, 0))),
                tuple(o.get("origin_rpy", (0, 0, 0))),
                damping if np.isscalar(damping) else tuple(damping),
                o.get("mass", 0.0),
            )
            geoms = []
            for g in d["geometries"]:
                s = g["shape"]
                if s["type"] == "sphere":
                    shape = Sphere(s["radius"])
                elif s["type"] == "capsule":
                    shape = Capsule(s["radius"], s["half_length"])
                elif s["type"] == "half_space":
                    shape = HalfSpace()
                else:
                    raise ModelError(f"unknown shape type {s['type']!r}")
                geoms.append(
                    GeometrySpec(
                        g["name"],
                        g["frame"],
                        shape,
                        tuple(g.get("offset_xyz", (0, 0, 0))),
                        tuple(g.get("offset_rpy", (0, 0, 0))),
                    )
                )
            fr = d.get("friction", {})
            return SystemModel(
                chains,
                oj,
                np.asarray(o["inertia"], dtype=float),
                np.asarray(d["joint_stiffness"], dtype=float),
                geoms,
                gravity=d.get("gravity", (0.0, 0.0, 0.0)),
                friction_default=fr.get("default", 0.8),
                friction_pairs=fr.get("pairs", {}),
            )
        except KeyError as e:
            raise ModelError(f"model file missing required key: {e}") from e

    def to_json(self, path: str) -> None:
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)

    @staticmethod
    def from_json(path: str) -> "SystemModel":
        with open(path) as f:
            return SystemModel.from_dict(json.load(f))

    def friction_for(self, name_a: str, name_b: str) -> float:
        for key in (f"{name_a}|{name_b}", f"{name_b}|{name_a}"):
            if key in self.friction_pairs:
                return self.friction_pairs[key]
        return self.friction_default
