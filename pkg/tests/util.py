"""Shared test helpers: small models and independent oracles."""

from __future__ import annotations

import numpy as np

from contactctl.geometry import Sphere
from contactctl.model import ChainSpec, GeometrySpec, JointSpec, ObjectJointSpec, SystemModel


def two_link_finger_disk(damping=0.1, mu=0.9, gravity=(0, 0, 0)) -> SystemModel:
    """One planar 2-link finger plus a hinged disk (n_q = 3)."""
    chain = ChainSpec(
        "f0",
        (
            JointSpec("f0_j0", "revolute", (0, 0, 1), origin_xyz=(0.17, 0, 0),
                      origin_rpy=(0, 0, np.pi)),
            JointSpec("f0_j1", "revolute", (0, 0, 1), origin_xyz=(0.07, 0, 0)),
        ),
    )
    geoms = [
        GeometrySpec("tip0", "f0_j1", Sphere(0.015), offset_xyz=(0.07, 0, 0)),
        GeometrySpec("disk", "object", Sphere(0.06)),
    ]
    return SystemModel(
        [chain],
        ObjectJointSpec("hinge", (0, 0, 1), damping=damping),
        np.array([[5.4e-4]]),
        [100.0, 100.0],
        geoms,
        gravity=gravity,
        friction_default=mu,
    )


NOMINAL_Q = np.array([-0.84436, 1.68851, 0.0])


def homogeneous(R, p):
    T = np.eye(4)
    T[:3, :3] = R
    T[:3, 3] = p
    return T


def random_rotation(rng) -> np.ndarray:
    """Uniform-ish random rotation from a normalized quaternion."""
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def random_qd_instance(rng, n_q=None, n_c=None, kappa=None):
    """Random strictly feasible barrier instance (shared by several tests)."""
    from contactctl.cqdc import QdProblem

    n_q = n_q or int(rng.integers(2, 13))
    n_c = n_c or int(rng.integers(1, 7))
    n_r = max(1, n_q - 1)
    L = rng.normal(size=(n_q, n_q)) * 0.5
    Q = L @ L.T + np.eye(n_q) * rng.uniform(0.5, 3)
    b = rng.normal(size=n_q)
    Jn = rng.normal(size=(n_c, n_q))
    Jt = rng.normal(size=(n_c, 2, n_q))
    mu = rng.uniform(0.2, 1.3, size=n_c)
    phi = rng.uniform(1e-4, 0.05, size=n_c)
    kappa = kappa or float(rng.choice([10.0, 100.0, 1000.0]))
    return QdProblem(Q, b, phi, Jn, Jt, mu, 0.1, kappa, n_r, n_q - n_r)
