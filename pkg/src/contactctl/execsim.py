"""Execution layer: joint PD law, baseline controllers, and the
second-order penalty-contact verification simulator.

The simulator is deliberately a different model from the planning dynamics:
full second-order states, softplus penalty forces with the dissipation
factor enabled, and regularized Coulomb friction. That mismatch is the
low-level controller's job to absorb.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import spence

from .compliant import CompliantParams, dissipation, normal_force
from .contacts import ContactInfo, detect_contacts
from .model import SystemModel


class SimError(RuntimeError):
    pass


@dataclass(frozen=True)
class PdGains:
    k_p: float = 100.0
    k_d: float = 1.0
    gravity_comp: bool = True

    def __post_init__(self):
        if self.k_p <= 0 or self.k_d < 0:
            raise ValueError("require k_p > 0 and k_d >= 0")


def pd_torque(
    model: SystemModel,
    q: np.ndarray,
    qdot: np.ndarray,
    q_d: np.ndarray,
    qd_d: np.ndarray,
    F_ff: dict[tuple[str, str], np.ndarray],
    gains: PdGains,
    contacts: list[ContactInfo] | None = None,
) -> np.ndarray:
    """Joint torques: gravity comp + PD on (q_d, qd_d) + J' F_ff feed-forward."""
    n_r = model.n_q_r
    q_r = np.asarray(q, float)[:n_r]
    qd_r = np.asarray(qdot, float)[:n_r]
    tau = gains.k_p * (np.asarray(q_d, float) - q_r) + gains.k_d * (
        np.asarray(qd_d, float) - qd_r
    )
    if gains.gravity_comp:
        tau += -model.gravity_torque(q)[:n_r]
    if F_ff:
        if contacts is None:
            contacts = detect_contacts(model, q, 0.05)
        by_pair = {c.pair_id: c for c in contacts}
        poses = model.fk(q)
        for pid, fw in F_ff.items():
            c = by_pair.get(pid)
            if c is None:
                continue
            Jw = model.point_jacobian(q, model.geometry(pid[0]).frame, c.witness_robot, poses)
            tau += Jw[:, :n_r].T @ np.asarray(fw, float)
    return tau


@dataclass(frozen=True)
class SimConfig:
    dt: float = 5e-4
    rotor_inertia: float = 1e-3
    phi_max: float = 0.01
    v_reg: float = 1e-4  # Coulomb regularization velocity (m/s)

    def __post_init__(self):
        if self.dt > 1e-3:
            raise ValueError("dt_sim must be <= 1e-3 s")


@dataclass
class SimState:
    q: np.ndarray
    qdot: np.ndarray
    t: float
    contacts: list[ContactInfo] = field(default_factory=list)
    forces_world: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))


class VerificationSim:
    """Semi-implicit Euler plant with compliant contacts and Coulomb friction."""

    def __init__(self, model: SystemModel, contact_params: CompliantParams,
                 cfg: SimConfig | None = None):
        self.model = model
        # dissipation is always on in the plant, whatever the controller uses
        self.contact = CompliantParams(
            contact_params.sigma, contact_params.k, contact_params.v_d,
            contact_params.alpha, True,
        )
        self.cfg = cfg or SimConfig()
        n_r, n_o = model.n_q_r, model.n_q_o
        self._M_r = np.full(n_r, self.cfg.rotor_inertia)
        self._M_o = model.object_inertia
        self._M_o_inv = np.linalg.inv(self._M_o)
        self._damping = model.object_joint.damping_vector()
        self.state = SimState(np.zeros(model.n_q), np.zeros(model.n_q), 0.0)
        self._force_accum = {}
        self._accum_steps = 0

    def reset(self, q0: np.ndarray, qdot0: np.ndarray | None = None, t0: float = 0.0):
        n = self.model.n_q
        qd = np.zeros(n) if qdot0 is None else np.asarray(qdot0, float).reshape(n)
        self.state = SimState(np.asarray(q0, float).reshape(n).copy(), qd.copy(), t0)
        self._refresh_contacts()

    def _contact_forces(self, q, qdot):
        """Penalty contact forces at (q, qdot).

        Returns (contacts, measured forces, generalized torque). Measured
        forces follow the press convention of the controller stack: the
        world-frame force each finger exerts on the object (the negative of
        the reaction the penalty law applies to the finger).
        """
        contacts = detect_contacts(self.model, q, self.cfg.phi_max, qdot)
        n_q = self.model.n_q
        tau = np.zeros(n_q)
        forces = np.zeros((len(contacts), 3))
        for i, c in enumerate(contacts):
            phidot = float(c.jn @ qdot)
            f_n = normal_force(c.phi, phidot, self.contact)
            if f_n <= 0.0:
                continue
            v_t = c.jt @ qdot  # tangential relative velocity, frame coords
            speed = float(np.linalg.norm(v_t))
            f_t = np.zeros(2)
            if speed > 1e-12:
                scale = min(1.0, speed / self.cfg.v_reg)
                f_t = -c.mu * f_n * scale * (v_t / speed)
            tau += c.jn * f_n + c.jt.T @ f_t  # reaction on the robot (+n)
            forces[i] = -(f_n * c.normal + c.R_C[:, :2] @ f_t)
        return contacts, forces, tau

    def _refresh_contacts(self):
        s = self.state
        s.contacts, s.forces_world, _ = self._contact_forces(s.q, s.qdot)
        self._force_accum = {}
        self._accum_steps = 0

    def averaged_forces(self) -> dict:
        """Mean per-pair world force since the last call (anti-alias window).

        A physical force sensor integrates over its sampling period; reading
        instantaneous penalty forces at the control rate aliases the contact
        transients instead.
        """
        n = max(self._accum_steps, 1)
        out = {pid: f / n for pid, f in self._force_accum.items()}
        self._force_accum = {}
        self._accum_steps = 0
        return out

    def step(self, tau_r: np.ndarray, tau_obj_ext: np.ndarray | None = None) -> SimState:
        """Advance one dt with commanded joint torques (semi-implicit Euler)."""
        s = self.state
        cfg = self.cfg
        n_r = self.model.n_q_r
        contacts, forces, tau_c = self._contact_forces(s.q, s.qdot)

        tau = tau_c + self.model.gravity_torque(s.q)
        tau[:n_r] += np.asarray(tau_r, float).reshape(n_r)
        tau[n_r:] += -self._damping * s.qdot[n_r:]
        if tau_obj_ext is not None:
            tau[n_r:] += np.asarray(tau_obj_ext, float).reshape(self.model.n_q_o)

        qdd = np.empty(self.model.n_q)
        qdd[:n_r] = tau[:n_r] / self._M_r
        qdd[n_r:] = self._M_o_inv @ tau[n_r:]

        qdot_new = s.qdot + cfg.dt * qdd
        q_new = s.q + cfg.dt * qdot_new
        if not (np.all(np.isfinite(q_new)) and np.all(np.isfinite(qdot_new))):
            raise SimError(f"simulation diverged at t={s.t:.4f}s")
        for i, c in enumerate(contacts):
            acc = self._force_accum.get(c.pair_id)
            if acc is None:
                self._force_accum[c.pair_id] = forces[i].copy()
            else:
                acc += forces[i]
        self._accum_steps += 1
        self.state = SimState(q_new, qdot_new, s.t + cfg.dt, contacts, forces)
        return self.state

    # ------------------------------------------------------------------
    # energy audit
    # ------------------------------------------------------------------
    def _elastic_energy(self, q) -> float:
        """Stored softplus-spring energy: integral of f_n from phi to infinity."""
        contacts = detect_contacts(self.model, q, self.cfg.phi_max)
        sig, k = self.contact.sigma, self.contact.k
        E = 0.0
        for c in contacts:
            # int_phi^inf sigma k log(1+e^(-x/sigma)) dx = sigma^2 k * (-Li2(-e^(-phi/sigma)))
            z = -np.exp(-c.phi / sig)
            E += sig * sig * k * (-(spence(1.0 - z)))
        return float(E)

    def energy(self) -> float:
        """Kinetic + gravitational + contact elastic energy."""
        s = self.state
        n_r = self.model.n_q_r
        ke = 0.5 * float(s.qdot[:n_r] @ (self._M_r * s.qdot[:n_r]))
        ke += 0.5 * float(s.qdot[n_r:] @ self._M_o @ s.qdot[n_r:])
        pe = 0.0
        g = self.model.gravity
        if np.any(g):
            poses = self.model.fk(s.q)
            for chain in self.model.chains:
                for js in chain.joints:
                    if js.link_mass:
                        com = poses[js.name].apply(np.asarray(js.link_com, float))
                        pe -= js.link_mass * float(g @ com)
            if self.model.object_joint.mass:
                pe -= self.model.object_joint.mass * float(g @ poses["object"].p)
        return ke + pe + self._elastic_energy(s.q)
