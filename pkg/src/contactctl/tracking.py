"""Compliance-based low-level contact controller.

Linear force-motion plant over the augmented state [xi; xi_d; F_e] (joint
positions, nominal joint positions, stacked contact-frame forces), built
from the stacked stiffness operators and discretized with forward Euler.
The tracking problem is an exact finite-horizon LQR solved by an affine
Riccati recursion; the caller applies the first input (receding horizon).

Force components follow the contact frame order (t1, t2, n) per contact,
rows sorted by pair id, matching StiffnessSet.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .compliant import CompliantParams, StiffnessSet, build_stiffness_set
from .contacts import ContactInfo, detect_contacts
from .ddp import ReferenceTrajectory, interpolate_references
from .model import SystemModel


class TrackingError(RuntimeError):
    pass


@dataclass
class TrackingState:
    xi: np.ndarray  # measured joint positions (n_r,)
    xi_d: np.ndarray  # nominal desired joint positions (n_r,)
    F_e: np.ndarray  # stacked measured forces (3 N_c,), contact frames

    def vector(self) -> np.ndarray:
        return np.concatenate([self.xi, self.xi_d, self.F_e])


@dataclass
class LinearPlant:
    A: np.ndarray  # continuous
    B: np.ndarray
    Ad: np.ndarray  # forward-Euler discretized
    Bd: np.ndarray
    dt: float
    k_p: float
    k_d: float
    n_r: int
    stiffness: StiffnessSet
    force_gain: np.ndarray  # (3N_c, n_r): dF/dt = force_gain @ u
    gain_condition: float = 1.0

    @property
    def n_c(self) -> int:
        return self.stiffness.n_c

    @property
    def n_x(self) -> int:
        return 2 * self.n_r + 3 * self.n_c


def assemble_plant(
    stiffness: StiffnessSet,
    k_p: float,
    k_d: float,
    object_mode: str = "anchored",
    dt: float = 0.01,
) -> LinearPlant:
    """Continuous (A, B) of the force-motion model plus Euler discretization.

    object_mode "anchored" drops the object-compliance coupling term; "free"
    keeps it with a damped inverse of the object equivalent stiffness.
    """
    if k_p <= 0 or k_d <= 0:
        raise TrackingError("PD gains must be positive")
    if object_mode not in ("anchored", "free"):
        raise TrackingError(f"unknown object mode {object_mode!r}")

    n_r = stiffness.J_stack.shape[1]
    nF = 3 * stiffness.n_c
    nx = 2 * n_r + nF
    J = stiffness.J_stack
    M_bar = stiffness.M_bar

    core = np.eye(nF) + (1.0 / k_p) * (M_bar @ J.T)
    if object_mode == "free" and stiffness.n_c:
        K_o = stiffness.K_o
        eps_K = 1e-6 * max(1.0, float(np.trace(K_o)) / 6.0)
        K_o_inv = np.linalg.inv(K_o + eps_K * np.eye(6))
        core = core + stiffness.N_bar @ K_o_inv @ stiffness.G_stack.T
    force_gain = np.linalg.solve(core, M_bar) if nF else np.zeros((0, n_r))
    cond = float(np.linalg.cond(core)) if nF else 1.0

    A = np.zeros((nx, nx))
    B = np.zeros((nx, n_r))
    r = slice(0, n_r)
    d = slice(n_r, 2 * n_r)
    f = slice(2 * n_r, nx)
    A[r, r] = -(k_p / k_d) * np.eye(n_r)
    A[r, d] = (k_p / k_d) * np.eye(n_r)
    A[r, f] = -(1.0 / k_d) * J.T
    B[r] = np.eye(n_r)
    B[d] = np.eye(n_r)
    B[f] = force_gain

    Ad = np.eye(nx) + dt * A
    Bd = dt * B
    return LinearPlant(A, B, Ad, Bd, dt, k_p, k_d, n_r, stiffness, force_gain, cond)


@dataclass
class TrackingWeights:
    w_xi: float = 10.0
    w_F: float = 0.1
    w_u: float = 1e-3
    terminal_scale: float = 5.0
    w_F_unplanned: float = 1e-3
    w_F_tangential: float = 1.0  # scale on tangential force rows
    f_ref_min: float = 1.0  # plan forces below this are smoothing tails (N)
    horizon: int = 10
    u_sat: float = 2.0  # nominal-velocity saturation (rad/s), execution safety


def _stage_weights(plant: LinearPlant, weights: TrackingWeights, wF_rows: np.ndarray):
    nx = plant.n_x
    n_r = plant.n_r
    W_x = np.zeros((nx, nx))
    W_x[:n_r, :n_r] = weights.w_xi * np.eye(n_r)
    W_x[2 * n_r :, 2 * n_r :] = np.diag(wF_rows)
    W_u = weights.w_u * np.eye(n_r)
    return W_x, W_u


def tracking_solve(
    plant: LinearPlant,
    x0: np.ndarray,
    X_ref: np.ndarray,  # (N+1, n_x)
    U_ref: np.ndarray,  # (N, n_r)
    weights: TrackingWeights,
    wF_rows: np.ndarray | None = None,
    C: np.ndarray | None = None,  # (N, n_x) affine drift per step
) -> np.ndarray:
    """Finite-horizon LQR tracking by affine Riccati recursion.

    Dynamics: x_{k+1} = Ad x_k + Bd u_k + C_k. The affine term carries the
    known feed-forward torque acting through the PD loop. Returns the full
    input sequence (N, n_r). wF_rows optionally scales the force weight per
    stacked row (used to mask unplanned contacts).
    """
    N = U_ref.shape[0]
    if wF_rows is None:
        wF_rows = np.full(3 * plant.n_c, weights.w_F)
    if C is None:
        C = np.zeros((N, plant.n_x))
    W_x, W_u = _stage_weights(plant, weights, wF_rows)
    if np.any(np.diag(W_x) < 0) or np.any(np.linalg.eigvalsh(W_u) < 0):
        raise TrackingError("tracking weights must be PSD")
    W_xN = weights.terminal_scale * W_x
    A, B = plant.Ad, plant.Bd

    P = W_xN
    p = -W_xN @ X_ref[N]
    Ks = np.zeros((N, B.shape[1], plant.n_x))
    ds = np.zeros((N, B.shape[1]))
    for i in range(N - 1, -1, -1):
        M = W_u + B.T @ P @ B
        try:
            Minv = np.linalg.inv(M)
        except np.linalg.LinAlgError as e:
            raise TrackingError(f"Riccati recursion diverged (cond={plant.gain_condition:.2e})") from e
        K = -Minv @ (B.T @ P @ A)
        dvec = Minv @ (W_u @ U_ref[i] - B.T @ (P @ C[i] + p))
        ABK = A + B @ K
        P_new = W_x + K.T @ W_u @ K + ABK.T @ P @ ABK
        p_new = (
            -W_x @ X_ref[i]
            + K.T @ W_u @ (dvec - U_ref[i])
            + ABK.T @ (P @ (B @ dvec + C[i]) + p)
        )
        P, p = 0.5 * (P_new + P_new.T), p_new
        Ks[i] = K
        ds[i] = dvec

    # roll the optimal policy forward on the exact plant
    U = np.zeros((N, B.shape[1]))
    x = np.asarray(x0, dtype=float).copy()
    for i in range(N):
        U[i] = Ks[i] @ x + ds[i]
        x = A @ x + B @ U[i] + C[i]
    return U


# ----------------------------------------------------------------------
# controller step: measurement + plan -> updated nominal references
# ----------------------------------------------------------------------
@dataclass
class Measurement:
    q: np.ndarray  # full measured configuration [q_r; q_o]
    qdot: np.ndarray
    forces: dict  # pair_id -> sensed world force (press convention)


@dataclass
class ContactController:
    """Owns the nominal joint references and re-solves the tracking OCP.

    Contact stiffness, Jacobians, and the plant are rebuilt once per control
    step from the measured state; references are matched to the measured
    contact set by geometry pair id, with plan forces rotated into the
    measured contact frames.
    """

    model: SystemModel
    compliant: CompliantParams
    k_p: float
    k_d: float
    dt: float = 0.01
    object_mode: str = "anchored"
    weights: TrackingWeights = field(default_factory=TrackingWeights)
    force_lowpass_tau: float = 0.0  # first-order measured-force filter (s), 0 = off
    phi_max: float = 0.01  # nominal-model contact candidate range (m)
    xi_d: np.ndarray | None = None
    _last_out: tuple | None = None
    _filt: dict | None = None

    def reset(self, q_r: np.ndarray) -> None:
        self.xi_d = np.asarray(q_r, dtype=float).copy()
        self._last_out = None
        self._filt = {}

    def _filter_forces(self, contacts, forces):
        if self.force_lowpass_tau <= 0.0:
            return forces
        a = self.dt / (self.force_lowpass_tau + self.dt)
        out = np.array(forces, dtype=float, copy=True)
        seen = set()
        for i, c in enumerate(contacts):
            prev = self._filt.get(c.pair_id)
            if prev is not None:
                out[i] = prev + a * (out[i] - prev)
            self._filt[c.pair_id] = out[i]
            seen.add(c.pair_id)
        for pid in list(self._filt):
            if pid not in seen:
                del self._filt[pid]
        return out

    def step(self, meas: Measurement, traj: ReferenceTrajectory | None, t: float):
        """-> (q_d, qdot_d, {pair_id: world F_ff}, info dict)."""
        if self.xi_d is None:
            self.reset(meas.q[: self.model.n_q_r])
        if traj is None:
            if self._last_out is not None:  # hold last nominal, flag it
                q_d, qd_d, F_ff, info = self._last_out
                info = dict(info, held=True)
                return q_d, np.zeros_like(qd_d), F_ff, info
            return self.xi_d.copy(), np.zeros_like(self.xi_d), {}, {"held": True}

        if self._filt is None:
            self._filt = {}
        n_r = self.model.n_q_r
        # contact frames and Jacobians come from the controller's own model
        # at the measured state; forces come from sensing, matched by pair id
        contacts = detect_contacts(self.model, meas.q, self.phi_max, meas.qdot)
        forces_sorted = np.zeros((len(contacts), 3))
        for i, c in enumerate(contacts):
            fw = meas.forces.get(c.pair_id)
            if fw is not None:
                forces_sorted[i] = fw
        forces_sorted = self._filter_forces(contacts, forces_sorted)

        stiff = build_stiffness_set(contacts, self.compliant, n_r)
        plant = assemble_plant(stiff, self.k_p, self.k_d, self.object_mode, self.dt)

        # measured forces into contact-frame order (t1, t2, n)
        F0 = np.zeros(3 * len(contacts))
        for i, c in enumerate(contacts):
            F0[3 * i : 3 * i + 3] = c.R_C.T @ forces_sorted[i]

        N = self.weights.horizon
        nx = plant.n_x
        X_ref = np.zeros((N + 1, nx))
        U_ref = np.zeros((N, n_r))
        C = np.zeros((N, nx))
        wF_rows = np.zeros(3 * len(contacts))
        planned_any = np.zeros(len(contacts), dtype=bool)
        for j in range(N + 1):
            tj = t + j * self.dt
            q_d_j, qd_d_j, forces_j, _ = interpolate_references(traj, tj, n_r)
            X_ref[j, :n_r] = q_d_j
            X_ref[j, n_r : 2 * n_r] = q_d_j
            F_ref_j = np.zeros(3 * len(contacts))
            for i, c in enumerate(contacts):
                fw = forces_j.get(c.pair_id)
                if fw is not None and np.linalg.norm(fw) >= self.weights.f_ref_min:
                    F_ref_j[3 * i : 3 * i + 3] = c.R_C.T @ fw
                    planned_any[i] = True
            X_ref[j, 2 * n_r :] = F_ref_j
            if j < N:
                U_ref[j] = qd_d_j
                # the PD layer will feed these reference forces forward; the
                # plant sees that as a known drift on the joint-velocity rows
                tau_ff = plant.stiffness.J_stack.T @ F_ref_j
                C[j, :n_r] = self.dt * tau_ff / self.k_d
        for i in range(len(contacts)):
            base = self.weights.w_F if planned_any[i] else self.weights.w_F_unplanned
            wF_rows[3 * i : 3 * i + 2] = base * self.weights.w_F_tangential
            wF_rows[3 * i + 2] = base

        x0 = np.concatenate([meas.q[:n_r], self.xi_d, F0])
        U = tracking_solve(plant, x0, X_ref, U_ref, self.weights, wF_rows, C)
        u0 = np.clip(U[0], -self.weights.u_sat, self.weights.u_sat)

        self.xi_d = self.xi_d + self.dt * u0
        q_d = self.xi_d.copy()
        qd_d = u0.copy()
        _, _, F_ff, _ = interpolate_references(traj, t, n_r)
        info = {
            "held": False,
            "u0": u0,
            "gain_condition": plant.gain_condition,
            "n_contacts": len(contacts),
        }
        self._last_out = (q_d, qd_d, F_ff, info)
        return q_d, qd_d, F_ff, info
