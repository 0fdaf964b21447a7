"""Compliant contact model and stacked stiffness operators.

The normal force law is a softplus spring scaled by a piecewise-quadratic
dissipation factor; its phi-slope defines the contact stiffness used by the
low-level force-motion model. Stiffness magnitudes are stored (the raw
slope is negative) so every operator stays positive semidefinite.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .contacts import ContactInfo


@dataclass(frozen=True)
class CompliantParams:
    sigma: float = 1e-3  # smoothing length (m)
    k: float = 2000.0  # stiffness scale (N/m)
    v_d: float = 0.1  # dissipation reference velocity (m/s)
    alpha: float = 0.3  # tangential / normal stiffness ratio
    use_dissipation: bool = False

    def __post_init__(self):
        if self.sigma <= 0 or self.k <= 0 or self.v_d <= 0 or self.alpha < 0:
            raise ValueError("invalid compliant contact parameters")


def dissipation(phidot: float, v_d: float) -> float:
    """Velocity factor: (1 - r) for r < 0, 0.25 (r - 2)^2 for 0 <= r < 2, else 0."""
    r = phidot / v_d
    if r < 0.0:
        return 1.0 - r
    if r < 2.0:
        return 0.25 * (r - 2.0) ** 2
    return 0.0


def _softplus(x: float) -> float:
    # overflow-safe log(1 + e^x)
    return max(x, 0.0) + np.log1p(np.exp(-abs(x)))


def normal_force(phi: float, phidot: float, params: CompliantParams) -> float:
    """f_n = sigma k log(1 + exp(-phi/sigma)) d_n(phidot), nonnegative."""
    d_n = dissipation(phidot, params.v_d) if params.use_dissipation else 1.0
    return params.sigma * params.k * _softplus(-phi / params.sigma) * d_n


def stiffness_scalar(phi: float, params: CompliantParams) -> float:
    """|d f_n / d phi| at phidot = 0: k / (1 + exp(phi/sigma))."""
    x = phi / params.sigma
    # logistic, overflow-safe on both tails
    if x >= 0:
        return params.k * np.exp(-x) / (1.0 + np.exp(-x))
    return params.k / (1.0 + np.exp(x))


def contact_stiffness(phi: float, params: CompliantParams) -> np.ndarray:
    """Contact-frame stiffness diag(alpha s, alpha s, s), frame order (t1, t2, n)."""
    s = stiffness_scalar(phi, params)
    return np.diag([params.alpha * s, params.alpha * s, s])


@dataclass
class StiffnessSet:
    """Stacked multi-contact stiffness operators, rows sorted by pair id.

    Per-contact blocks follow the contact frame order (t1, t2, n). World
    quantities use Kc_world = R_C cKc R_C'; K_o reflects every contact
    stiffness to the object twist coordinates [w; v].
    """

    pair_ids: list[tuple[str, str]]
    cKc: np.ndarray  # (N_c, 3, 3) contact-frame stiffness blocks
    Kc_world: np.ndarray  # (N_c, 3, 3)
    K_o: np.ndarray  # (6, 6)
    G_stack: np.ndarray  # (3 N_c, 6) contact-frame grasp rows R_C' G
    J_stack: np.ndarray  # (3 N_c, n_q_r) contact-frame robot point Jacobians
    M_bar: np.ndarray  # (3 N_c, n_q_r) rows cKc_i J_i
    N_bar: np.ndarray  # (3 N_c, 6) rows cKc_i G_i
    R_blocks: np.ndarray = field(default=None)  # (N_c, 3, 3) contact frames

    @property
    def n_c(self) -> int:
        return len(self.pair_ids)


def build_stiffness_set(
    contacts: list[ContactInfo], params: CompliantParams, n_q_r: int
) -> StiffnessSet:
    """Assemble all stacked operators for the given contact set.

    The robot point Jacobian of each contact is the robot-joint block of the
    relative contact Jacobian (the object columns belong to K_o's side of
    the model). An empty contact list yields empty operators and K_o = 0.
    """
    order = sorted(range(len(contacts)), key=lambda i: contacts[i].pair_id)
    nc = len(order)
    cKc = np.zeros((nc, 3, 3))
    Kcw = np.zeros((nc, 3, 3))
    K_o = np.zeros((6, 6))
    G_stack = np.zeros((3 * nc, 6))
    J_stack = np.zeros((3 * nc, n_q_r))
    M_bar = np.zeros((3 * nc, n_q_r))
    N_bar = np.zeros((3 * nc, 6))
    R_blocks = np.zeros((nc, 3, 3))
    pair_ids = []

    for row, idx in enumerate(order):
        c = contacts[idx]
        pair_ids.append(c.pair_id)
        kc = contact_stiffness(c.phi, params)
        R = c.R_C
        Kw = R @ kc @ R.T
        G_world = c.G
        G_frame = R.T @ G_world
        # robot columns of the relative Jacobian, rotated to frame order
        J_rel = np.vstack([c.jt, c.jn])  # (t1, t2, n) rows
        J_frame = J_rel[:, :n_q_r]

        sl = slice(3 * row, 3 * row + 3)
        cKc[row] = kc
        Kcw[row] = Kw
        R_blocks[row] = R
        G_stack[sl] = G_frame
        J_stack[sl] = J_frame
        M_bar[sl] = kc @ J_frame
        N_bar[sl] = kc @ G_frame
        K_o += G_world.T @ Kw @ G_world

    return StiffnessSet(pair_ids, cKc, Kcw, K_o, G_stack, J_stack, M_bar, N_bar, R_blocks)
