"""Contact-implicit reference generation: box-constrained iLQR over the
smoothed contact dynamics, receding-horizon driver, and reference
interpolation.

The backward pass drops dynamics second derivatives (Gauss-Newton value
expansion); control bounds are enforced inside the backward pass by a
projected-Newton box QP, so returned controls are always feasible.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import cqdc
from .cqdc import CqdcError, SmoothStepResult, StepParams, lambda_to_world
from .model import SystemModel


@dataclass
class CostConfig:
    W_o: np.ndarray
    W_r: np.ndarray
    W_u: np.ndarray
    q_o_ref: np.ndarray  # (N+1, n_o)
    q_r_ref: np.ndarray  # (n_r,) or (N+1, n_r)
    gamma_r: float = 5.0
    tail_knots: int = 3

    def __post_init__(self):
        self.W_o = np.atleast_2d(np.asarray(self.W_o, dtype=float))
        self.W_r = np.atleast_2d(np.asarray(self.W_r, dtype=float))
        self.W_u = np.atleast_2d(np.asarray(self.W_u, dtype=float))
        for W in (self.W_o, self.W_r, self.W_u):
            if not np.allclose(W, W.T) or np.any(np.linalg.eigvalsh(W) < -1e-12):
                raise ValueError("cost weights must be symmetric PSD")
        if self.gamma_r < 1.0:
            raise ValueError("terminal boost must be >= 1")
        self.q_o_ref = np.atleast_2d(np.asarray(self.q_o_ref, dtype=float))

    def r_ref(self, knot: int) -> np.ndarray:
        r = np.asarray(self.q_r_ref, dtype=float)
        return r[knot] if r.ndim == 2 else r

    def W_r_at(self, knot: int, N: int) -> np.ndarray:
        if knot > N - self.tail_knots:
            return self.gamma_r * self.W_r
        return self.W_r


@dataclass
class DdpParams:
    max_iters: int = 30
    cost_tol: float = 1e-6
    reg_init: float = 1e-6
    reg_factor: float = 10.0
    reg_max: float = 1e8


@dataclass
class OcpConfig:
    N: int
    h: float
    u_lo: np.ndarray
    u_hi: np.ndarray
    kappa: float = 100.0
    ddp: DdpParams = field(default_factory=DdpParams)

    def __post_init__(self):
        self.u_lo = np.asarray(self.u_lo, dtype=float)
        self.u_hi = np.asarray(self.u_hi, dtype=float)
        if self.N < 2:
            raise ValueError("horizon must have at least 2 knots")
        if np.any(self.u_lo >= self.u_hi):
            raise ValueError("u_lo must be elementwise below u_hi")


@dataclass
class KnotForces:
    pair_ids: list[tuple[str, str]]
    forces_world: np.ndarray  # (N_c, 3), force on the robot
    lambdas: np.ndarray  # (N_c, 3), contact frame (n, t1, t2)
    phis: np.ndarray  # (N_c,)


@dataclass
class ReferenceTrajectory:
    t0: float
    h: float
    X: np.ndarray  # (N+1, n_q)
    U: np.ndarray  # (N, n_q_r)
    forces: list[KnotForces]
    converged: bool
    cost_trace: list[float]
    ddp_iters: int

    @property
    def horizon(self) -> int:
        return self.U.shape[0]


# ----------------------------------------------------------------------
# costs
# ----------------------------------------------------------------------
def running_cost(x, u, cfg: CostConfig, knot: int, N: int, n_q_r: int):
    """Stage cost value with exact gradients and Gauss-Newton Hessians."""
    q_r = x[:n_q_r]
    q_o = x[n_q_r:]
    Wr = cfg.W_r_at(knot, N)
    eo = q_o - cfg.q_o_ref[knot]
    er = q_r - cfg.r_ref(knot)
    val = float(eo @ cfg.W_o @ eo + er @ Wr @ er + u @ cfg.W_u @ u)
    l_x = np.concatenate([2.0 * Wr @ er, 2.0 * cfg.W_o @ eo])
    l_xx = np.zeros((x.shape[0], x.shape[0]))
    l_xx[:n_q_r, :n_q_r] = 2.0 * Wr
    l_xx[n_q_r:, n_q_r:] = 2.0 * cfg.W_o
    l_u = 2.0 * cfg.W_u @ u
    l_uu = 2.0 * cfg.W_u
    return val, l_x, l_u, l_xx, l_uu


def terminal_cost(x, cfg: CostConfig, N: int, n_q_r: int):
    q_r = x[:n_q_r]
    q_o = x[n_q_r:]
    Wr = cfg.W_r_at(N, N)
    eo = q_o - cfg.q_o_ref[N]
    er = q_r - cfg.r_ref(N)
    val = float(eo @ cfg.W_o @ eo + er @ Wr @ er)
    l_x = np.concatenate([2.0 * Wr @ er, 2.0 * cfg.W_o @ eo])
    l_xx = np.zeros((x.shape[0], x.shape[0]))
    l_xx[:n_q_r, :n_q_r] = 2.0 * Wr
    l_xx[n_q_r:, n_q_r:] = 2.0 * cfg.W_o
    return val, l_x, l_xx


# ----------------------------------------------------------------------
# box-constrained control QP (projected Newton, active-set iteration)
# ----------------------------------------------------------------------
def box_qp(H, g, lo, hi, x0, max_iters: int = 100, tol: float = 1e-9):
    """min 0.5 x'Hx + g'x  s.t. lo <= x <= hi.

    Returns (x, free_mask, H_ff_inv_rows) where the last is the inverse of
    the free-free Hessian block (for feedback-gain computation), or None
    when everything is clamped.
    """
    n = len(g)
    x = np.clip(np.asarray(x0, dtype=float), lo, hi)
    free = np.ones(n, dtype=bool)
    for _ in range(max_iters):
        grad = H @ x + g
        at_lo = (x <= lo + 1e-12) & (grad > 0)
        at_hi = (x >= hi - 1e-12) & (grad < 0)
        free = ~(at_lo | at_hi)
        if not np.any(free):
            return x, free, None
        gf = grad[free]
        if np.linalg.norm(gf) < tol:
            break
        Hff = H[np.ix_(free, free)]
        try:
            dx_f = np.linalg.solve(Hff, -gf)
        except np.linalg.LinAlgError:
            dx_f = -gf
        dx = np.zeros(n)
        dx[free] = dx_f
        # projected backtracking on the QP objective
        f0 = 0.5 * x @ H @ x + g @ x
        t = 1.0
        improved = False
        while t >= 1e-10:
            xt = np.clip(x + t * dx, lo, hi)
            ft = 0.5 * xt @ H @ xt + g @ xt
            if ft < f0 - 1e-12:
                x = xt
                improved = True
                break
            t *= 0.5
        if not improved:
            break
    Hff = H[np.ix_(free, free)]
    Hff_inv = np.linalg.inv(Hff) if np.any(free) else None
    return x, free, Hff_inv


# ----------------------------------------------------------------------
# DDP solver
# ----------------------------------------------------------------------
class CqdcDynamics:
    """Dynamics adapter: smoothed contact step with first-order derivatives.

    Rollouts use the gradient-free step; derivatives are filled in lazily
    for accepted trajectories only (they dominate the step cost).
    """

    def __init__(self, model: SystemModel, params: StepParams):
        self.model = model
        self.params = params
        self.n_x = model.n_q
        self.n_u = model.n_q_r
        self._warm: dict[int, np.ndarray] = {}

    def step(self, x, u, knot: int | None = None) -> SmoothStepResult:
        v0 = self._warm.get(knot) if knot is not None else None
        res = cqdc.step_dynamics(
            self.model, x, u, self.params, with_gradients=False, v0=v0
        )
        if knot is not None:
            self._warm[knot] = res.v_star
        return res

    def fill_gradients(self, x, u, res: SmoothStepResult) -> None:
        if res.f_x.size:
            return
        dv_dq, dv_du = cqdc.smooth_gradients(
            self.model, x, u, res.problem, res.v_star, self.params
        )
        res.f_x = np.eye(self.n_x) + self.params.h * dv_dq
        res.f_u = self.params.h * dv_du


def _rollout(dynamics, x0, U, cost_cfg, N, n_q_r):
    X = [np.asarray(x0, dtype=float)]
    steps = []
    total = 0.0
    for i in range(N):
        res = dynamics.step(X[-1], U[i], i)
        val, *_ = running_cost(X[-1], U[i], cost_cfg, i, N, n_q_r)
        total += val
        X.append(res.q_next)
        steps.append(res)
    tval, *_ = terminal_cost(X[-1], cost_cfg, N, n_q_r)
    total += tval
    return np.array(X), steps, total


def ddp_solve(
    dynamics,
    x0: np.ndarray,
    U_init: np.ndarray,
    ocp: OcpConfig,
    costs: CostConfig,
) -> ReferenceTrajectory:
    """Control-limited iLQR. Accepted iterations strictly decrease the cost."""
    N = ocp.N
    n_u = dynamics.n_u
    n_x = dynamics.n_x
    U = np.clip(np.asarray(U_init, dtype=float).reshape(N, n_u), ocp.u_lo, ocp.u_hi)

    X, steps, cost = _rollout(dynamics, x0, U, costs, N, n_u)
    cost_trace = [cost]
    reg = ocp.ddp.reg_init
    converged = False
    iters_done = 0

    fill = getattr(dynamics, "fill_gradients", None)
    for it in range(ocp.ddp.max_iters):
        iters_done = it + 1
        # ---------------- backward pass ----------------
        if fill is not None:
            for i in range(N):
                fill(X[i], U[i], steps[i])
        _, Vx, Vxx = terminal_cost(X[N], costs, N, n_u)
        ks = np.zeros((N, n_u))
        Ks = np.zeros((N, n_u, n_x))
        back_ok = True
        for i in range(N - 1, -1, -1):
            fx, fu = steps[i].f_x, steps[i].f_u
            _, l_x, l_u, l_xx, l_uu = running_cost(X[i], U[i], costs, i, N, n_u)
            Q_x = l_x + fx.T @ Vx
            Q_u = l_u + fu.T @ Vx
            Q_xx = l_xx + fx.T @ Vxx @ fx
            Q_ux = fu.T @ Vxx @ fx
            Q_uu = l_uu + fu.T @ Vxx @ fu + reg * np.eye(n_u)
            try:
                k_i, free, Hff_inv = box_qp(Q_uu, Q_u, ocp.u_lo - U[i], ocp.u_hi - U[i], np.zeros(n_u))
            except np.linalg.LinAlgError:
                back_ok = False
                break
            K_i = np.zeros((n_u, n_x))
            if Hff_inv is not None:
                K_i[free] = -Hff_inv @ Q_ux[free]
            ks[i] = k_i
            Ks[i] = K_i
            Vx = Q_x + K_i.T @ Q_uu @ k_i + K_i.T @ Q_u + Q_ux.T @ k_i
            Vxx = Q_xx + K_i.T @ Q_uu @ K_i + K_i.T @ Q_ux + Q_ux.T @ K_i
            Vxx = 0.5 * (Vxx + Vxx.T)
        if not back_ok:
            reg *= ocp.ddp.reg_factor
            if reg > ocp.ddp.reg_max:
                break
            continue

        # ---------------- forward pass ----------------
        accepted = False
        best_seen = np.inf
        for alpha in [2.0**-i for i in range(11)]:
            Xn = [X[0]]
            Un = np.zeros_like(U)
            steps_n = []
            total = 0.0
            failed = False
            for i in range(N):
                du = alpha * ks[i] + Ks[i] @ (Xn[-1] - X[i])
                Un[i] = np.clip(U[i] + du, ocp.u_lo, ocp.u_hi)
                try:
                    res = dynamics.step(Xn[-1], Un[i], i)
                except CqdcError:
                    failed = True
                    break
                val, *_ = running_cost(Xn[-1], Un[i], costs, i, N, n_u)
                total += val
                if total >= cost:  # stage costs are nonnegative: prune this alpha
                    best_seen = min(best_seen, total)
                    failed = True
                    break
                Xn.append(res.q_next)
                steps_n.append(res)
            if failed:
                continue
            tval, *_ = terminal_cost(Xn[-1], costs, N, n_u)
            total += tval
            best_seen = min(best_seen, total)
            if total < cost:
                X, U, steps = np.array(Xn), Un, steps_n
                prev_cost = cost
                cost = total
                cost_trace.append(cost)
                accepted = True
                reg = max(reg / ocp.ddp.reg_factor, 1e-9)
                break

        tol = ocp.ddp.cost_tol * max(1.0, abs(cost))
        if not accepted:
            # no strict decrease found; if the sweep got within tolerance of
            # the incumbent the iterate is already (locally) optimal
            if best_seen >= cost - tol and np.isfinite(best_seen):
                converged = True
                break
            reg *= ocp.ddp.reg_factor
            if reg > ocp.ddp.reg_max:
                break
            continue
        if prev_cost - cost <= tol:
            converged = True
            break

    # planned interaction forces, reported as the force the robot exerts on
    # the object (press convention): the negated dual reaction
    forces = [
        KnotForces(
            pair_ids=[c.pair_id for c in res.contacts],
            forces_world=np.array(
                [-lambda_to_world(c, res.lambda_star[j]) for j, c in enumerate(res.contacts)]
            ).reshape(-1, 3),
            lambdas=res.lambda_star.copy(),
            phis=np.array([c.phi for c in res.contacts]),
        )
        for res in steps
    ]
    return ReferenceTrajectory(
        t0=0.0,
        h=ocp.h,
        X=X,
        U=U,
        forces=forces,
        converged=converged,
        cost_trace=cost_trace,
        ddp_iters=iters_done,
    )


# ----------------------------------------------------------------------
# receding-horizon driver
# ----------------------------------------------------------------------
class ReferenceGenerator:
    """Receding-horizon wrapper producing interpolable references.

    Warm start shifts the previous solution by the number of whole knots
    elapsed and repeats the last control; the first call starts from U = 0.
    """

    def __init__(self, model: SystemModel, ocp: OcpConfig, costs_template: CostConfig,
                 step_params: StepParams | None = None):
        self.model = model
        self.ocp = ocp
        self.costs_template = costs_template
        sp = step_params or StepParams(h=ocp.h, kappa=ocp.kappa)
        self.dynamics = CqdcDynamics(model, sp)
        self.prev: ReferenceTrajectory | None = None

    def costs_for(self, q_o_ref: np.ndarray) -> CostConfig:
        t = self.costs_template
        return CostConfig(t.W_o, t.W_r, t.W_u, q_o_ref, t.q_r_ref, t.gamma_r, t.tail_knots)

    def mpc_step(self, q_now: np.ndarray, q_o_ref: np.ndarray, t_now: float = 0.0) -> ReferenceTrajectory:
        N, n_u = self.ocp.N, self.model.n_q_r
        if self.prev is None:
            U0 = np.zeros((N, n_u))
        else:
            shift = int(np.floor((t_now - self.prev.t0) / self.ocp.h + 1e-9))
            shift = min(max(shift, 0), N)
            U0 = np.vstack([self.prev.U[shift:], np.tile(self.prev.U[-1], (shift, 1))])
        traj = ddp_solve(self.dynamics, q_now, U0, self.ocp, self.costs_for(q_o_ref))
        traj.t0 = t_now
        self.prev = traj
        return traj


def interpolate_references(traj: ReferenceTrajectory, t: float, n_q_r: int):
    """(q_d, qdot_d, {pair_id: world force}, clamped_flag) at time t.

    Joint references interpolate linearly between knots; velocities are the
    knot finite differences (constant per interval); planned forces are held
    zero-order over each interval.
    """
    N = traj.horizon
    s = (t - traj.t0) / traj.h
    clamped = s < -1e-9 or s > N + 1e-9
    s = min(max(s, 0.0), float(N))
    i = min(int(np.floor(s)), N - 1)
    frac = s - i
    Xr = traj.X[:, :n_q_r]
    q_d = (1.0 - frac) * Xr[i] + frac * Xr[i + 1]
    qd_d = (Xr[i + 1] - Xr[i]) / traj.h
    kf = traj.forces[i]
    forces = {pid: kf.forces_world[j] for j, pid in enumerate(kf.pair_ids)}
    return q_d, qd_d, forces, clamped
