"""Convex quasi-dynamic contact step with log-barrier smoothing.

One dynamics step solves

    min_v  (1/2) v' Q v + b' v + (1/kappa) * zeta(v)

where zeta is the log barrier of the per-contact friction-cone constraints
mu_i ||J_t,i v|| <= J_n,i v + phi_i / h. The barrier parameter kappa doubles
as the smoothing knob: smaller kappa lets nearby, non-touching contacts
exert force at a distance, which is what makes the step differentiable
across contact mode changes.

Conventions:

* q = [q_r; q_o]; the robot block of Q is h * K_r, the object block is
  M_o / h plus the object joint damping (a velocity-proportional resistance
  is quadratic in v, so it lives in Q, not in the constant torque vector);
* duals are reported as physical contact-frame forces (n, t1, t2) acting on
  the non-object body. These satisfy Q v + b = sum_i J_i' lambda_i exactly
  and lie in the Coulomb cone ||lambda_t|| <= mu * lambda_n. They are in
  Newtons: no h-rescaling is needed, since the stationarity of the
  velocity-level program is a force balance;
* phi is clamped from below at phi_min so v = 0 is always strictly
  feasible, even if the caller's state slightly penetrates.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .contacts import ContactInfo, contact_pack, detect_contacts
from .model import SystemModel


class CqdcError(RuntimeError):
    pass


@dataclass
class StepParams:
    h: float = 0.1
    kappa: float = 100.0
    phi_min: float = 1e-6
    phi_max: float = 0.05
    newton_max_iters: int = 100
    grad_tol: float = 1e-8
    decrement_tol: float = 1e-10
    fd_step: float = 1e-6

    def __post_init__(self):
        if self.h <= 0 or self.kappa <= 0:
            raise ValueError("h and kappa must be positive")


@dataclass
class QdProblem:
    Q: np.ndarray
    b: np.ndarray
    phi: np.ndarray  # clamped, (N_c,)
    Jn: np.ndarray  # (N_c, n_q)
    Jt: np.ndarray  # (N_c, 2, n_q)
    mu: np.ndarray  # (N_c,)
    h: float
    kappa: float
    n_q_r: int
    n_q_o: int
    contacts: list[ContactInfo] = field(default_factory=list)

    @property
    def n_q(self) -> int:
        return self.n_q_r + self.n_q_o

    @property
    def n_c(self) -> int:
        return len(self.phi)


@dataclass
class BarrierSolution:
    v: np.ndarray
    newton_iters: int
    grad_norm: float
    decrement: float


@dataclass
class SmoothStepResult:
    v_star: np.ndarray
    lambda_star: np.ndarray  # (N_c, 3) physical forces, contact frame (n, t1, t2)
    q_next: np.ndarray
    f_x: np.ndarray  # (n_q, n_q)
    f_u: np.ndarray  # (n_q, n_q_r)
    newton_iters: int
    kkt_residual: float
    contacts: list[ContactInfo]
    problem: QdProblem


# ----------------------------------------------------------------------
# problem assembly
# ----------------------------------------------------------------------
def assemble(
    model: SystemModel,
    q: np.ndarray,
    u: np.ndarray,
    params: StepParams,
    tau_ext: np.ndarray | None = None,
    contacts: list[ContactInfo] | None = None,
) -> QdProblem:
    """Build the quadratic program data at configuration q with command u."""
    q = np.asarray(q, dtype=float).reshape(model.n_q)
    u = np.asarray(u, dtype=float).reshape(model.n_q_r)
    if contacts is None:
        contacts = detect_contacts(model, q, params.phi_max)

    n_r, n_o = model.n_q_r, model.n_q_o
    cache = getattr(model, "_qd_matrix_cache", None)
    if cache is None:
        cache = {}
        model._qd_matrix_cache = cache
    Q = cache.get(params.h)
    if Q is None:
        Q = np.zeros((model.n_q, model.n_q))
        Q[:n_r, :n_r] = params.h * np.diag(model.joint_stiffness)
        Q[n_r:, n_r:] = model.object_inertia / params.h + np.diag(
            model.object_joint.damping_vector()
        )
        cache[params.h] = Q

    tau = model.gravity_torque(q)
    if tau_ext is not None:
        tau = tau + np.asarray(tau_ext, dtype=float).reshape(model.n_q)
    b = np.zeros(model.n_q)
    b[:n_r] = -(model.joint_stiffness * u + tau[:n_r])
    b[n_r:] = -tau[n_r:]

    nc = len(contacts)
    phi = np.array([max(c.phi, params.phi_min) for c in contacts])
    Jn = np.zeros((nc, model.n_q))
    Jt = np.zeros((nc, 2, model.n_q))
    mu = np.zeros(nc)
    for i, c in enumerate(contacts):
        Jn[i] = c.jn
        Jt[i] = c.jt
        mu[i] = c.mu
    return QdProblem(Q, b, phi, Jn, Jt, mu, params.h, params.kappa, n_r, n_o, contacts)


# ----------------------------------------------------------------------
# barrier quantities
# ----------------------------------------------------------------------
def _cone_terms(prob: QdProblem, v: np.ndarray):
    """e_i = J_n v + phi/h, w_i = J_t v, alpha_i = e^2 - mu^2 |w|^2."""
    n_c = prob.n_c
    if n_c == 0:
        return np.zeros(0), np.zeros((0, 2)), np.zeros(0)
    e = prob.Jn @ v + prob.phi / prob.h
    w = (prob.Jt.reshape(2 * n_c, -1) @ v).reshape(n_c, 2)
    alpha = e * e - prob.mu**2 * (w * w).sum(axis=1)
    return e, w, alpha


def _feasible(e: np.ndarray, alpha: np.ndarray) -> bool:
    return bool(np.all(e > 0) and np.all(alpha > 0))


def barrier_objective(prob: QdProblem, v: np.ndarray) -> float:
    e, w, alpha = _cone_terms(prob, v)
    if not _feasible(e, alpha):
        return np.inf
    val = 0.5 * v @ prob.Q @ v + prob.b @ v
    if prob.n_c:
        val -= np.sum(np.log(alpha)) / prob.kappa
    return float(val)


def quad_objective(prob: QdProblem, v: np.ndarray) -> float:
    """Exact quadratic objective (barrier excluded)."""
    return float(0.5 * v @ prob.Q @ v + prob.b @ v)


def barrier_grad_hess(prob: QdProblem, v: np.ndarray):
    """(grad zeta, hess zeta) at a strictly feasible v."""
    n = prob.n_q
    if prob.n_c == 0:
        return np.zeros(n), np.zeros((n, n))
    e, w, alpha = _cone_terms(prob, v)
    mu2 = prob.mu**2
    m = np.einsum("ctq,ct->cq", prob.Jt, w)  # J_t' J_t v per contact
    ga = 2.0 * e[:, None] * prob.Jn - 2.0 * mu2[:, None] * m  # grad alpha_i
    g = -np.einsum("cq,c->q", ga, 1.0 / alpha)
    H = np.einsum("cq,cp,c->qp", ga, ga, 1.0 / alpha**2)
    H -= np.einsum("cq,cp,c->qp", prob.Jn, prob.Jn, 2.0 / alpha)
    H += np.einsum("ctq,ctp,c->qp", prob.Jt, prob.Jt, 2.0 * mu2 / alpha)
    return g, H


def _solve_spd(H: np.ndarray, rhs: np.ndarray, trQ: float) -> np.ndarray:
    """Cholesky solve with iterative refinement and a tiny-regularization retry.

    Refinement recovers the digits lost when the barrier term makes H very
    ill-conditioned near the cone boundary (condition numbers ~1e11 appear
    on legitimate instances with strong internal squeeze forces).
    """
    n = H.shape[0]
    reg = 0.0
    for _ in range(4):
        try:
            c = cho_factor(H + reg * np.eye(n), lower=True)
            x = cho_solve(c, rhs)
            for _ in range(2):
                r = rhs - H @ x
                x = x + cho_solve(c, r)
            return x
        except np.linalg.LinAlgError:
            reg = max(reg * 10.0, 1e-10 * trQ / n)
    raise CqdcError("barrier Hessian factorization failed after regularization")


# ----------------------------------------------------------------------
# Newton solver
# ----------------------------------------------------------------------
def _max_feasible_step(prob: QdProblem, v: np.ndarray, dv: np.ndarray) -> float:
    """Largest t keeping e + t de > 0 and alpha(v + t dv) > 0 for all cones."""
    if prob.n_c == 0:
        return np.inf
    e, w, alpha = _cone_terms(prob, v)
    de = prob.Jn @ dv
    dw = np.einsum("ctq,q->ct", prob.Jt, dv)
    t_max = np.inf
    neg = de < 0
    if np.any(neg):
        t_max = float(np.min(-e[neg] / de[neg]))
    # alpha(t) = c2 t^2 + c1 t + c0 with c0 > 0: first positive root bounds t
    mu2 = prob.mu**2
    c2 = de**2 - mu2 * np.einsum("ct,ct->c", dw, dw)
    c1 = 2.0 * (e * de - mu2 * np.einsum("ct,ct->c", w, dw))
    c0 = alpha
    disc = c1 * c1 - 4.0 * c2 * c0
    has = disc >= 0.0
    if np.any(has):
        sq = np.sqrt(disc[has])
        c2h, c1h, c0h = c2[has], c1[has], c0[has]
        with np.errstate(divide="ignore", invalid="ignore"):
            for root in ((-c1h - sq), (-c1h + sq)):
                r = np.where(np.abs(c2h) > 1e-300, root / (2.0 * c2h), np.inf)
                pos = r > 0
                if np.any(pos):
                    t_max = min(t_max, float(np.min(r[pos])))
            lin = (np.abs(c2h) <= 1e-300) & (c1h < 0)
            if np.any(lin):
                t_max = min(t_max, float(np.min(-c0h[lin] / c1h[lin])))
    return t_max


def barrier_solve(
    prob: QdProblem,
    v0: np.ndarray | None = None,
    max_iters: int = 100,
    grad_tol: float = 1e-8,
    decrement_tol: float = 1e-10,
) -> BarrierSolution:
    """Solve the smoothed step to the stated exit tolerances.

    A cold start occasionally faces a long damped-Newton phase on strongly
    squeezed instances; if the direct solve stalls, retry by warm-starting
    from the same problem at smaller kappa (the returned point is still the
    target-kappa central point, so the smoothing semantics are unchanged).
    """
    if v0 is not None:
        e, _, alpha = _cone_terms(prob, np.asarray(v0, dtype=float))
        if not _feasible(e, alpha):
            v0 = None  # warm start outside the cone: fall back to rest
    try:
        return _newton_solve(prob, v0, max_iters, grad_tol, decrement_tol)
    except CqdcError:
        if v0 is not None:
            v0 = None  # retry cold before escalating
            try:
                return _newton_solve(prob, None, max_iters, grad_tol, decrement_tol)
            except CqdcError:
                pass
        v = None
        for scale in (1e-3, 1e-2, 1e-1, 1.0):
            sub = QdProblem(
                prob.Q, prob.b, prob.phi, prob.Jn, prob.Jt, prob.mu,
                prob.h, prob.kappa * scale, prob.n_q_r, prob.n_q_o, prob.contacts,
            )
            sol = _newton_solve(sub, v, max(max_iters, 200), grad_tol, decrement_tol)
            v = sol.v
        return sol


def _newton_solve(
    prob: QdProblem,
    v0: np.ndarray | None,
    max_iters: int,
    grad_tol: float,
    decrement_tol: float,
) -> BarrierSolution:
    """Damped Newton: fraction-to-boundary step cap + Armijo backtracking."""
    v = np.zeros(prob.n_q) if v0 is None else np.asarray(v0, dtype=float).copy()
    e, _, alpha = _cone_terms(prob, v)
    if not _feasible(e, alpha):
        raise CqdcError("infeasible start point (phi clamping should prevent this)")

    trQ = float(np.trace(prob.Q))
    inv_k = 1.0 / prob.kappa
    grad_norm = np.inf
    decrement = np.inf
    for it in range(max_iters):
        gz, Hz = barrier_grad_hess(prob, v)
        g = prob.Q @ v + prob.b + inv_k * gz
        grad_norm = float(np.linalg.norm(g))
        if grad_norm <= grad_tol:
            return BarrierSolution(v, it, grad_norm, 0.0)
        H = prob.Q + inv_k * Hz
        dv = _solve_spd(H, -g, trQ)
        decrement = float(-0.5 * g @ dv)  # lambda^2 / 2
        if decrement <= decrement_tol:
            return BarrierSolution(v, it, grad_norm, decrement)

        f0 = barrier_objective(prob, v)
        slope = float(g @ dv)
        # damped-Newton initial step: the 1/(1+lambda) rule avoids most
        # backtracking when far from the central point; the feasible-boundary
        # cap is only computed if the cheap full step fails
        lam = np.sqrt(max(2.0 * decrement, 0.0))
        t = min(1.0, 1.0 / (1.0 + lam)) if lam > 0.25 else 1.0
        accepted = False
        tried_boundary = False
        while t >= 1e-14:
            vt = v + t * dv
            ft = barrier_objective(prob, vt)  # inf when infeasible: clips the step
            if np.isfinite(ft) and ft <= f0 + 1e-4 * t * slope:
                v = vt
                accepted = True
                break
            if not tried_boundary:
                tried_boundary = True
                t = min(t, 0.995 * _max_feasible_step(prob, v, dv))
                continue
            t *= 0.5
        if not accepted:
            raise CqdcError(
                f"barrier line search stalled: iter={it} |g|={grad_norm:.3e} "
                f"decrement={decrement:.3e}"
            )
    raise CqdcError(
        f"Newton did not converge in {max_iters} iterations: |g|={grad_norm:.3e} "
        f"decrement={decrement:.3e}"
    )


# ----------------------------------------------------------------------
# duals and derivatives
# ----------------------------------------------------------------------
def extract_duals(prob: QdProblem, v_star: np.ndarray) -> np.ndarray:
    """Per-contact physical force (N_c, 3) in contact frame, rows (n, t1, t2).

    The normal part is 2 e_i / (kappa alpha_i); the tangential part carries
    mu^2 so that Q v + b = sum_i J_i' lambda_i holds exactly and each force
    lies in its Coulomb cone.
    """
    e, w, alpha = _cone_terms(prob, v_star)
    if np.any(alpha <= 0) or np.any(e <= 0):
        raise CqdcError("duals requested at an infeasible point (alpha <= 0)")
    lam = np.zeros((prob.n_c, 3))
    if prob.n_c:
        scale = 2.0 / (prob.kappa * alpha)
        lam[:, 0] = scale * e
        lam[:, 1:] = -(scale * prob.mu**2)[:, None] * w
    return lam


def contact_torque(prob: QdProblem, lam: np.ndarray) -> np.ndarray:
    """Generalized torque of the contact forces: sum_i J_i' lambda_i."""
    tau = np.zeros(prob.n_q)
    for i in range(prob.n_c):
        tau += prob.Jn[i] * lam[i, 0] + prob.Jt[i].T @ lam[i, 1:]
    return tau


def _residual_for_q(
    model: SystemModel,
    q: np.ndarray,
    u: np.ndarray,
    params: StepParams,
    pair_ids: list[tuple[str, str]],
    v_star: np.ndarray,
) -> np.ndarray:
    """r(q) = b(q) + (1/kappa) grad zeta(v*; phi(q), J(q)), frozen pair set."""
    n_r = model.n_q_r
    tau = model.gravity_torque(q)
    b = np.empty(model.n_q)
    b[:n_r] = -(model.joint_stiffness * np.asarray(u, float) + tau[:n_r])
    b[n_r:] = -tau[n_r:]
    if not pair_ids:
        return b
    phi, Jn, Jt = contact_pack(model, q, pair_ids)
    phi = np.maximum(phi, params.phi_min)
    e = Jn @ v_star + phi / params.h
    w = np.einsum("ctq,q->ct", Jt, v_star)
    mu = np.array([model.friction_for(*p) for p in pair_ids])
    alpha = e**2 - mu**2 * np.einsum("ct,ct->c", w, w)
    g = np.zeros(model.n_q)
    for i in range(len(pair_ids)):
        ga = 2.0 * e[i] * Jn[i] - 2.0 * mu[i] ** 2 * (Jt[i].T @ w[i])
        g -= ga / alpha[i]
    return b + g / params.kappa


def _grad_zeta_batch(
    model: SystemModel,
    Qbatch: np.ndarray,
    params: StepParams,
    pair_ids: list[tuple[str, str]],
    mu: np.ndarray,
    v_star: np.ndarray,
) -> np.ndarray:
    """grad zeta(v*) re-evaluated at each configuration in Qbatch (B, n_q).

    Only J_n and the tangential projector of the relative Jacobian enter, so
    the batch path skips tangent-basis construction entirely.
    """
    from .contacts import contact_pack_batch

    phi, Jn, Jrel, normals = contact_pack_batch(model, Qbatch, pair_ids)
    phi = np.maximum(phi, params.phi_min)
    e = np.einsum("bcq,q->bc", Jn, v_star) + phi / params.h
    t = np.einsum("bciq,q->bci", Jrel, v_star)
    tn = np.einsum("bci,bci->bc", normals, t)
    tt = t - tn[:, :, None] * normals  # tangential relative velocity
    wnorm2 = np.einsum("bci,bci->bc", tt, tt)
    alpha = e**2 - mu[None, :] ** 2 * wnorm2
    m = np.einsum("bciq,bci->bcq", Jrel, tt)  # J_t' J_t v*
    ga = 2.0 * e[:, :, None] * Jn - 2.0 * (mu[None, :] ** 2)[:, :, None] * m
    return -np.einsum("bcq,bc->bq", ga, 1.0 / alpha)


def smooth_gradients(
    model: SystemModel,
    q: np.ndarray,
    u: np.ndarray,
    prob: QdProblem,
    v_star: np.ndarray,
    params: StepParams,
) -> tuple[np.ndarray, np.ndarray]:
    """(dv/dq, dv/du) by the implicit function theorem on the barrier optimum.

    dv/dxi = -H^{-1} d(b + (1/kappa) grad zeta)/dxi at fixed v*. The control
    enters b linearly; the q-derivative of the contact terms is evaluated by
    central differences of phi(q), J(q) on the frozen contact pair set.
    """
    inv_k = 1.0 / prob.kappa
    _, Hz = barrier_grad_hess(prob, v_star)
    H = prob.Q + inv_k * Hz
    trQ = float(np.trace(prob.Q))

    # db/du = -[diag(K_r); 0]
    S = np.zeros((prob.n_q, prob.n_q_r))
    S[: prob.n_q_r, :] = np.diag(model.joint_stiffness)
    dv_du = _solve_spd(H, S, trQ)

    eps = params.fd_step
    n = prob.n_q
    q = np.asarray(q, dtype=float)
    steps = eps * np.eye(n)
    Qbatch = np.vstack([q + steps, q - steps])  # rows: +e_0..+e_n, -e_0..-e_n

    dr_dq = np.zeros((n, n))
    if prob.contacts:
        gz = _grad_zeta_batch(
            model, Qbatch, params, [c.pair_id for c in prob.contacts], prob.mu, v_star
        )
        dr_dq += ((gz[:n] - gz[n:]).T / (2.0 * eps)) * inv_k
    if model.gravity_active:
        for j in range(n):
            tp = model.gravity_torque(Qbatch[j])
            tm = model.gravity_torque(Qbatch[n + j])
            dtau = (tp - tm) / (2.0 * eps)
            dr_dq[:, j] += -dtau  # b = -[K_r u + tau_r; tau_o]
    dv_dq = _solve_spd(H, -dr_dq, trQ)
    return dv_dq, dv_du


# ----------------------------------------------------------------------
# full step
# ----------------------------------------------------------------------
def step_dynamics(
    model: SystemModel,
    q: np.ndarray,
    u: np.ndarray,
    params: StepParams,
    contacts: list[ContactInfo] | None = None,
    with_gradients: bool = True,
    v0: np.ndarray | None = None,
) -> SmoothStepResult:
    """One smoothed dynamics step: q_next = q + h v*, with duals and gradients."""
    prob = assemble(model, q, u, params, contacts=contacts)
    sol = barrier_solve(prob, v0=v0)
    lam = extract_duals(prob, sol.v)
    gz, _ = barrier_grad_hess(prob, sol.v)
    kkt = float(np.linalg.norm(prob.Q @ sol.v + prob.b + gz / prob.kappa, ord=np.inf))

    n_q = model.n_q
    if with_gradients:
        dv_dq, dv_du = smooth_gradients(model, q, u, prob, sol.v, params)
        f_x = np.eye(n_q) + params.h * dv_dq
        f_u = params.h * dv_du
    else:
        f_x = np.empty((0, 0))
        f_u = np.empty((0, 0))
    return SmoothStepResult(
        v_star=sol.v,
        lambda_star=lam,
        q_next=np.asarray(q, float) + params.h * sol.v,
        f_x=f_x,
        f_u=f_u,
        newton_iters=sol.newton_iters,
        kkt_residual=kkt,
        contacts=prob.contacts,
        problem=prob,
    )


def lambda_to_world(contact: ContactInfo, lam_i: np.ndarray) -> np.ndarray:
    """Contact-frame force (n, t1, t2) -> world force on the non-object body."""
    frame_order = np.array([lam_i[1], lam_i[2], lam_i[0]])  # (t1, t2, n)
    return contact.R_C @ frame_order


def step_diagnostics(result: SmoothStepResult) -> dict:
    """JSON-serializable dump of one dynamics step."""
    prob = result.problem
    return {
        "Q": prob.Q.tolist(),
        "b": prob.b.tolist(),
        "h": prob.h,
        "kappa": prob.kappa,
        "contacts": [
            {
                "pair": list(c.pair_id),
                "phi": c.phi,
                "mu": c.mu,
                "normal": c.normal.tolist(),
            }
            for c in prob.contacts
        ],
        "v_star": result.v_star.tolist(),
        "lambda_star": result.lambda_star.tolist(),
        "newton_iters": result.newton_iters,
        "kkt_residual": result.kkt_residual,
    }


def dump_step_json(result: SmoothStepResult, path: str) -> None:
    with open(path, "w") as f:
        json.dump(step_diagnostics(result), f, indent=2)
