"""Experiment drivers: closed-loop runs and the four study batches.

Two loop types:

* the high-level loop rolls the MPC directly on the smoothed contact
  dynamics (one MPC step = one plan step h); used for the gait, kappa-sweep
  and robustness studies, which probe the reference generator itself;
* the full loop runs MPC + low-level controller + PD against the
  second-order penalty-contact verification simulator at the configured
  rates; used for the controller comparison.

In the kappa sweep only the planner's dynamics change; the plant stays at
the scenario's nominal kappa, mirroring a smoothing study on a fixed plant.
"""

from __future__ import annotations

import json
import os
import time

import numpy as np

from . import cqdc
from .ddp import ReferenceGenerator, interpolate_references
from .execsim import PdGains, VerificationSim, pd_torque
from .metrics import compute_metrics
from .runlog import RunLog
from .scenarios import Scenario, default_free_scenario, default_rotz_scenario
from .tracking import ContactController, Measurement

CONTROLLER_KINDS = ("ours", "open_loop", "ff_torque", "ff_pos")


def _state_columns(model, nominal: bool) -> list[str]:
    cols = ["t"]
    cols += [f"qr{i}" for i in range(model.n_q_r)]
    cols += [f"qo{i}" for i in range(model.n_q_o)]
    cols += [f"qdr{i}" for i in range(model.n_q_r)]
    cols += [f"qdo{i}" for i in range(model.n_q_o)]
    if nominal:
        cols += [f"qd_nom{i}" for i in range(model.n_q_r)]
    cols.append("yaw_ref")
    return cols


def _yaw_index(model) -> int:
    return 0 if model.object_joint.kind == "hinge" else 2


# ----------------------------------------------------------------------
# high-level loop (plant = smoothed contact dynamics)
# ----------------------------------------------------------------------
def run_highlevel(
    scn: Scenario,
    n_steps: int,
    kappa_ddp: float | None = None,
    disturb_step: int | None = None,
    disturb_yaw: float = 0.0,
    stop_when=None,
) -> RunLog:
    """Receding-horizon rollout on the CQDC plant; one MPC step per h.

    stop_when(step_index, q) may truncate the run early (used by batch
    studies once their assessment window is complete).
    """
    model = scn.model()
    gen = ReferenceGenerator(model, scn.ocp_config(kappa_ddp), scn.cost_template(),
                             scn.step_params(kappa_ddp))
    plant_params = scn.step_params()  # plant stays at scenario kappa
    yaw_idx = _yaw_index(model)
    n_r = model.n_q_r

    cfg = dict(scn.to_dict(), experiment_kind="highlevel", n_steps=n_steps,
               kappa_ddp=kappa_ddp or scn.kappa, disturb_step=disturb_step,
               disturb_yaw=disturb_yaw)
    log = RunLog(config=cfg, seed=scn.seed)
    log.state_columns = _state_columns(model, nominal=False)
    log.controller_columns = ["t", "held", "n_contacts", "gain_cond"]

    q = scn.q0.copy()
    yaw0 = q[n_r + yaw_idx]
    t_wall0 = time.perf_counter()
    mpc_solves = 0
    for i in range(n_steps):
        t = i * scn.h
        if disturb_step is not None and i == disturb_step:
            q = q.copy()
            q[n_r + yaw_idx] += disturb_yaw
        refs = scn.object_ref_knots(q[n_r:], t, yaw0)
        traj = gen.mpc_step(q, refs, t_now=t)
        mpc_solves += 1
        res = cqdc.step_dynamics(model, q, traj.U[0], plant_params, with_gradients=False)

        yaw_ref = yaw0 + scn.omega_ref * t
        v = res.v_star
        row = [t, *q[:n_r], *q[n_r:], *v[:n_r], *v[n_r:], yaw_ref]
        log.add_state(row)
        for j, c in enumerate(res.contacts):
            slip_sq = float(np.sum((c.jt @ v) ** 2))
            fw = cqdc.lambda_to_world(c, res.lambda_star[j])
            log.add_contact([t, c.name, c.phi, slip_sq, *fw, *fw])
        log.add_mpc([t, traj.ddp_iters, traj.cost_trace[-1], traj.converged,
                     float(np.linalg.norm(traj.U[0]))])
        q = res.q_next
        if stop_when is not None and stop_when(i, q):
            break

    log.counters = {"mpc_invocations": mpc_solves, "plan_steps": n_steps}
    log.timings = {"wall_s": time.perf_counter() - t_wall0}
    return log


# ----------------------------------------------------------------------
# full closed loop (plant = verification simulator)
# ----------------------------------------------------------------------
def run_closed_loop(scn: Scenario, controller_kind: str, duration: float | None = None) -> RunLog:
    if controller_kind not in CONTROLLER_KINDS:
        raise ValueError(f"controller_kind must be one of {CONTROLLER_KINDS}")
    scn.validate()
    model = scn.model()
    duration = duration if duration is not None else scn.duration
    n_r = model.n_q_r
    yaw_idx = _yaw_index(model)

    sim = VerificationSim(scn.sim_model(), scn.compliant_params(), scn.sim_config())
    sim.reset(scn.q0)
    gen = ReferenceGenerator(model, scn.ocp_config(), scn.cost_template(), scn.step_params())
    gains = scn.pd_gains()
    ctrl = ContactController(
        model, scn.compliant_params(False), scn.k_p, scn.k_d,
        dt=1.0 / scn.ctrl_hz, object_mode=scn.object_mode,
        weights=scn.tracking_weights(),
        force_lowpass_tau=scn.force_filter_tau,
    )
    ctrl.reset(scn.q0[:n_r])

    dt = sim.cfg.dt
    n_steps = int(round(duration / dt))
    sim_per_ctrl = int(round(scn.sim_hz / scn.ctrl_hz))
    sim_per_mpc = int(round(scn.sim_hz / scn.mpc_hz))

    cfg = dict(scn.to_dict(), experiment_kind="closed_loop",
               controller_kind=controller_kind, duration=duration)
    log = RunLog(config=cfg, seed=scn.seed)
    log.state_columns = _state_columns(model, nominal=True)
    log.controller_columns = ["t", "held", "n_contacts", "gain_cond"] + [
        f"u0_{i}" for i in range(n_r)
    ]

    traj = None
    q_d = scn.q0[:n_r].copy()
    q_d_tick = q_d.copy()
    qd_d = np.zeros(n_r)
    F_ff: dict = {}
    yaw0 = scn.q0[n_r + yaw_idx]
    counters = {"sim_steps": 0, "ctrl_invocations": 0, "mpc_invocations": 0,
                "sim_per_ctrl": sim_per_ctrl, "sim_per_mpc": sim_per_mpc}
    t_wall0 = time.perf_counter()
    mpc_wall = 0.0

    for k in range(n_steps):
        t = k * dt
        s = sim.state
        if k % sim_per_mpc == 0:
            refs = scn.object_ref_knots(s.q[n_r:], t, yaw0)
            tw = time.perf_counter()
            traj = gen.mpc_step(s.q.copy(), refs, t_now=t)
            mpc_wall += time.perf_counter() - tw
            counters["mpc_invocations"] += 1
            log.add_mpc([t, traj.ddp_iters, traj.cost_trace[-1], traj.converged,
                         float(np.linalg.norm(traj.U[0]))])

        if k % sim_per_ctrl == 0:
            counters["ctrl_invocations"] += 1
            held = False
            gain_cond = 0.0
            u0 = np.zeros(n_r)
            q_d_tick = q_d.copy()
            if controller_kind == "ours":
                sensed = sim.averaged_forces()
                meas = Measurement(s.q.copy(), s.qdot.copy(), sensed)
                q_d, qd_d, F_ff, info = ctrl.step(meas, traj, t)
                held = bool(info.get("held", False))
                gain_cond = float(info.get("gain_condition", 0.0))
                u0 = np.asarray(info.get("u0", u0))
            else:
                q_d, qd_d, forces, _ = interpolate_references(traj, t, n_r)
                if controller_kind == "open_loop":
                    F_ff = {}
                elif controller_kind == "ff_torque":
                    F_ff = forces
                else:  # ff_pos: feed-forward torque mapped into the position target
                    F_ff = {}
                    tau_ff = np.zeros(n_r)
                    by_pair = {c.pair_id: c for c in s.contacts}
                    poses = model.fk(s.q)
                    for pid, fw in forces.items():
                        c = by_pair.get(pid)
                        if c is None:
                            continue
                        Jw = model.point_jacobian(
                            s.q, model.geometry(pid[0]).frame, c.witness_robot, poses
                        )
                        tau_ff += Jw[:, :n_r].T @ fw
                    q_d = q_d + tau_ff / scn.k_p

            # log at the control rate
            yaw_ref = yaw0 + scn.omega_ref * t
            row = [t, *s.q[:n_r], *s.q[n_r:], *s.qdot[:n_r], *s.qdot[n_r:], *q_d, yaw_ref]
            log.add_state(row)
            ref_forces = {}
            if traj is not None:
                _, _, ref_forces, _ = interpolate_references(traj, t, n_r)
            for j, c in enumerate(s.contacts):
                slip_sq = float(np.sum((c.jt @ s.qdot) ** 2))
                fm = s.forces_world[j] if j < len(s.forces_world) else np.zeros(3)
                fr = ref_forces.get(c.pair_id, np.zeros(3))
                log.add_contact([t, c.name, c.phi, slip_sq, *fm, *fr])
            log.add_controller([t, held, len(s.contacts), gain_cond, *u0])

        # servo-rate command shaping: ramp the nominal position between
        # control ticks so the ZOH staircase does not ring the contact mode
        frac = ((k % sim_per_ctrl) + 1) / sim_per_ctrl
        q_d_servo = q_d_tick + frac * (q_d - q_d_tick)
        tau = pd_torque(model, s.q, s.qdot, q_d_servo, qd_d, F_ff, gains, contacts=s.contacts)
        tau_obj = None
        if scn.disturbance is not None:
            t0d = float(scn.disturbance.get("t", 0.0))
            dur = float(scn.disturbance.get("duration", dt))
            if t0d <= t < t0d + dur:
                tau_obj = np.asarray(scn.disturbance["torque"], dtype=float)
        sim.step(tau, tau_obj)
        counters["sim_steps"] += 1

    log.counters = counters
    log.timings = {
        "wall_s": time.perf_counter() - t_wall0,
        "mpc_wall_s": mpc_wall,
        "mpc_wall_per_solve_s": mpc_wall / max(counters["mpc_invocations"], 1),
    }
    return log


# ----------------------------------------------------------------------
# experiment batches
# ----------------------------------------------------------------------
def experiment_kappa_sweep(out_root: str, scn: Scenario | None = None,
                           kappas=(100.0, 500.0, 1000.0, 10000.0), n_steps: int = 50):
    scn = scn or default_rotz_scenario()
    report = {"kappas": list(kappas), "runs": []}
    for kap in kappas:
        log = run_highlevel(scn, n_steps, kappa_ddp=kap)
        run_dir = os.path.join(out_root, f"kappa_{int(kap)}")
        log.write(run_dir)
        m = compute_metrics(run_dir)
        m.to_json(os.path.join(run_dir, "metrics.json"))
        report["runs"].append(
            {"kappa": kap, "dir": run_dir, "rotation_speed": m.avg_rotation_speed}
        )
    with open(os.path.join(out_root, "kappa_sweep.json"), "w") as f:
        json.dump(report, f, indent=2, sort_keys=True)
    return report


def experiment_gait(out_root: str, scn: Scenario | None = None, n_steps: int = 200):
    scn = scn or default_rotz_scenario()
    log = run_highlevel(scn, n_steps)
    run_dir = os.path.join(out_root, "gait")
    log.write(run_dir)
    m = compute_metrics(run_dir)
    m.to_json(os.path.join(run_dir, "metrics.json"))
    return {"dir": run_dir, "rotation_speed": m.avg_rotation_speed,
            "contact_breaks": m.contact_breaks}


def experiment_controller_compare(out_root: str, scn: Scenario | None = None,
                                  duration: float | None = None):
    scn = scn or default_rotz_scenario()
    rows = []
    failures = {}
    for kind in CONTROLLER_KINDS:
        try:
            log = run_closed_loop(scn, kind, duration)
        except Exception as e:  # record and continue the batch
            failures[kind] = repr(e)
            continue
        run_dir = os.path.join(out_root, kind)
        log.write(run_dir)
        m = compute_metrics(run_dir)
        m.to_json(os.path.join(run_dir, "metrics.json"))
        rows.append(
            {
                "method": kind,
                "avg_slippage": m.avg_slippage,
                "avg_rotation_speed": m.avg_rotation_speed,
                "avg_joint_speed": m.avg_joint_speed,
            }
        )
    csv_path = os.path.join(out_root, "controller_compare.csv")
    with open(csv_path, "w") as f:
        f.write("method,avg_slippage,avg_rotation_speed,avg_joint_speed\n")
        for r in rows:
            f.write(
                f"{r['method']},{r['avg_slippage']!r},{r['avg_rotation_speed']!r},"
                f"{r['avg_joint_speed']!r}\n"
            )
    if failures:
        with open(os.path.join(out_root, "failures.json"), "w") as f:
            json.dump(failures, f, indent=2, sort_keys=True)
    return {"rows": rows, "csv": csv_path, "failures": failures}


def _robustness_one(args):
    """One seeded disturbance run; module-level for the worker pool."""
    scn_dict, mag, seed, warmup, window, err_window, recover_tol = args
    scn = Scenario.from_dict(scn_dict)
    model = scn.model()
    n_r = model.n_q_r
    yaw_idx = _yaw_index(model)
    rng = np.random.default_rng((int(mag * 1000) * 100003 + seed) % (2**32))
    dyaw = float(rng.normal(0.0, mag))
    n_steps = warmup + window

    yaw0 = scn.q0[n_r + yaw_idx]
    state = {"recovered_at": None}

    def stop_when(i, q):
        if i < warmup:
            return False
        err = abs(q[n_r + yaw_idx] - (yaw0 + scn.omega_ref * (i + 1) * scn.h))
        if state["recovered_at"] is None and err < recover_tol:
            state["recovered_at"] = i - warmup
        # keep going until the error window is sampled and recovery decided
        return state["recovered_at"] is not None and (i - warmup) >= err_window

    try:
        log = run_highlevel(scn, n_steps, disturb_step=warmup, disturb_yaw=dyaw,
                            stop_when=stop_when)
    except Exception as e:  # record and let the batch continue
        return {"magnitude": mag, "seed": seed, "error": repr(e)}
    yaw_col = 1 + n_r + yaw_idx
    ref_col = len(log.state_columns) - 1
    win = log.states[warmup : warmup + err_window]
    err = [abs(float(r[yaw_col]) - float(r[ref_col])) for r in win]
    return {
        "magnitude": mag, "seed": seed, "disturb_yaw": dyaw,
        "mean_err": float(np.mean(err)),
        "recovered": state["recovered_at"] is not None,
        "recovered_at": state["recovered_at"],
    }


def experiment_robustness(out_root: str, scn: Scenario | None = None,
                          magnitudes=(0.1, 0.2, 0.4, 0.8), n_seeds: int = 50,
                          warmup_steps: int = 10, window_steps: int = 100,
                          err_window: int = 40, recover_tol: float = 0.05,
                          workers: int | None = None):
    """Yaw-perturbation batches on the planar-free scenario (global anchoring).

    A disturbance is a one-time state perturbation of the object yaw, drawn
    per seed from N(0, magnitude). Recovery means the yaw tracking error
    falls below recover_tol within window_steps after the disturbance; the
    mean tracking error is taken over the first err_window post-disturbance
    steps. Runs are independent and fan out over a process pool; results
    are aggregated in deterministic (magnitude, seed) order.
    """
    import multiprocessing as mp

    scn = scn or default_free_scenario()
    scn.anchor = "global"
    scn.validate()
    jobs = [
        (scn.to_dict(), mag, seed, warmup_steps, window_steps, err_window, recover_tol)
        for mag in magnitudes
        for seed in range(n_seeds)
    ]
    workers = workers or min(mp.cpu_count(), 8)
    if workers > 1:
        with mp.get_context("spawn").Pool(workers) as pool:
            results = pool.map(_robustness_one, jobs, chunksize=1)
    else:
        results = [_robustness_one(j) for j in jobs]
    per_run = [r for r in results if "error" not in r]
    failures = {f"mag{r['magnitude']}_seed{r['seed']}": r["error"]
                for r in results if "error" in r}

    summary = {"magnitudes": list(magnitudes), "n_seeds": n_seeds, "rows": []}
    for mag in magnitudes:
        rows = [r for r in per_run if r["magnitude"] == mag]
        errs = [r["mean_err"] for r in rows]
        recs = [r["recovered"] for r in rows]
        summary["rows"].append(
            {
                "magnitude": mag,
                "mean_err": float(np.mean(errs)) if errs else float("nan"),
                "std_err": float(np.std(errs)) if errs else float("nan"),
                "recovery_rate": float(np.mean(recs)) if recs else 0.0,
            }
        )
    os.makedirs(out_root, exist_ok=True)
    with open(os.path.join(out_root, "robustness.json"), "w") as f:
        json.dump(summary, f, indent=2, sort_keys=True)
    with open(os.path.join(out_root, "robustness_runs.csv"), "w") as f:
        f.write("magnitude,seed,disturb_yaw,mean_err,recovered,recovered_at\n")
        for r in per_run:
            f.write(
                f"{r['magnitude']!r},{r['seed']},{r['disturb_yaw']!r},"
                f"{r['mean_err']!r},{int(r['recovered'])},{r['recovered_at']}\n"
            )
    if failures:
        with open(os.path.join(out_root, "failures.json"), "w") as f:
            json.dump(failures, f, indent=2, sort_keys=True)
    return summary


EXPERIMENTS = {
    "kappa_sweep": experiment_kappa_sweep,
    "gait": experiment_gait,
    "controller_compare": experiment_controller_compare,
    "robustness": experiment_robustness,
}
