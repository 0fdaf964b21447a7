"""Metrics computed from archived run logs (pure functions of the files).

The slippage metric gates contact samples on proximity (phi below a gate,
default 1 mm) and averages sigmoid(c phi) * |J_t qdot|^2 over the gated
(timestep, contact) samples; c is negative so near/penetrating contacts
weigh most. Contact events are intervals with phi < 3 mm.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, field

from .runlog import read_csv, read_manifest, read_timings

SLIPPAGE_SIGMOID_SCALE = -2000.0  # 1/m
SLIPPAGE_PHI_GATE = 1e-3  # m
CONTACT_EVENT_PHI = 3e-3  # m


def _sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    ex = math.exp(x)
    return ex / (1.0 + ex)


@dataclass
class MetricsReport:
    run_dir: str
    config_hash: str
    avg_slippage: float
    slippage_samples: int
    slippage_empty: bool
    avg_rotation_speed: float
    avg_joint_speed: float
    tracking_error_joint: float
    tracking_error_object: float
    contact_events: dict[str, list[tuple[float, float]]]
    contact_breaks: dict[str, int]
    wall_clock: dict = field(default_factory=dict)

    def to_json(self, path: str) -> None:
        with open(path, "w") as f:
            json.dump(asdict(self), f, indent=2, sort_keys=True)


def slippage_metric(rows: list[list[str]], c: float = SLIPPAGE_SIGMOID_SCALE,
                    phi_gate: float = SLIPPAGE_PHI_GATE) -> tuple[float, int, bool]:
    """(mean, n_samples, empty_flag) over gated contact samples.

    rows are contacts.csv data rows: [t, pair, phi, slip_sq, ...].
    """
    if c >= 0:
        raise ValueError("slippage sigmoid scale must be negative")
    if phi_gate <= 0:
        raise ValueError("phi gate must be positive")
    total = 0.0
    n = 0
    for row in rows:
        phi = float(row[2])
        if phi < phi_gate:
            total += _sigmoid(c * phi) * float(row[3])
            n += 1
    if n == 0:
        return 0.0, 0, True
    return total / n, n, False


def _yaw_column(columns: list[str]) -> int:
    # hinge: single object DOF "qo0"; planar free: yaw is "qo2"
    if "qo2" in columns:
        return columns.index("qo2")
    return columns.index("qo0")


def contact_event_intervals(rows: list[list[str]], phi_event: float = CONTACT_EVENT_PHI):
    """Per pair: shaded intervals with phi < phi_event, plus break counts.

    A break is an upward crossing of the event threshold (contact ends).
    """
    by_pair: dict[str, list[tuple[float, bool]]] = {}
    for row in rows:
        by_pair.setdefault(row[1], []).append((float(row[0]), float(row[2]) < phi_event))
    intervals: dict[str, list[tuple[float, float]]] = {}
    breaks: dict[str, int] = {}
    for pair, samples in by_pair.items():
        samples.sort(key=lambda s: s[0])
        segs = []
        nb = 0
        start = None
        prev_in = False
        for t, inside in samples:
            if inside and start is None:
                start = t
            if not inside and start is not None:
                segs.append((start, t))
                start = None
            if prev_in and not inside:
                nb += 1
            prev_in = inside
        if start is not None:
            segs.append((start, samples[-1][0]))
        intervals[pair] = segs
        breaks[pair] = nb
    return intervals, breaks


def compute_metrics(run_dir: str) -> MetricsReport:
    manifest = read_manifest(run_dir)
    scols, srows = read_csv(os.path.join(run_dir, "states.csv"))
    _, crows = read_csv(os.path.join(run_dir, "contacts.csv"))

    slip, n_slip, empty = slippage_metric(crows)

    it = scols.index("t")
    iyaw = _yaw_column(scols)
    t0, t1 = float(srows[0][it]), float(srows[-1][it])
    yaw0, yaw1 = float(srows[0][iyaw]), float(srows[-1][iyaw])
    rot_speed = (yaw1 - yaw0) / (t1 - t0) if t1 > t0 else 0.0

    qdr_idx = [i for i, c in enumerate(scols) if c.startswith("qdr")]
    qr_idx = [i for i, c in enumerate(scols) if c.startswith("qr")]
    qd_idx = [i for i, c in enumerate(scols) if c.startswith("qd_nom")]
    iref = scols.index("yaw_ref") if "yaw_ref" in scols else None

    joint_speed = 0.0
    err_joint = 0.0
    err_obj = 0.0
    for row in srows:
        joint_speed += math.sqrt(sum(float(row[i]) ** 2 for i in qdr_idx))
        if qd_idx:
            err_joint += math.sqrt(
                sum((float(row[i]) - float(row[j])) ** 2 for i, j in zip(qr_idx, qd_idx))
            )
        if iref is not None:
            err_obj += abs(float(row[iyaw]) - float(row[iref]))
    n_rows = max(len(srows), 1)
    intervals, breaks = contact_event_intervals(crows)

    return MetricsReport(
        run_dir=run_dir,
        config_hash=manifest["config_hash"],
        avg_slippage=slip,
        slippage_samples=n_slip,
        slippage_empty=empty,
        avg_rotation_speed=rot_speed,
        avg_joint_speed=joint_speed / n_rows,
        tracking_error_joint=err_joint / n_rows if qd_idx else 0.0,
        tracking_error_object=err_obj / n_rows if iref is not None else 0.0,
        contact_events=intervals,
        contact_breaks=breaks,
        wall_clock=read_timings(run_dir),
    )
