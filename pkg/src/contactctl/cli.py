"""Command-line surface.

Subcommands:
    run <scenario>             closed-loop run against the verification sim
    experiment <name>          kappa_sweep | gait | controller_compare | robustness
    metrics <runlog_dir>       recompute metrics from an archived run
    dump-model <scenario>      write the scenario's model description JSON

Output root defaults to ./runs, overridable with CONTACTCTL_OUT or --out.
Exit codes: 0 ok, 1 run failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .experiments import CONTROLLER_KINDS, EXPERIMENTS, run_closed_loop
from .metrics import compute_metrics
from .model import ModelError
from .scenarios import ScenarioError, load_scenario

EXIT_OK = 0
EXIT_RUN_FAILURE = 1
EXIT_CONFIG_ERROR = 2


def _out_root(args) -> str:
    return args.out or os.environ.get("CONTACTCTL_OUT", "runs")


def _apply_overrides(scn, overrides: list[str]):
    for ov in overrides:
        if "=" not in ov:
            raise ScenarioError(f"override must be key=value, got {ov!r}")
        key, val = ov.split("=", 1)
        if not hasattr(scn, key):
            raise ScenarioError(f"unknown scenario field {key!r}")
        cur = getattr(scn, key)
        try:
            setattr(scn, key, json.loads(val))
        except json.JSONDecodeError:
            setattr(scn, key, type(cur)(val) if cur is not None else val)
    scn.validate()
    return scn


def cmd_run(args) -> int:
    scn = load_scenario(args.scenario)
    _apply_overrides(scn, args.override)
    log = run_closed_loop(scn, args.controller, args.duration)
    run_dir = os.path.join(_out_root(args), f"{scn.name}_{args.controller}")
    log.write(run_dir)
    report = compute_metrics(run_dir)
    report.to_json(os.path.join(run_dir, "metrics.json"))
    print(f"run complete: {run_dir}")
    print(f"  rotation speed {report.avg_rotation_speed:+.4f} rad/s, "
          f"slippage {report.avg_slippage:.3e}")
    return EXIT_OK


def cmd_experiment(args) -> int:
    if args.name not in EXPERIMENTS:
        print(f"unknown experiment {args.name!r}; choices: {sorted(EXPERIMENTS)}",
              file=sys.stderr)
        return EXIT_CONFIG_ERROR
    scn = load_scenario(args.scenario) if args.scenario else None
    if scn is not None:
        _apply_overrides(scn, args.override)
    elif args.override:
        base = "planar-free" if args.name == "robustness" else "planar-rotz"
        scn = _apply_overrides(load_scenario(base), args.override)
    out = os.path.join(_out_root(args), args.name)
    kwargs = {}
    if args.quick:
        kwargs = {
            "kappa_sweep": {"n_steps": 10},
            "gait": {"n_steps": 30},
            "controller_compare": {"duration": 1.0},
            "robustness": {"n_seeds": 3, "window_steps": 30},
        }[args.name]
    result = EXPERIMENTS[args.name](out, scn, **kwargs)
    print(json.dumps(result, indent=2, sort_keys=True, default=str))
    return EXIT_OK


def cmd_metrics(args) -> int:
    report = compute_metrics(args.runlog_dir)
    out_path = os.path.join(args.runlog_dir, "metrics.json")
    report.to_json(out_path)
    print(json.dumps(json.load(open(out_path)), indent=2, sort_keys=True))
    return EXIT_OK


def cmd_dump_model(args) -> int:
    scn = load_scenario(args.scenario)
    model = scn.model()
    path = args.output or f"{scn.name}_model.json"
    model.to_json(path)
    print(f"model written: {path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="contactctl", description=__doc__,
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="command", required=True)

    pr = sub.add_parser("run", help="closed-loop run against the verification simulator")
    pr.add_argument("scenario", help="scenario JSON path or builtin name")
    pr.add_argument("--controller", default="ours", choices=CONTROLLER_KINDS)
    pr.add_argument("--duration", type=float, default=None)
    pr.add_argument("--override", action="append", default=[], metavar="k=v")
    pr.add_argument("--out", default=None)
    pr.set_defaults(func=cmd_run)

    pe = sub.add_parser("experiment", help="run a study batch")
    pe.add_argument("name", help="|".join(sorted(EXPERIMENTS)))
    pe.add_argument("--scenario", default=None)
    pe.add_argument("--override", action="append", default=[], metavar="k=v")
    pe.add_argument("--out", default=None)
    pe.add_argument("--quick", action="store_true", help="reduced sizes for smoke runs")
    pe.set_defaults(func=cmd_experiment)

    pm = sub.add_parser("metrics", help="recompute metrics from an archived run")
    pm.add_argument("runlog_dir")
    pm.set_defaults(func=cmd_metrics)

    pd = sub.add_parser("dump-model", help="write the model description JSON")
    pd.add_argument("scenario")
    pd.add_argument("-o", "--output", default=None)
    pd.set_defaults(func=cmd_dump_model)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ScenarioError, ModelError, FileNotFoundError, json.JSONDecodeError) as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    except Exception as e:  # noqa: BLE001 - CLI boundary
        print(f"run failure: {e}", file=sys.stderr)
        return EXIT_RUN_FAILURE


if __name__ == "__main__":
    sys.exit(main())
