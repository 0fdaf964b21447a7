"""Run logging: deterministic CSV signal groups plus a JSON manifest.

Numeric cells are written with repr() round-tripping, so a rerun with the
same config and seed produces byte-identical CSVs and manifest. Wall-clock
measurements live in a separate timings.json that is excluded from the
determinism guarantee.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
from dataclasses import dataclass, field

SCHEMA_VERSION = 1

STATE_COLUMNS_FIXED = ["t"]
CONTACT_COLUMNS = ["t", "pair", "phi", "slip_sq", "fm_x", "fm_y", "fm_z", "fr_x", "fr_y", "fr_z"]
MPC_COLUMNS = ["t", "iters", "cost", "converged", "u_norm"]
CONTROLLER_COLUMNS_FIXED = ["t", "held", "n_contacts", "gain_cond"]


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def _fmt(x) -> str:
    if isinstance(x, bool):
        return "1" if x else "0"
    if isinstance(x, (int,)):
        return str(x)
    if isinstance(x, str):
        return x
    return repr(float(x))


@dataclass
class RunLog:
    config: dict
    seed: int
    state_columns: list[str] = field(default_factory=list)
    controller_columns: list[str] = field(default_factory=list)
    states: list[list] = field(default_factory=list)
    contacts: list[list] = field(default_factory=list)
    mpc: list[list] = field(default_factory=list)
    controller: list[list] = field(default_factory=list)
    counters: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)

    def add_state(self, row: list) -> None:
        self.states.append(row)

    def add_contact(self, row: list) -> None:
        self.contacts.append(row)

    def add_mpc(self, row: list) -> None:
        self.mpc.append(row)

    def add_controller(self, row: list) -> None:
        self.controller.append(row)

    # ------------------------------------------------------------------
    def manifest(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "config": self.config,
            "config_hash": config_hash(self.config),
            "seed": self.seed,
            "counters": self.counters,
            "state_columns": self.state_columns,
            "controller_columns": self.controller_columns,
        }

    def write(self, out_dir: str) -> None:
        os.makedirs(out_dir, exist_ok=True)
        self._write_csv(os.path.join(out_dir, "states.csv"), self.state_columns, self.states)
        self._write_csv(os.path.join(out_dir, "contacts.csv"), CONTACT_COLUMNS, self.contacts)
        self._write_csv(os.path.join(out_dir, "mpc.csv"), MPC_COLUMNS, self.mpc)
        self._write_csv(
            os.path.join(out_dir, "controller.csv"), self.controller_columns, self.controller
        )
        with open(os.path.join(out_dir, "manifest.json"), "w") as f:
            json.dump(self.manifest(), f, indent=2, sort_keys=True)
        with open(os.path.join(out_dir, "timings.json"), "w") as f:
            json.dump(self.timings, f, indent=2, sort_keys=True)

    @staticmethod
    def _write_csv(path: str, columns: list[str], rows: list[list]) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(columns)
            for row in rows:
                w.writerow([_fmt(x) for x in row])


def read_csv(path: str) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as f:
        r = csv.reader(f)
        rows = list(r)
    if not rows:
        raise ValueError(f"empty CSV: {path}")
    return rows[0], rows[1:]


def read_manifest(run_dir: str) -> dict:
    with open(os.path.join(run_dir, "manifest.json")) as f:
        return json.load(f)


def read_timings(run_dir: str) -> dict:
    path = os.path.join(run_dir, "timings.json")
    if not os.path.exists(path):
        return {}
    with open(path) as f:
        return json.load(f)
