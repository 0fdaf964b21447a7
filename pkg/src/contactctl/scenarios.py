"""Scenario definitions: builtin desk-scale models and run configuration.

Two builtin systems mirror the structure of the target tasks at reduced
DOF count:

* ``planar_rotz``: three 2-link planar fingers around a disk on a damped
  vertical hinge (6 robot DOF + 1 object DOF);
* ``planar_free``: the same fingers caging a planar free disk
  (6 robot DOF + 3 object DOF), which exercises the object-compliance
  coupling of the low-level model.

All tuning constants (weights, kappa, rates, gains) live in scenario JSON,
not in library code. ``load_scenario`` accepts a path or a builtin name.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .compliant import CompliantParams
from .cqdc import StepParams
from .ddp import CostConfig, DdpParams, OcpConfig
from .execsim import PdGains, SimConfig
from .geometry import Sphere
from .model import ChainSpec, GeometrySpec, JointSpec, ObjectJointSpec, SystemModel
from .tracking import TrackingWeights


class ScenarioError(ValueError):
    pass


# ----------------------------------------------------------------------
# builtin models
# ----------------------------------------------------------------------
def _three_fingers(base_radius: float, l1: float, l2: float, tip_radius: float):
    chains = []
    geoms = []
    for k, deg in enumerate((90.0, 210.0, 330.0)):
        th = math.radians(deg)
        base = (base_radius * math.cos(th), base_radius * math.sin(th), 0.0)
        chains.append(
            ChainSpec(
                f"f{k}",
                (
                    JointSpec(
                        f"f{k}_j0", "revolute", (0, 0, 1),
                        origin_xyz=base, origin_rpy=(0, 0, th + math.pi),
                        limits=(-2.5, 2.5),
                    ),
                    JointSpec(
                        f"f{k}_j1", "revolute", (0, 0, 1),
                        origin_xyz=(l1, 0, 0), limits=(-2.8, 2.8),
                    ),
                ),
            )
        )
        geoms.append(
            GeometrySpec(f"tip{k}", f"f{k}_j1", Sphere(tip_radius), offset_xyz=(l2, 0, 0))
        )
    return chains, geoms


def build_planar_rotz_model() -> SystemModel:
    """Three 2-link fingers around a 6 cm disk on a damped vertical hinge."""
    chains, geoms = _three_fingers(0.17, 0.07, 0.07, 0.015)
    geoms.append(GeometrySpec("disk", "object", Sphere(0.06)))
    return SystemModel(
        chains,
        ObjectJointSpec("hinge", (0, 0, 1), damping=0.25),
        np.array([[8e-3]]),
        np.full(6, 10.0),
        geoms,
        gravity=(0.0, 0.0, 0.0),
        friction_default=0.7,
    )


def build_planar_rotz_sim_model() -> SystemModel:
    """Verification-plant twin of planar_rotz with a slightly larger disk.

    The +1.5 mm radius bias is a deliberate geometry error between the
    planning model and the executed plant: blindly executed references press
    deep into the real surface and rub, which the force-feedback controller
    absorbs by backing off to the planned interaction forces.
    """
    chains, geoms = _three_fingers(0.17, 0.07, 0.07, 0.015)
    geoms.append(GeometrySpec("disk", "object", Sphere(0.0615)))
    return SystemModel(
        chains,
        ObjectJointSpec("hinge", (0, 0, 1), damping=0.25),
        np.array([[8e-3]]),
        np.full(6, 10.0),
        geoms,
        gravity=(0.0, 0.0, 0.0),
        friction_default=0.7,
    )


def build_planar_free_model() -> SystemModel:
    """Same fingers caging a planar free disk (x, y, yaw)."""
    chains, geoms = _three_fingers(0.17, 0.07, 0.07, 0.015)
    geoms.append(GeometrySpec("disk", "object", Sphere(0.06)))
    return SystemModel(
        chains,
        ObjectJointSpec("planar_free", damping=(2.0, 2.0, 0.1)),
        np.diag([0.3, 0.3, 5.4e-4]),
        np.full(6, 10.0),
        geoms,
        gravity=(0.0, 0.0, 0.0),
        friction_default=0.7,
    )


def build_planar_free_sim_model() -> SystemModel:
    """Verification-plant twin of planar_free with the same radius bias."""
    chains, geoms = _three_fingers(0.17, 0.07, 0.07, 0.015)
    geoms.append(GeometrySpec("disk", "object", Sphere(0.0596)))
    return SystemModel(
        chains,
        ObjectJointSpec("planar_free", damping=(2.0, 2.0, 0.1)),
        np.diag([0.3, 0.3, 5.4e-4]),
        np.full(6, 10.0),
        geoms,
        gravity=(0.0, 0.0, 0.0),
        friction_default=0.7,
    )


BUILTIN_MODELS = {
    "planar_rotz": build_planar_rotz_model,
    "planar_rotz_sim": build_planar_rotz_sim_model,
    "planar_free": build_planar_free_model,
    "planar_free_sim": build_planar_free_sim_model,
}

# nominal bent-finger pose: tip on the base-to-center ray at radius 0.077 m
NOMINAL_FINGER = (-0.84436, 1.68851)


@dataclass
class Scenario:
    name: str
    model_ref: str  # "builtin:<name>" or a model JSON path
    q0: np.ndarray
    q_r_ref: np.ndarray
    omega_ref: float  # commanded object yaw rate (rad/s)
    sim_model_ref: str | None = None  # verification plant; defaults to model_ref
    anchor: str = "relative"  # reference ramp anchoring: relative | global
    kappa: float = 100.0
    h: float = 0.1
    horizon: int = 10
    u_bound: float = 0.05
    phi_max: float = 0.05
    w_o: list = field(default_factory=lambda: [200.0])
    w_r: float = 0.5
    w_u: float = 1e-2
    gamma_r: float = 5.0
    tail_knots: int = 3
    mpc_hz: float = 20.0
    ctrl_hz: float = 100.0
    sim_hz: float = 2000.0
    k_p: float = 10.0
    k_d: float = 0.3
    sigma: float = 1e-3
    k_contact: float = 2000.0
    v_d: float = 0.1
    alpha_t: float = 0.3
    object_mode: str = "anchored"
    w_xi: float = 10.0
    w_F: float = 0.1
    w_u_low: float = 1e-3
    w_F_tangential: float = 1.0
    f_ref_min: float = 1.0
    u_sat: float = 2.0
    force_filter_tau: float = 0.0
    terminal_low: float = 5.0
    low_horizon: int = 10
    seed: int = 0
    duration: float = 10.0
    disturbance: dict | None = None
    ddp_max_iters: int = 30

    _model: SystemModel | None = None
    _sim_model: SystemModel | None = None

    @staticmethod
    def _resolve_model(ref: str) -> SystemModel:
        if ref.startswith("builtin:"):
            name = ref.split(":", 1)[1]
            if name not in BUILTIN_MODELS:
                raise ScenarioError(f"unknown builtin model {name!r}")
            return BUILTIN_MODELS[name]()
        return SystemModel.from_json(ref)

    # ------------------------------------------------------------------
    def model(self) -> SystemModel:
        if self._model is None:
            self._model = self._resolve_model(self.model_ref)
        return self._model

    def sim_model(self) -> SystemModel:
        """The plant simulated by the verification loop (may differ from
        the planning/controller model)."""
        if self._sim_model is None:
            self._sim_model = (
                self._resolve_model(self.sim_model_ref)
                if self.sim_model_ref else self.model()
            )
        return self._sim_model

    def validate(self) -> None:
        m = self.model()
        if len(self.q0) != m.n_q:
            raise ScenarioError(f"q0 needs {m.n_q} entries, got {len(self.q0)}")
        if len(self.q_r_ref) != m.n_q_r:
            raise ScenarioError(f"q_r_ref needs {m.n_q_r} entries")
        if len(self.w_o) != m.n_q_o:
            raise ScenarioError(f"w_o needs {m.n_q_o} entries")
        for hi, lo, names in (
            (self.sim_hz, self.ctrl_hz, "sim/ctrl"),
            (self.ctrl_hz, self.mpc_hz, "ctrl/mpc"),
        ):
            if abs(hi / lo - round(hi / lo)) > 1e-9:
                raise ScenarioError(f"rates must divide evenly ({names})")
        if self.anchor not in ("relative", "global"):
            raise ScenarioError("anchor must be 'relative' or 'global'")

    # ------------------------------------------------------------------
    # derived config objects
    # ------------------------------------------------------------------
    def step_params(self, kappa: float | None = None) -> StepParams:
        return StepParams(h=self.h, kappa=kappa or self.kappa, phi_max=self.phi_max)

    def ocp_config(self, kappa: float | None = None) -> OcpConfig:
        n_r = self.model().n_q_r
        return OcpConfig(
            N=self.horizon,
            h=self.h,
            u_lo=-self.u_bound * np.ones(n_r),
            u_hi=self.u_bound * np.ones(n_r),
            kappa=kappa or self.kappa,
            ddp=DdpParams(max_iters=self.ddp_max_iters),
        )

    def cost_template(self) -> CostConfig:
        m = self.model()
        return CostConfig(
            W_o=np.diag(np.asarray(self.w_o, dtype=float)),
            W_r=self.w_r * np.eye(m.n_q_r),
            W_u=self.w_u * np.eye(m.n_q_r),
            q_o_ref=np.zeros((self.horizon + 1, m.n_q_o)),
            q_r_ref=np.asarray(self.q_r_ref, dtype=float),
            gamma_r=self.gamma_r,
            tail_knots=self.tail_knots,
        )

    def compliant_params(self, dissipation: bool = False) -> CompliantParams:
        return CompliantParams(self.sigma, self.k_contact, self.v_d, self.alpha_t, dissipation)

    def pd_gains(self) -> PdGains:
        return PdGains(self.k_p, self.k_d, gravity_comp=True)

    def sim_config(self) -> SimConfig:
        return SimConfig(dt=1.0 / self.sim_hz)

    def tracking_weights(self) -> TrackingWeights:
        return TrackingWeights(
            w_xi=self.w_xi, w_F=self.w_F, w_u=self.w_u_low,
            terminal_scale=self.terminal_low, horizon=self.low_horizon,
            u_sat=self.u_sat, w_F_tangential=self.w_F_tangential,
            f_ref_min=self.f_ref_min,
        )

    def object_ref_knots(self, q_o_now: np.ndarray, t_now: float, yaw0: float) -> np.ndarray:
        """Per-knot object reference over the horizon (yaw ramp)."""
        m = self.model()
        N = self.horizon
        refs = np.zeros((N + 1, m.n_q_o))
        yaw_idx = 0 if m.object_joint.kind == "hinge" else 2
        if m.object_joint.kind == "planar_free":
            refs[:, 0] = 0.0  # hold x, y at the cage center
            refs[:, 1] = 0.0
        if self.anchor == "relative":
            base = q_o_now[yaw_idx]
        else:
            # track the commanded line, but never demand more catch-up than
            # one horizon's worth of commanded motion
            target = yaw0 + self.omega_ref * t_now
            cap = abs(self.omega_ref) * self.h * N
            err = np.clip(target - q_o_now[yaw_idx], -cap, cap)
            base = q_o_now[yaw_idx] + err
        for i in range(N + 1):
            refs[i, yaw_idx] = base + self.omega_ref * self.h * i
        return refs

    # ------------------------------------------------------------------
    # serialization
    # ------------------------------------------------------------------
    def to_dict(self) -> dict:
        d = {k: v for k, v in self.__dict__.items() if not k.startswith("_")}
        d["q0"] = list(map(float, self.q0))
        d["q_r_ref"] = list(map(float, self.q_r_ref))
        d["w_o"] = list(map(float, self.w_o))
        return d

    @staticmethod
    def from_dict(d: dict) -> "Scenario":
        known = {f for f in Scenario.__dataclass_fields__ if not f.startswith("_")}
        unknown = set(d) - known
        if unknown:
            raise ScenarioError(f"unknown scenario keys: {sorted(unknown)}")
        if "model_ref" not in d or "name" not in d:
            raise ScenarioError("scenario requires 'name' and 'model_ref'")
        d = dict(d)
        d["q0"] = np.asarray(d["q0"], dtype=float)
        d["q_r_ref"] = np.asarray(d["q_r_ref"], dtype=float)
        return Scenario(**d)

    @staticmethod
    def from_json(path: str) -> "Scenario":
        with open(path) as f:
            try:
                data = json.load(f)
            except json.JSONDecodeError as e:
                raise ScenarioError(f"invalid scenario JSON: {e}") from e
        scn = Scenario.from_dict(data)
        scn.validate()
        return scn

    def to_json(self, path: str) -> None:
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)


def default_rotz_scenario(**overrides) -> Scenario:
    ref = list(NOMINAL_FINGER) * 3
    scn = Scenario(
        name="planar-rotz",
        model_ref="builtin:planar_rotz",
        sim_model_ref="builtin:planar_rotz_sim",
        q0=np.array(ref + [0.0]),
        q_r_ref=np.array(ref),
        omega_ref=0.3,
        w_o=[200.0],
    )
    for k, v in overrides.items():
        setattr(scn, k, v)
    scn.validate()
    return scn


def default_free_scenario(**overrides) -> Scenario:
    ref = list(NOMINAL_FINGER) * 3
    scn = Scenario(
        name="planar-free",
        model_ref="builtin:planar_free",
        sim_model_ref="builtin:planar_free_sim",
        q0=np.array(ref + [0.0, 0.0, 0.0]),
        q_r_ref=np.array(ref),
        omega_ref=0.3,
        w_o=[300.0, 300.0, 200.0],
        object_mode="free",
    )
    for k, v in overrides.items():
        setattr(scn, k, v)
    scn.validate()
    return scn


def load_scenario(ref: str) -> Scenario:
    """Path to a scenario JSON, or a builtin name (planar-rotz, planar-free)."""
    if os.path.exists(ref):
        return Scenario.from_json(ref)
    builtin = {
        "planar-rotz": default_rotz_scenario,
        "planar-free": default_free_scenario,
    }
    if ref in builtin:
        return builtin[ref]()
    raise ScenarioError(f"scenario not found: {ref!r} (no such file or builtin)")
