"""PD execution layer and penalty-contact verification simulator."""

import numpy as np
import pytest
from scipy.optimize import brentq

from contactctl.compliant import CompliantParams, normal_force
from contactctl.execsim import PdGains, SimConfig, VerificationSim, pd_torque
from contactctl.geometry import HalfSpace, Sphere
from contactctl.model import ChainSpec, GeometrySpec, JointSpec, ObjectJointSpec, SystemModel

from util import NOMINAL_Q, two_link_finger_disk


def _ball_on_plane(mass=0.1, g=9.81):
    """A 'ball' riding a single vertical prismatic object DOF over the floor."""
    chain = ChainSpec("arm", (JointSpec("a0", "revolute", (0, 0, 1),
                                        origin_xyz=(10.0, 0, 0)),))
    geoms = [
        GeometrySpec("ball", "object", Sphere(0.05)),
        GeometrySpec("floor", "world", HalfSpace()),
        GeometrySpec("far_tip", "a0", Sphere(0.01), offset_xyz=(0.1, 0, 0)),
    ]
    oj = ObjectJointSpec("planar_free", origin_rpy=(0.0, -np.pi / 2, 0.0),
                         damping=(0.0, 0.0, 0.0), mass=mass)
    # planar x maps to world z through the -90 deg pitch of the origin frame
    M = np.diag([mass, mass, 1e-4])
    return SystemModel([chain], oj, M, [1.0], geoms, gravity=(0, 0, -g))


def test_pd_torque_zero_at_setpoint():
    model = two_link_finger_disk()
    gains = PdGains(100.0, 1.0, gravity_comp=False)
    tau = pd_torque(model, NOMINAL_Q, np.zeros(3), NOMINAL_Q[:2], np.zeros(2), {}, gains)
    np.testing.assert_allclose(tau, 0.0, atol=1e-15)


def test_pd_torque_proportional_term():
    model = two_link_finger_disk()
    gains = PdGains(100.0, 0.0, gravity_comp=False)
    q_d = NOMINAL_Q[:2].copy()
    q_d[0] += 0.01
    tau = pd_torque(model, NOMINAL_Q, np.zeros(3), q_d, np.zeros(2), {}, gains)
    assert tau[0] == pytest.approx(1.0)
    assert tau[1] == pytest.approx(0.0)


def test_pd_feedforward_force_term():
    model = two_link_finger_disk()
    gains = PdGains(100.0, 1.0, gravity_comp=False)
    from contactctl.contacts import detect_contacts
    contacts = detect_contacts(model, NOMINAL_Q, 0.05)
    c = contacts[0]
    F = np.array([0.5, -0.2, 0.1])
    tau = pd_torque(model, NOMINAL_Q, np.zeros(3), NOMINAL_Q[:2], np.zeros(2),
                    {c.pair_id: F}, gains, contacts)
    Jw = model.point_jacobian(NOMINAL_Q, "f0_j1", c.witness_robot)
    np.testing.assert_allclose(tau, (Jw[:, :2].T @ F), atol=1e-12)


def test_sim_state_unchanged_without_forces():
    model = two_link_finger_disk(damping=0.0)
    sim = VerificationSim(model, CompliantParams(), SimConfig())
    q0 = np.array([1.2, 0.6, 0.0])  # no contact
    sim.reset(q0)
    for _ in range(100):
        sim.step(np.zeros(2))
    np.testing.assert_allclose(sim.state.q, q0, atol=1e-15)
    np.testing.assert_allclose(sim.state.qdot, 0.0, atol=1e-15)


def test_resting_ball_equilibrium_matches_root_finder():
    m, g = 0.1, 9.81
    model = _ball_on_plane(m, g)
    params = CompliantParams(sigma=1e-3, k=2000.0, v_d=0.1)
    sim = VerificationSim(model, params, SimConfig(dt=5e-4, phi_max=0.02))
    # start slightly above the equilibrium height (q_o x-DOF = world z of center)
    sim.reset(np.array([0.0, 0.051, 0.0, 0.0]))
    for _ in range(8000):
        sim.step(np.zeros(1))
    ball_z = sim.state.q[1]
    phi_final = ball_z - 0.05

    # oracle: solve sigma k log(1+e^(-phi/sigma)) = m g
    phi_star = brentq(lambda p: normal_force(p, 0.0, params) - m * g, -0.05, 0.05,
                      xtol=1e-14)
    assert phi_final == pytest.approx(phi_star, abs=1e-8)


def test_energy_nonincreasing_passive_drop():
    # gravity off; give the ball downward velocity into the floor and audit
    # total mechanical energy every step
    m = 0.1
    model = _ball_on_plane(m, g=0.0)
    params = CompliantParams(sigma=2e-3, k=200.0, v_d=0.05)
    sim = VerificationSim(model, params, SimConfig(dt=1e-5, phi_max=0.04))
    sim.reset(np.array([0.0, 0.06, 0.0, 0.0]), np.array([0.0, -0.3, 0.0, 0.0]))
    E_prev = sim.energy()
    E0 = E_prev
    for _ in range(20000):
        sim.step(np.zeros(1))
        E = sim.energy()
        assert E <= E_prev * (1 + 1e-6) + 1e-12
        E_prev = E
    assert E_prev < 0.9 * E0  # dissipation actually removed energy


def test_pd_converges_critically_damped():
    # PD contract: no contact, overshoot below 5% with k_d = 2 sqrt(k_p I)
    chain = ChainSpec("a", (JointSpec("j0", "revolute", (0, 0, 1)),))
    model = SystemModel([chain], ObjectJointSpec("hinge", damping=(1.0,)),
                        np.array([[1e-3]]), [1.0],
                        [GeometrySpec("obj", "object", Sphere(0.01),
                                      offset_xyz=(5.0, 0, 0))])
    I_rot = 1e-3
    k_p = 10.0
    k_d = 2 * np.sqrt(k_p * I_rot)
    sim = VerificationSim(model, CompliantParams(), SimConfig(rotor_inertia=I_rot))
    sim.reset(np.zeros(2))
    gains = PdGains(k_p, k_d, gravity_comp=False)
    target = 0.2
    peak = 0.0
    for _ in range(4000):
        s = sim.state
        tau = pd_torque(model, s.q, s.qdot, np.array([target]), np.zeros(1), {}, gains)
        sim.step(tau)
        peak = max(peak, sim.state.q[0])
    assert sim.state.q[0] == pytest.approx(target, abs=1e-3)
    assert peak <= target * 1.05


def test_static_arm_under_gravity_holds():
    # gravity compensation keeps a massy arm still: qdd ~ 0 over a short run
    chain = ChainSpec("a", (JointSpec("j0", "revolute", (0, 0, 1), link_mass=0.2,
                                      link_com=(0.1, 0, 0)),))
    model = SystemModel([chain], ObjectJointSpec("hinge", damping=(1.0,)),
                        np.array([[1e-3]]), [1.0],
                        [GeometrySpec("obj", "object", Sphere(0.01),
                                      offset_xyz=(5.0, 0, 0))],
                        gravity=(0, -9.81, 0))
    sim = VerificationSim(model, CompliantParams(), SimConfig())
    q0 = np.array([0.4, 0.0])
    sim.reset(q0)
    gains = PdGains(50.0, 1.0, gravity_comp=True)
    for _ in range(2000):
        s = sim.state
        tau = pd_torque(model, s.q, s.qdot, q0[:1], np.zeros(1), {}, gains)
        sim.step(tau)
    assert sim.state.q[0] == pytest.approx(0.4, abs=1e-6)


def test_sim_divergence_detection():
    model = two_link_finger_disk()
    sim = VerificationSim(model, CompliantParams(), SimConfig())
    sim.reset(NOMINAL_Q)
    from contactctl.execsim import SimError
    with pytest.raises(SimError):
        for _ in range(2000):
            sim.step(np.array([np.inf, 0.0]))


def test_sim_dt_bound():
    with pytest.raises(ValueError):
        SimConfig(dt=2e-3)
