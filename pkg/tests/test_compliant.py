"""Compliant contact law and stacked stiffness operators."""

import numpy as np
import pytest

from contactctl.compliant import (
    CompliantParams,
    build_stiffness_set,
    contact_stiffness,
    dissipation,
    normal_force,
    stiffness_scalar,
)
from contactctl.contacts import detect_contacts
from contactctl.scenarios import NOMINAL_FINGER, build_planar_rotz_model

from util import random_rotation


P = CompliantParams(sigma=1e-3, k=2000.0, v_d=0.1, alpha=0.3)


def test_normal_force_at_zero_gap():
    assert normal_force(0.0, 0.0, P) == pytest.approx(P.sigma * P.k * np.log(2.0), rel=1e-15)


def test_normal_force_asymptotes():
    assert normal_force(0.5, 0.0, P) == pytest.approx(0.0, abs=1e-12)
    # deep penetration: slope k
    f1 = normal_force(-0.5, 0.0, P)
    assert f1 == pytest.approx(-P.k * -0.5, rel=1e-3)
    assert normal_force(-0.5001, 0.0, P) - f1 == pytest.approx(P.k * 1e-4, rel=1e-3)


def test_normal_force_nonnegative_and_decreasing():
    phis = np.linspace(-0.05, 0.05, 301)
    vals = [normal_force(p, 0.0, P) for p in phis]
    assert all(v >= 0 for v in vals)
    assert all(vals[i + 1] < vals[i] for i in range(len(vals) - 1))


def test_normal_force_overflow_safe():
    assert np.isfinite(normal_force(-1000.0, 0.0, P))
    assert np.isfinite(normal_force(1000.0, 0.0, P))


def test_dissipation_branch_values():
    assert dissipation(0.0, 0.1) == pytest.approx(1.0)
    assert dissipation(0.1, 0.1) == pytest.approx(0.25)
    assert dissipation(-0.1, 0.1) == pytest.approx(2.0)
    assert dissipation(0.2, 0.1) == 0.0
    assert dissipation(5.0, 0.1) == 0.0


def test_dissipation_continuity_at_breakpoints():
    # evaluate the adjacent branch formulas exactly at each breakpoint
    v_d = 0.1
    jump0 = (1.0 - 0.0 / v_d) - 0.25 * (0.0 / v_d - 2.0) ** 2
    assert abs(jump0) < 1e-12
    jump2 = 0.25 * (2 * v_d / v_d - 2.0) ** 2 - 0.0
    assert abs(jump2) < 1e-12
    # and the implementation agrees with both branches there
    assert dissipation(0.0, v_d) == pytest.approx(1.0, abs=1e-15)
    assert dissipation(2 * v_d, v_d) == pytest.approx(0.0, abs=1e-15)


def test_dissipation_zeroes_force_at_fast_separation():
    p = CompliantParams(use_dissipation=True)
    assert normal_force(0.0, 2 * p.v_d, p) == 0.0


def test_stiffness_values():
    assert stiffness_scalar(0.0, P) == pytest.approx(P.k / 2)
    assert stiffness_scalar(50 * P.sigma, P) == pytest.approx(0.0, abs=1e-12)
    K = contact_stiffness(0.0, P)
    np.testing.assert_allclose(np.diag(K), [0.3 * 1000, 0.3 * 1000, 1000])


def test_stiffness_matches_force_slope_fd():
    eps = 1e-8
    for phi in (-0.01, -1e-3, 0.0, 1e-3, 0.01):
        fd = (normal_force(phi + eps, 0.0, P) - normal_force(phi - eps, 0.0, P)) / (2 * eps)
        assert stiffness_scalar(phi, P) == pytest.approx(abs(fd), rel=1e-6)


def test_invalid_params_raise():
    with pytest.raises(ValueError):
        CompliantParams(sigma=0.0)
    with pytest.raises(ValueError):
        CompliantParams(alpha=-0.1)


# ----------------------------------------------------------------------
# stiffness set assembly
# ----------------------------------------------------------------------
def _scenario_contacts():
    model = build_planar_rotz_model()
    q = np.array(list(NOMINAL_FINGER) * 3 + [0.0])
    return model, detect_contacts(model, q, 0.05)


def test_stiffness_set_single_contact_at_origin():
    # synthetic contact at the object origin: K_o translational block is the
    # world stiffness, rotational block zero
    from contactctl.contacts import ContactInfo, contact_frame, grasp_matrix

    rng = np.random.default_rng(1)
    n = rng.normal(size=3)
    n /= np.linalg.norm(n)
    R = contact_frame(n)
    c = ContactInfo(("a", "b"), 1e-3, np.zeros(3), np.zeros(3), n, R, 0.8,
                    np.zeros(4), np.zeros((2, 4)), grasp_matrix(np.zeros(3), np.zeros(3)))
    ss = build_stiffness_set([c], P, 4)
    np.testing.assert_allclose(ss.K_o[:3, :3], 0.0, atol=1e-12)
    np.testing.assert_allclose(ss.K_o[3:, 3:], ss.Kc_world[0], atol=1e-12)


def test_K_o_assembly_matches_naive_loop():
    model, contacts = _scenario_contacts()
    ss = build_stiffness_set(contacts, P, model.n_q_r)
    K_o = np.zeros((6, 6))
    for c in sorted(contacts, key=lambda c: c.pair_id):
        kc = contact_stiffness(c.phi, P)
        Kw = c.R_C @ kc @ c.R_C.T
        K_o += c.G.T @ Kw @ c.G
    np.testing.assert_allclose(ss.K_o, K_o, atol=1e-12)


def test_K_o_symmetric_psd_random():
    rng = np.random.default_rng(4)
    model, contacts = _scenario_contacts()
    for _ in range(20):
        # perturb phis to vary stiffness magnitudes
        for c in contacts:
            c.phi = rng.uniform(-0.005, 0.02)
        ss = build_stiffness_set(contacts, P, model.n_q_r)
        np.testing.assert_allclose(ss.K_o, ss.K_o.T, atol=1e-12)
        assert np.min(np.linalg.eigvalsh(ss.K_o)) >= -1e-10


def test_antipodal_contacts_rank():
    model, contacts = _scenario_contacts()
    ss = build_stiffness_set(contacts[:2], P, model.n_q_r)
    evals = np.linalg.eigvalsh(ss.K_o)
    rank = int(np.sum(evals > 1e-9 * evals.max()))
    assert rank <= 6


def test_world_stiffness_similarity_invariant():
    rng = np.random.default_rng(7)
    for _ in range(20):
        R = random_rotation(rng)
        from contactctl.contacts import ContactInfo, grasp_matrix
        c = ContactInfo(("a", "b"), 2e-3, np.zeros(3), np.zeros(3), R[:, 2], R, 0.8,
                        np.zeros(3), np.zeros((2, 3)), grasp_matrix(np.zeros(3), np.zeros(3)))
        ss = build_stiffness_set([c], P, 3)
        evals = np.sort(np.linalg.eigvalsh(ss.Kc_world[0]))
        expected = np.sort(np.diag(contact_stiffness(2e-3, P)))
        np.testing.assert_allclose(evals, expected, atol=1e-10)


def test_empty_contact_set():
    ss = build_stiffness_set([], P, 5)
    assert ss.n_c == 0
    np.testing.assert_allclose(ss.K_o, 0.0)
    assert ss.J_stack.shape == (0, 5)


def test_stack_row_order_sorted_by_pair():
    model, contacts = _scenario_contacts()
    ss = build_stiffness_set(list(reversed(contacts)), P, model.n_q_r)
    assert ss.pair_ids == sorted(ss.pair_ids)
