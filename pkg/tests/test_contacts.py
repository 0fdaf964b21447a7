"""Contact detection, frames, Jacobians, grasp matrices."""

import numpy as np
import pytest

from contactctl.contacts import contact_frame, contact_pack, contact_pack_batch, detect_contacts, grasp_matrix
from contactctl.scenarios import build_planar_rotz_model
from contactctl.scenarios import NOMINAL_FINGER

from util import NOMINAL_Q, two_link_finger_disk


def test_contact_frame_z_up():
    R = contact_frame(np.array([0, 0, 1.0]))
    np.testing.assert_allclose(R[:, 2], [0, 0, 1])
    np.testing.assert_allclose(R @ R.T, np.eye(3), atol=1e-12)
    assert np.linalg.det(R) == pytest.approx(1.0, abs=1e-12)


def test_contact_frame_orthonormal_random():
    rng = np.random.default_rng(0)
    for _ in range(200):
        n = rng.normal(size=3)
        n /= np.linalg.norm(n)
        R = contact_frame(n)
        np.testing.assert_allclose(R @ R.T, np.eye(3), atol=1e-12)
        assert np.linalg.det(R) == pytest.approx(1.0, abs=1e-12)
        np.testing.assert_allclose(R[:, 2], n, atol=1e-15)


def test_contact_frame_sliding_alignment():
    n = np.array([0, 0, 1.0])
    v = np.array([0.1, 0.2, 0.0])
    R = contact_frame(n, v)
    np.testing.assert_allclose(R[:, 1], v / np.linalg.norm(v), atol=1e-12)


def test_contact_frame_zero_normal_raises():
    with pytest.raises(ValueError):
        contact_frame(np.zeros(3))


def test_grasp_matrix_at_origin_is_identity_block():
    G = grasp_matrix(np.zeros(3), np.zeros(3))
    np.testing.assert_allclose(G, np.hstack([np.zeros((3, 3)), np.eye(3)]))


def test_grasp_matrix_cross_product():
    G = grasp_matrix(np.zeros(3), np.array([0, 0.1, 0]))
    v = G @ np.array([0, 0, 1.0, 0, 0, 0])
    np.testing.assert_allclose(v, [-0.1, 0, 0], atol=1e-15)


def test_grasp_matrix_finite_difference():
    # rotate/translate a body point and difference its position
    rng = np.random.default_rng(2)
    from contactctl.transforms import axis_angle
    for _ in range(20):
        r = rng.normal(size=3) * 0.1
        origin = rng.normal(size=3)
        point = origin + r
        G = grasp_matrix(origin, point)
        twist = rng.normal(size=6)
        eps = 1e-7
        w, vlin = twist[:3], twist[3:]
        # finite rotation of the point about the (moving) origin
        Rp = axis_angle(w / max(np.linalg.norm(w), 1e-12), np.linalg.norm(w) * eps)
        p_plus = origin + vlin * eps + Rp @ r
        fd = (p_plus - point) / eps
        np.testing.assert_allclose(G @ twist, fd, atol=1e-6)


def test_detect_contacts_empty_when_far():
    model = two_link_finger_disk()
    q = np.array([1.2, 0.5, 0.0])  # folded far from disk
    assert detect_contacts(model, q, 0.02) == []


def test_detect_contacts_sparsity_three_fingers():
    model = build_planar_rotz_model()
    q = np.array(list(NOMINAL_FINGER) * 3 + [0.0])
    contacts = detect_contacts(model, q, 0.05)
    assert len(contacts) == 3
    names = [c.pair_id for c in contacts]
    assert names == sorted(names)
    for c in contacts:
        k = int(c.pair_id[0][3])  # tipK
        J = c.J
        cols = np.nonzero(np.abs(J).sum(axis=0) > 1e-12)[0]
        own = {2 * k, 2 * k + 1, 6}  # own finger joints + object DOF
        assert set(cols) <= own


def test_jacobian_vs_witness_velocity_fd():
    # J maps qdot to the relative velocity of the material points currently
    # at the witnesses: freeze them in their bodies and difference their
    # world positions
    model = two_link_finger_disk()
    rng = np.random.default_rng(4)
    eps = 1e-6
    for _ in range(20):
        q = NOMINAL_Q + rng.uniform(-0.05, 0.05, size=3)
        contacts = detect_contacts(model, q, 0.05)
        if not contacts:
            continue
        c = contacts[0]
        qd = rng.normal(size=3)
        poses0 = model.fk(q)
        tip_frame = model.geometry(c.pair_id[0]).frame
        loc_a = poses0[tip_frame].R.T @ (c.witness_robot - poses0[tip_frame].p)
        loc_b = poses0["object"].R.T @ (c.witness_object - poses0["object"].p)

        def rel(qq):
            ps = model.fk(qq)
            return ps[tip_frame].apply(loc_a) - ps["object"].apply(loc_b)

        d = (rel(q + eps * qd) - rel(q - eps * qd)) / (2 * eps)
        v_frame = c.J @ qd  # rows (n, t1, t2)
        v_world = c.R_C @ np.array([v_frame[1], v_frame[2], v_frame[0]])
        err = np.linalg.norm(v_world - d) / max(np.linalg.norm(d), 1e-9)
        assert err < 1e-4


def test_phi_rate_consistency():
    model = two_link_finger_disk()
    rng = np.random.default_rng(9)
    eps = 1e-6
    for _ in range(20):
        q = NOMINAL_Q + rng.uniform(-0.05, 0.05, size=3)
        contacts = detect_contacts(model, q, 0.05)
        if not contacts:
            continue
        c = contacts[0]
        qd = rng.normal(size=3)
        def phi(qq):
            cs = detect_contacts(model, qq, 0.06)
            return next(x for x in cs if x.pair_id == c.pair_id).phi
        dphi = (phi(q + eps * qd) - phi(q - eps * qd)) / (2 * eps)
        assert c.jn @ qd == pytest.approx(dphi, rel=1e-4, abs=1e-9)


def test_object_block_sign_convention():
    # rows of J on object DOFs == -(frame-projected grasp matrix * DOF map)
    model = two_link_finger_disk()
    q = NOMINAL_Q.copy()
    c = detect_contacts(model, q, 0.05)[0]
    E = model.object_dof_map(q[2:])
    G_frame = c.R_C.T @ c.G  # rows (t1, t2, n)
    obj_block = np.vstack([c.jt, c.jn])[:, 2:]  # reorder J rows to (t1, t2, n)
    np.testing.assert_allclose(obj_block, -(G_frame @ E), atol=1e-12)


def test_contact_pack_matches_detect():
    model = two_link_finger_disk()
    q = NOMINAL_Q + 0.01
    contacts = detect_contacts(model, q, 0.05)
    pair_ids = [c.pair_id for c in contacts]
    phi, Jn, Jt = contact_pack(model, q, pair_ids)
    for i, c in enumerate(contacts):
        assert phi[i] == pytest.approx(c.phi, abs=1e-15)
        np.testing.assert_allclose(Jn[i], c.jn, atol=1e-14)
        # tangent bases may differ; compare the projector J_t' J_t
        np.testing.assert_allclose(Jt[i].T @ Jt[i], c.jt.T @ c.jt, atol=1e-12)


def test_contact_pack_batch_matches_scalar():
    model = two_link_finger_disk()
    rng = np.random.default_rng(12)
    Q = NOMINAL_Q[None, :] + rng.uniform(-0.03, 0.03, size=(7, 3))
    pair_ids = [("tip0", "disk")]
    phi_b, Jn_b, Jrel_b, n_b = contact_pack_batch(model, Q, pair_ids)
    for b in range(7):
        phi, Jn, Jt = contact_pack(model, Q[b], pair_ids)
        assert phi_b[b, 0] == pytest.approx(phi[0], abs=1e-14)
        np.testing.assert_allclose(Jn_b[b, 0], Jn[0], atol=1e-13)
        P = np.eye(3) - np.outer(n_b[b, 0], n_b[b, 0])
        np.testing.assert_allclose(
            Jrel_b[b, 0].T @ P @ Jrel_b[b, 0], Jt[0].T @ Jt[0], atol=1e-12
        )
