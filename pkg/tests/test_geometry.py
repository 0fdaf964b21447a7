"""Signed distances between collision primitives."""

import numpy as np
import pytest

from contactctl.geometry import Capsule, GeometryError, HalfSpace, Sphere, signed_distance
from contactctl.transforms import Pose

from util import random_rotation


def test_sphere_pair_analytic():
    a, b = Sphere(0.1), Sphere(0.1)
    res = signed_distance(a, Pose(p=np.array([0.3, 0, 0])), b, Pose())
    assert res.phi == pytest.approx(0.1, abs=1e-15)
    np.testing.assert_allclose(res.normal, [1, 0, 0])
    np.testing.assert_allclose(res.witness_a, [0.2, 0, 0])
    np.testing.assert_allclose(res.witness_b, [0.1, 0, 0])


def test_sphere_halfspace_penetrating():
    res = signed_distance(Sphere(0.05), Pose(p=np.array([0, 0, 0.03])), HalfSpace(), Pose())
    assert res.phi == pytest.approx(-0.02, abs=1e-15)
    np.testing.assert_allclose(res.normal, [0, 0, 1])


def test_capsule_halfspace_against_sampling_oracle():
    # the capsule surface is the union of spheres along the segment, so the
    # lowest surface point over dense segment samples is min(z) - radius
    rng = np.random.default_rng(5)
    cap = Capsule(0.02, 0.05)
    for _ in range(20):
        R = random_rotation(rng)
        p = rng.uniform(-0.2, 0.2, size=3) + np.array([0, 0, 0.3])
        pose = Pose(R, p)
        res = signed_distance(cap, pose, HalfSpace(), Pose())

        ts = np.linspace(-1, 1, 2001)
        seg = p[None, :] + ts[:, None] * (cap.half_length * R[:, 2])[None, :]
        oracle = seg[:, 2].min() - cap.radius
        assert res.phi == pytest.approx(oracle, abs=1e-6)


def test_sphere_capsule_matches_sphere_sphere_on_axis_end():
    cap = Capsule(0.02, 0.05)
    sph = Sphere(0.01)
    # sphere beyond the capsule end: nearest segment point is the endpoint
    res = signed_distance(sph, Pose(p=np.array([0, 0, 0.2])), cap, Pose())
    assert res.phi == pytest.approx(0.2 - 0.05 - 0.02 - 0.01, abs=1e-12)


def test_unsupported_pair_raises():
    with pytest.raises(GeometryError):
        signed_distance(HalfSpace(), Pose(), HalfSpace(), Pose())


def test_coincident_centers_raise():
    with pytest.raises(GeometryError):
        signed_distance(Sphere(0.1), Pose(), Sphere(0.1), Pose())


def test_reversed_orders_flip_normal():
    a, b = Sphere(0.1), Capsule(0.05, 0.1)
    pa = Pose(p=np.array([0.4, 0.02, 0.01]))
    r1 = signed_distance(a, pa, b, Pose())
    r2 = signed_distance(b, Pose(), a, pa)
    assert r1.phi == pytest.approx(r2.phi, abs=1e-15)
    np.testing.assert_allclose(r1.normal, -r2.normal, atol=1e-15)
    np.testing.assert_allclose(r1.witness_a, r2.witness_b, atol=1e-15)
