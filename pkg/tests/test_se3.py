import math

import numpy as np
import pytest
import scipy.stats

from lkreg.se3 import (
    AngleNearPi,
    RigidTransform,
    Twist,
    compose,
    exp_twist,
    log_transform,
    rotation_error_deg,
    sample_perturbation,
    sample_perturbation_at,
    transform_points,
    translation_error,
)


def random_twist(rng, max_angle=3.0):
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    return Twist(omega=axis * rng.uniform(0, max_angle), v=rng.normal(size=3))


def test_exp_zero_twist_is_identity():
    g = exp_twist(Twist.zero())
    np.testing.assert_array_equal(g.r, np.eye(3))
    np.testing.assert_array_equal(g.t, np.zeros(3))


def test_exp_axis_aligned_quarter_turn():
    g = exp_twist(Twist(omega=[0.0, 0.0, math.pi / 2], v=[0.0, 0.0, 0.0]))
    expected = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
    np.testing.assert_allclose(g.r, expected, atol=1e-15)
    np.testing.assert_allclose(g.t, 0.0, atol=1e-15)


def test_roundtrip_at_fixed_angle():
    rng = np.random.default_rng(3)
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    xi = Twist(omega=axis * 0.7, v=rng.normal(size=3))
    back = log_transform(exp_twist(xi))
    np.testing.assert_allclose(back.as_array(), xi.as_array(), atol=1e-9)


def test_roundtrip_random_twists():
    rng = np.random.default_rng(11)
    for _ in range(500):
        xi = random_twist(rng)
        back = log_transform(exp_twist(xi))
        np.testing.assert_allclose(back.as_array(), xi.as_array(), atol=1e-9)


def test_roundtrip_small_angles():
    rng = np.random.default_rng(12)
    for scale in (1e-12, 1e-9, 1e-7):
        xi = random_twist(rng, max_angle=scale)
        g = exp_twist(xi)
        np.testing.assert_allclose(
            log_transform(g).as_array(), xi.as_array(), atol=1e-12
        )


def test_log_identity_is_zero():
    xi = log_transform(RigidTransform.identity())
    np.testing.assert_array_equal(xi.as_array(), np.zeros(6))


def test_log_axis_aligned():
    g = exp_twist(Twist(omega=[0, 0, math.pi / 2], v=[0, 0, 0]))
    xi = log_transform(g)
    np.testing.assert_allclose(xi.as_array(), [0, 0, math.pi / 2, 0, 0, 0], atol=1e-12)


def test_log_rejects_near_pi():
    g = exp_twist(Twist(omega=[math.pi - 1e-8, 0, 0], v=[0, 0, 0]))
    with pytest.raises(AngleNearPi):
        log_transform(g)


def test_exp_produces_valid_rotations():
    rng = np.random.default_rng(21)
    for _ in range(200):
        g = exp_twist(random_twist(rng))
        np.testing.assert_allclose(g.r.T @ g.r, np.eye(3), atol=1e-9)
        assert abs(np.linalg.det(g.r) - 1.0) < 1e-9


def test_compose_identity_and_inverse():
    rng = np.random.default_rng(5)
    g = exp_twist(random_twist(rng))
    ident = RigidTransform.identity()
    got = compose(g, ident)
    np.testing.assert_allclose(got.matrix(), g.matrix(), atol=1e-15)
    cancel = compose(g, g.inverse())
    np.testing.assert_allclose(cancel.matrix(), np.eye(4), atol=1e-9)


def test_compose_matches_homogeneous_product():
    rng = np.random.default_rng(6)
    a = exp_twist(random_twist(rng))
    b = exp_twist(random_twist(rng))
    got = compose(a, b).matrix()
    np.testing.assert_allclose(got, a.matrix() @ b.matrix(), atol=1e-12)


def test_transform_points_identity_and_translation():
    pts = np.array([[0.0, 0.0, 0.0], [1.0, 2.0, 3.0]])
    np.testing.assert_array_equal(
        transform_points(RigidTransform.identity(), pts), pts
    )
    g = RigidTransform(r=np.eye(3), t=[1.0, 2.0, 3.0])
    np.testing.assert_array_equal(transform_points(g, pts[:1]), [[1.0, 2.0, 3.0]])


def test_transform_points_inverse_cancels():
    rng = np.random.default_rng(7)
    g = exp_twist(random_twist(rng))
    pts = rng.normal(size=(50, 3))
    back = transform_points(g.inverse(), transform_points(g, pts))
    np.testing.assert_allclose(back, pts, atol=1e-9)


def test_apply_distributes_over_compose():
    rng = np.random.default_rng(8)
    a = exp_twist(random_twist(rng))
    b = exp_twist(random_twist(rng))
    pts = rng.normal(size=(30, 3))
    lhs = transform_points(compose(a, b), pts)
    rhs = transform_points(a, transform_points(b, pts))
    np.testing.assert_allclose(lhs, rhs, atol=1e-9)


def test_rotation_error_zero_and_constructed():
    rng = np.random.default_rng(9)
    g = exp_twist(random_twist(rng))
    assert rotation_error_deg(g, g) < 1e-10
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    d = exp_twist(Twist(omega=axis * math.radians(30.0), v=np.zeros(3)))
    assert abs(rotation_error_deg(compose(d, g), g) - 30.0) < 1e-6


def test_rotation_error_matches_log_oracle():
    rng = np.random.default_rng(10)
    for _ in range(50):
        a = exp_twist(random_twist(rng, max_angle=2.0))
        b = exp_twist(random_twist(rng, max_angle=2.0))
        rel = compose(a, b.inverse())
        want = math.degrees(np.linalg.norm(log_transform(rel).omega))
        assert abs(rotation_error_deg(a, b) - want) < 1e-6


def test_rotation_error_of_perturbation_equals_angle():
    rng = np.random.default_rng(14)
    g = exp_twist(random_twist(rng))
    for angle in (0.5, 10.0, 90.0, 150.0):
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        d = exp_twist(Twist(omega=axis * math.radians(angle), v=np.zeros(3)))
        assert abs(rotation_error_deg(compose(d, g), g) - angle) < 1e-6


def test_translation_error_cases():
    g = RigidTransform.identity()
    assert translation_error(g, g) == 0.0
    a = RigidTransform(r=np.eye(3), t=[0.3, 0.0, 0.4])
    assert abs(translation_error(a, g) - 0.5) < 1e-15
    rng = np.random.default_rng(13)
    x = RigidTransform(r=np.eye(3), t=rng.normal(size=3))
    y = RigidTransform(r=np.eye(3), t=rng.normal(size=3))
    assert translation_error(x, y) == pytest.approx(
        float(np.sqrt(((x.t - y.t) ** 2).sum())), abs=0
    )


def test_sample_perturbation_zero_is_identity():
    g = sample_perturbation(0.0, 0.0, 123)
    np.testing.assert_array_equal(g.r, np.eye(3))
    np.testing.assert_array_equal(g.t, np.zeros(3))


def test_sample_perturbation_deterministic():
    a = sample_perturbation(45.0, 0.1, 99)
    b = sample_perturbation(45.0, 0.1, 99)
    np.testing.assert_array_equal(a.matrix(), b.matrix())


def test_sample_perturbation_angle_uniform():
    angles = [
        rotation_error_deg(sample_perturbation(90.0, 0.0, s), RigidTransform.identity())
        for s in range(10_000)
    ]
    stat = scipy.stats.kstest(angles, scipy.stats.uniform(loc=0, scale=90).cdf)
    assert stat.pvalue > 0.01


def test_sample_perturbation_translation_in_ball():
    for s in range(100):
        g = sample_perturbation(10.0, 0.25, s)
        assert np.linalg.norm(g.t) <= 0.25 + 1e-12


def test_sample_perturbation_at_exact_angle():
    for s in range(20):
        g = sample_perturbation_at(33.0, 0.1, s)
        assert abs(rotation_error_deg(g, RigidTransform.identity()) - 33.0) < 1e-9


def test_flat_serialization_roundtrip():
    rng = np.random.default_rng(15)
    g = exp_twist(random_twist(rng))
    flat = g.to_flat()
    assert len(flat) == 16 and flat[15] == 1.0
    back = RigidTransform.from_flat(flat)
    np.testing.assert_array_equal(back.matrix(), g.matrix())
