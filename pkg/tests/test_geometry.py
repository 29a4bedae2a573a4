import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from finsler_zeta import geometry as g
from finsler_zeta.errors import ValidationError

finite = st.floats(-5, 5, allow_nan=False)


def bodies():
    return [
        g.SupportBody.ball(2),
        g.SupportBody.ellipsoid(np.diag([1.0, 2.0])),
        g.SupportBody.trig2d(1.0, [(3, 0.1, 0.0)]),
        g.SupportBody.ball(3),
        g.SupportBody.ellipsoid(np.diag([1.0, 1.5, 0.8])),
    ]


def test_support_values():
    assert g.support(g.SupportBody.ball(2), [3, 4]) == pytest.approx(5.0, abs=1e-14)
    assert g.support(g.SupportBody.ellipsoid(np.diag([1.0, 2.0])), [0, 1]) == pytest.approx(2.0, abs=1e-14)
    assert g.support(g.SupportBody.trig2d(1.0, [(3, 0.1, 0.0)]), [1, 0]) == pytest.approx(1.1, abs=1e-13)


def test_inverse_gauss_and_gauge():
    e = g.SupportBody.ellipsoid(np.diag([1.0, 2.0]))
    np.testing.assert_allclose(g.inverse_gauss(e, [0, 1]), [0, 2], atol=1e-12)
    assert g.gauge(e, [0, 2]) == pytest.approx(1.0, abs=1e-10)
    assert g.gauge(e, [0, 0]) == 0.0


def test_inverse_gauss_rejects_non_unit():
    with pytest.raises(ValidationError):
        g.inverse_gauss(g.SupportBody.ball(2), [1.0, 1.0])


def test_finsler_distance_values():
    disc = g.SupportBody.ball(2)
    assert g.finsler_distance(disc, g.ConvexTarget.at_point([0, 0]), [3, 4]) == pytest.approx(5.0)
    small = g.ConvexTarget.from_body(g.SupportBody.ball(2, 0.3))
    assert g.finsler_distance(disc, small, [0, 2]) == pytest.approx(1.7, abs=1e-9)
    assert g.finsler_distance(disc, small, [0, 2], closed_form=False) == pytest.approx(1.7, abs=1e-8)
    e = g.SupportBody.ellipsoid(np.diag([1.0, 2.0]))
    assert g.finsler_distance(e, g.ConvexTarget.at_point([0, 0]), [0, 2]) == pytest.approx(1.0)


def test_geometric_constants_disc():
    c0, ok, violation = g.geometric_constants(g.SupportBody.ball(2))
    assert c0 == pytest.approx(4 / math.pi ** 2, rel=1e-6)
    assert ok and violation is None


def test_geometric_constants_ellipse():
    c0, ok, _ = g.geometric_constants(g.SupportBody.ellipsoid(np.diag([1.0, 2.0])))
    assert 0 < c0 <= 1 and ok


def test_nonconvex_profile_rejected():
    with pytest.raises(ValidationError, match="convex"):
        g.SupportBody.trig2d(1.0, [(2, 0.4, 0.0)])


def test_omega_coefficients():
    disc = g.SupportBody.ball(2)
    np.testing.assert_allclose(g.omega_coefficients(disc, g.ConvexTarget.at_point([0, 0]), [1, 0]), [0, 1],
                               atol=1e-12)
    small = g.ConvexTarget.from_body(g.SupportBody.ball(2, 0.2))
    np.testing.assert_allclose(g.omega_coefficients(disc, small, [0.6, 0.8]), [0.2, 1], atol=1e-10)
    ball3 = g.SupportBody.ball(3)
    np.testing.assert_allclose(g.omega_coefficients(ball3, g.ConvexTarget.at_point([0, 0, 0]), [0, 0, 1]),
                               [0, 0, 1], atol=1e-10)


def test_minkowski_polynomials():
    disc = g.SupportBody.ball(2)
    np.testing.assert_allclose(g.minkowski_volume_poly(g.ConvexTarget.from_body(disc), disc),
                               [math.pi, 2 * math.pi, math.pi], rtol=1e-10)
    np.testing.assert_allclose(g.minkowski_volume_poly(g.ConvexTarget.at_point([0, 0]), disc),
                               [0, 0, math.pi], atol=1e-10)
    ball3 = g.SupportBody.ball(3)
    np.testing.assert_allclose(g.minkowski_volume_poly(g.ConvexTarget.at_point([0, 0, 0]), ball3)[-1],
                               4 * math.pi / 3, rtol=1e-8)


@pytest.mark.parametrize("body,target", [
    (g.SupportBody.ball(2), g.ConvexTarget.from_body(g.SupportBody.ball(2, 0.3))),
    (g.SupportBody.trig2d(1.0, [(3, 0.1, 0.0)]), g.ConvexTarget.from_body(g.SupportBody.ellipsoid(np.diag([0.2, 0.4])))),
    (g.SupportBody.ellipsoid(np.diag([1.0, 1.5, 0.8])), g.ConvexTarget.from_body(g.SupportBody.ball(3, 0.25))),
])
def test_omega_integrals_differentiate_volume(body, target):
    w = g.omega_integrals(body, target)
    v = g.minkowski_volume_poly(target, body)
    for ell in range(body.dim):
        assert w[ell] == pytest.approx((ell + 1) * v[ell + 1], rel=1e-7, abs=1e-9)


@given(st.tuples(finite, finite), st.sampled_from([0.5, 2.0, 10.0]), st.integers(0, 2))
def test_homogeneity(xi, t, which):
    body = bodies()[which]
    xi = np.array(xi)
    if np.linalg.norm(xi) < 1e-3:
        return
    h = g.support(body, xi)
    assert abs(g.support(body, t * xi) - t * h) <= 1e-12 * t * h


@given(st.floats(0, 2 * math.pi), st.integers(0, 2))
def test_support_is_pairing_with_boundary_point(phi, which):
    body = bodies()[which]
    theta = np.array([math.cos(phi), math.sin(phi)])
    v = g.inverse_gauss(body, theta)
    assert g.support(body, theta) == pytest.approx(theta @ v, abs=1e-12)


@given(st.floats(0, 2 * math.pi), st.integers(0, 2))
def test_gauss_map_normal(phi, which):
    body = bodies()[which]
    h = 1e-6
    a = g.inverse_gauss(body, [math.cos(phi - h), math.sin(phi - h)])
    b = g.inverse_gauss(body, [math.cos(phi + h), math.sin(phi + h)])
    tangent = (b - a) / np.linalg.norm(b - a)
    assert abs(tangent @ [math.cos(phi), math.sin(phi)]) < 1e-8


@given(st.tuples(st.floats(-4, 4), st.floats(-4, 4)), st.floats(0.05, 0.5))
def test_distance_monotone_in_body(x, r):
    x = np.array(x)
    target = g.ConvexTarget.at_point([0.1, -0.2])
    big = g.finsler_distance(g.SupportBody.ball(2, 1.0 + r), target, x)
    small = g.finsler_distance(g.SupportBody.ball(2, 1.0), target, x)
    assert big <= small + 1e-12


@given(st.tuples(st.floats(-3, 3), st.floats(-3, 3)))
def test_point_distance_is_gauge(x):
    e = g.SupportBody.ellipsoid(np.diag([1.0, 2.0]))
    x0 = np.array([0.3, 0.1])
    d = g.finsler_distance(e, g.ConvexTarget.at_point(x0), x)
    assert d == pytest.approx(g.gauge(e, np.array(x) - x0), abs=1e-12)


def test_unit_ball_volumes():
    assert g.unit_ball_volume(2) == pytest.approx(math.pi)
    assert g.unit_ball_volume(3) == pytest.approx(4 * math.pi / 3)
    assert g.body_volume(g.SupportBody.ellipsoid(np.diag([1.0, 1.3]))) == pytest.approx(1.3 * math.pi, rel=1e-10)
