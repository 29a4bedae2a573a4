import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from finsler_zeta import coarea as c
from finsler_zeta import geometry as g
from finsler_zeta.errors import DomainError, ValidationError

COS = c.CircleFunction.trig([(1, 1.0, 0.0)])
MIXED = c.CircleFunction.trig([(1, 0.8, 0.0), (2, 0.1, 0.0)])
HEIGHT = c.SphereFunction.height()


@pytest.fixture(scope="module")
def cos_model():
    return c.density_fit(COS)


@pytest.fixture(scope="module")
def height_model():
    return c.density_fit(HEIGHT)


def test_extra_critical_points_rejected():
    with pytest.raises(ValidationError, match="two critical points"):
        c.CircleFunction.trig([(1, 0.7, 0.0), (2, 0.3, 0.0)])


def test_density_values():
    assert c.density(COS, None, 0.0) == pytest.approx(2.0, abs=1e-13)
    assert c.density(COS, None, 0.6) == pytest.approx(2.5, abs=1e-13)
    assert c.density(HEIGHT, None, 0.3) == pytest.approx(2 * math.pi, abs=1e-12)


def test_density_outside_range():
    with pytest.raises(DomainError):
        c.density(COS, None, 1.0)


def test_density_fit_cos(cos_model):
    tau = np.linspace(-0.9, 0.9, 41)
    np.testing.assert_allclose(cos_model(tau), 2 / np.sqrt(1 - tau ** 2), atol=1e-10)


def test_density_fit_height_constant(height_model):
    for piece in height_model.pieces:
        assert abs(piece.coef[0] - 2 * math.pi) < 1e-12
        assert np.all(np.abs(piece.coef[1:]) <= 1e-12)
    np.testing.assert_allclose(height_model(np.linspace(-0.8, 0.8, 9)), 2 * math.pi, atol=1e-12)


def test_density_with_weight():
    weight = lambda phi: np.sin(phi) ** 2
    tau = np.linspace(-0.9, 0.9, 11)
    np.testing.assert_allclose(c.density(COS, weight, tau), 2 * np.sqrt(1 - tau ** 2), atol=1e-12)


def test_cauchy_transform_values(cos_model, height_model):
    assert c.cauchy_transform(cos_model, 2.0) == pytest.approx(2 * math.pi / math.sqrt(3), rel=1e-12)
    assert c.cauchy_transform(height_model, 2.0) == pytest.approx(2 * math.pi * math.log(3), rel=1e-12)


def test_rotated_direct_integral():
    sin = c.CircleFunction.trig([(1, 0.0, 1.0)])
    val = c.direct_integral(sin, None, 1.0, rotated=True)
    assert val == pytest.approx(2 * math.pi / math.sqrt(2), rel=1e-12)


def test_plemelj_values(cos_model, height_model):
    assert c.plemelj_jump(cos_model, 0.0) == pytest.approx(-4j * math.pi, abs=1e-8)
    assert c.plemelj_jump(height_model, 0.5) == pytest.approx(-4j * math.pi ** 2, abs=1e-8)


@given(st.floats(-0.85, 0.85))
def test_plemelj_matches_density(tau):
    model = c.density_fit(COS)
    assert abs(c.plemelj_jump(model, tau) + 2j * math.pi * c.density(COS, None, tau)) <= 1e-4


def test_second_sheet_is_other_branch(cos_model):
    z = 0.1j
    other = -2 * math.pi / np.sqrt(complex(z * z - 1))
    first = 2 * math.pi / (np.sqrt(complex(z - 1)) * np.sqrt(complex(z + 1)))
    val = c.second_sheet(cos_model, z)
    assert abs(val - first) > 1
    assert min(abs(val - other), abs(val + other)) < 1e-8


def test_second_sheet_matches_contour(cos_model):
    z = 0.1j
    assert abs(c.second_sheet(cos_model, z) - c.contour_integral(COS, None, z)) < 1e-8


def test_second_sheet_continuity(cos_model):
    below = c.cauchy_transform(cos_model, 0.3 - 1e-9j)
    above = c.second_sheet(cos_model, 0.3 + 1e-9j)
    assert abs(above - below) < 1e-6


def test_critical_exponents():
    gamma, a0, _ = c.critical_exponent(COS)
    assert gamma == pytest.approx(-0.5, abs=0.02) and a0 == pytest.approx(math.sqrt(2), rel=1e-6)
    gamma, a0, _ = c.critical_exponent(HEIGHT)
    assert gamma == pytest.approx(0.0, abs=0.02) and a0 == pytest.approx(2 * math.pi, rel=1e-8)


@pytest.mark.parametrize("fn", [COS, MIXED, HEIGHT, c.SphereFunction(g.SupportBody.ellipsoid(np.diag([1.0, 1.5, 0.8])),
                                                                      [0.3, 0.4, 0.866])])
def test_coarea_identity(fn):
    model = c.density_fit(fn)
    rng = np.random.default_rng(7)
    span = fn.fmax - fn.fmin
    for _ in range(6):
        z = complex(rng.uniform(fn.fmin - 0.5, fn.fmax + 0.5), rng.choice([-1, 1]) * rng.uniform(0.2, 1.0) * span)
        a = c.direct_integral(fn, None, z)
        b = c.cauchy_transform(model, z)
        assert abs(a - b) <= 1e-8 * abs(a)


def test_morse_quadratic():
    chart = c.morse_normal_form(lambda y: 3 * y[0] ** 2, np.zeros(1), hess=lambda y: np.array([[6.0]]))
    for x in (-0.4, 0.1, 0.3):
        assert chart.phi([x])[0] == pytest.approx(x / math.sqrt(6), abs=1e-14)
    assert chart.residual <= 1e-12


def test_morse_cosine():
    chart = c.morse_normal_form(lambda y: 1 - math.cos(y[0]), np.zeros(1),
                                hess=lambda y: np.array([[math.cos(y[0])]]))
    for x in np.linspace(-0.5, 0.5, 11):
        assert chart.phi([x])[0] == pytest.approx(2 * math.asin(x / 2), abs=1e-9)


def test_morse_two_variables():
    f = lambda y: y[0] ** 2 + 2 * y[1] ** 2 + y[0] * y[1] ** 2
    hess = lambda y: np.array([[2.0, 2 * y[1]], [2 * y[1], 4.0 + 2 * y[0]]])
    chart = c.morse_normal_form(f, np.zeros(2), hess=hess, rho=0.4)
    assert chart.residual <= 1e-9


def test_morse_rejects_saddle():
    with pytest.raises(DomainError):
        c.morse_normal_form(lambda y: y[0] ** 2 - y[1] ** 2, np.zeros(2),
                            hess=lambda y: np.diag([2.0, -2.0]))
