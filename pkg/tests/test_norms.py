import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from finsler_zeta import norms as nm
from finsler_zeta.errors import DomainError, ValidationError

ATLAS2 = nm.ChartAtlas.default(2)
ATLAS3 = nm.ChartAtlas.default(3)
COS = nm.from_angle(np.cos)
TRIG = nm.default_test_set(2)["trig3"]


@pytest.mark.parametrize("atlas", [ATLAS2, ATLAS3])
def test_atlas_covers_and_roundtrips(atlas):
    assert atlas.covers()
    assert atlas.covering_radius() < math.pi / 4
    assert atlas.roundtrip_error() <= 1e-14


def test_atlas_first_chart_at_pole():
    np.testing.assert_allclose(ATLAS2.points[0], [0, 1], atol=1e-15)
    np.testing.assert_allclose(ATLAS3.points[0], [0, 0, 1], atol=1e-15)


def test_sparse_atlas_does_not_cover():
    three = nm.ChartAtlas.from_points([[np.cos(a), np.sin(a)] for a in 2 * np.pi * np.arange(3) / 3 + np.pi / 2])
    assert not three.covers()


@pytest.mark.parametrize("atlas,grid", [(ATLAS2, None), (ATLAS3, nm.centre_grid(3))])
def test_constant_norms(atlas, grid):
    c = -2.5
    f = lambda y: c + 0 * y[..., 0]
    for order in (0, 4, 10):
        assert nm.norm_R(f, 0.2, order, atlas, grid) == pytest.approx(atlas.n0 * abs(c), rel=1e-12)
    assert nm.norm_HR(f, 0.2, atlas, grid) == pytest.approx(atlas.n0 * abs(c), rel=1e-12)


def test_height_coefficients_at_pole():
    coeffs, _ = nm.taylor_coefficients(lambda y: y[..., 1], ATLAS2, 0, [[0.0]], 8)
    expected = [1, 0, -1 / 2, 0, -1 / 8, 0, -1 / 16, 0, -5 / 128]
    np.testing.assert_allclose(coeffs[0].real, expected, atol=1e-13)
    assert np.abs(coeffs.imag).max() <= 1e-13


def test_height_coefficients_at_pole_3d():
    coeffs, _ = nm.taylor_coefficients(lambda y: y[..., 2], ATLAS3, 0, [[0.0, 0.0]], 4)
    c = coeffs[0].real
    assert c[0, 0] == pytest.approx(1.0, abs=1e-13)
    assert c[2, 0] == pytest.approx(-0.5, abs=1e-12) and c[0, 2] == pytest.approx(-0.5, abs=1e-12)
    assert c[2, 2] == pytest.approx(-0.25, abs=1e-11)
    assert c[4, 0] == pytest.approx(-0.125, abs=1e-11)
    assert abs(c[1, 1]) <= 1e-12


@given(st.integers(0, 13), st.floats(0.05, 0.45))
def test_monotone_in_order(order, R):
    assert nm.norm_R(TRIG, R, order) <= nm.norm_R(TRIG, R, order + 1) * (1 + 1e-12)


@given(st.floats(0.05, 0.4), st.floats(0.0, 0.09))
def test_monotone_in_radius(R, dR):
    assert nm.norm_R(TRIG, R) <= nm.norm_R(TRIG, R + dR) * (1 + 1e-12)


@pytest.mark.parametrize("name,f", sorted(nm.default_test_set(2).items()))
@pytest.mark.parametrize("R", [0.1, 0.2, 0.3])
def test_sandwich_2d(name, f, R):
    assert nm.norm_R(f, R) <= nm.norm_HR(f, R) * (1 + 1e-9)


@pytest.mark.parametrize("name,f", sorted(nm.default_test_set(3).items()))
def test_sandwich_3d(name, f):
    grid = nm.centre_grid(3)
    assert nm.norm_R(f, 0.2, 8, ATLAS3, grid) <= nm.norm_HR(f, 0.2, ATLAS3, grid) * (1 + 1e-9)


def test_HR_dominates_interior_samples():
    R = 0.2
    grid = nm.centre_grid(2)
    rng = np.random.default_rng(3)
    w = R * np.sqrt(rng.uniform(size=200)) * np.exp(2j * np.pi * rng.uniform(size=200))
    total = 0.0
    for j in range(ATLAS2.n0):
        z = (grid[:, :1] + w[None, :])[..., None]
        total += float(np.abs(COS(ATLAS2.inverse(j, z))).max())
    assert total <= nm.norm_HR(COS, R)


def test_HR_cos_below_cosh_bound():
    # |Im phi| stays below arcsinh of the chart radius growth, so cosh(Im phi) bounds each chart
    R = 0.2
    value = nm.norm_HR(COS, R)
    grid = nm.centre_grid(2)
    w = R * np.exp(2j * np.pi * np.arange(256) / 256)
    worst = 0.0
    for j in range(ATLAS2.n0):
        y = ATLAS2.inverse(j, (grid[:, :1] + w[None, :])[..., None])
        phi = -1j * np.log(y[..., 0] + 1j * y[..., 1])
        worst = max(worst, float(np.abs(phi.imag).max()))
    assert value <= ATLAS2.n0 * math.cosh(worst)


def test_norm_report_fields():
    est = nm.norm_R(COS, 0.2, report=True)
    assert isinstance(est, nm.NormEstimate)
    assert est.stable_order <= est.order and len(est.per_chart) == ATLAS2.n0
    assert float(est) == pytest.approx(sum(est.per_chart))
    json.dumps(est.to_json())


def test_norm_R_domain():
    with pytest.raises(DomainError):
        nm.norm_R(COS, 0.6)
    with pytest.raises(ValidationError):
        nm.norm_R(COS, 0.2, order=15)


def test_no_complexification():
    bad = lambda y: float("nan") * y[..., 0]
    with pytest.raises(nm.UnsupportedInputError):
        nm.norm_HR(bad, 0.2)
    with pytest.raises(nm.UnsupportedInputError):
        nm.norm_R(bad, 0.2)


def test_lie_powers_match_finite_differences():
    # for Y = grad f on S^1 and f = cos, L_Y psi is a plain derivative in phi times |grad f|
    f, psi = COS, nm.from_angle(np.sin)
    grid = np.array([[0.1], [-0.2]])
    powers, field = nm.lie_power_coefficients(f, psi, 2, 8, ATLAS2, 0, grid)
    x = grid[:, 0]
    y = np.column_stack([x, np.sqrt(1 - x ** 2)])
    phi = np.arctan2(y[:, 1], y[:, 0])
    # grad cos on S^1 is -sin(phi) e_phi, so L_Y sin = -sin(phi) cos(phi)
    np.testing.assert_allclose(powers[1][:, 0].real, -np.sin(phi) * np.cos(phi), atol=1e-10)


def test_inequality_suite_2d():
    report = nm.inequality_suite(2)
    assert report.passed, [c.to_json() for c in report.checks if not c.passed]
    data = report.to_json()
    assert data["kind"] == "consistency tests"
    assert {"comparison", "product", "exponential", "gradient", "lie-power"} <= set(data["summary"])
    json.dumps(data)


def test_suite_rejects_large_ladder():
    with pytest.raises(DomainError):
        nm.inequality_suite(2, ladder=(0.1, 0.6))
