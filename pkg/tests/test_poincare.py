import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from finsler_zeta import geometry as g
from finsler_zeta import poincare as p
from finsler_zeta.errors import CutProximityError, DomainError

DISC = g.SupportBody.ball(2)
ELLIPSE = g.SupportBody.ellipsoid(np.diag([1.0, 1.3]))
ORIGIN = g.ConvexTarget.at_point([0.0, 0.0])
OFF = g.ConvexTarget.at_point([1.0, 1.0])
FAST = p.ContinuationConfig(xi_max=30.0)


def test_direct_matches_oracle():
    d = p.direct(DISC, OFF, 1.0)
    o = p.ball_point_oracle(2, [1.0, 1.0], 1.0)
    assert abs(d.value - o.value) <= 1e-6 * abs(o.value)
    assert d.tail <= 1e-10


@given(st.floats(0.5, 3.0), st.floats(-3.0, 3.0))
def test_direct_matches_oracle_random(sigma, tau):
    s = complex(sigma, tau)
    d = p.direct(DISC, OFF, s).value
    o = p.ball_point_oracle(2, [1.0, 1.0], s).value
    assert abs(d - o) <= 1e-6 * max(abs(o), 1e-3)


def test_direct_oracle_3d():
    ball3 = g.SupportBody.ball(3)
    x0 = [1.0, 0.5, 2.0]
    for s in (0.8, 1.2 + 0.7j):
        d = p.direct(ball3, g.ConvexTarget.at_point(x0), s).value
        o = p.ball_point_oracle(3, x0, s).value
        assert abs(d - o) <= 1e-6 * abs(o)


def test_direct_real_positive_and_decreasing():
    vals = [p.direct(ELLIPSE, OFF, s).value for s in (0.5, 1.0, 2.0, 4.0)]
    assert all(abs(v.imag) < 1e-14 and v.real > 0 for v in vals)
    assert all(abs(a) > abs(b) for a, b in zip(vals, vals[1:]))


def test_direct_requires_positive_real_part():
    with pytest.raises(DomainError):
        p.direct(DISC, OFF, -0.1 + 1j)


def test_length_distribution_first_shells():
    dist = p.length_distribution(DISC, ORIGIN, 3 * math.pi)
    assert [m for _, m in dist] == [4, 4]
    np.testing.assert_allclose([t for t, _ in dist], [2 * math.pi, 2 * math.pi * math.sqrt(2)], rtol=1e-14)
    assert p.length_distribution(DISC, ORIGIN, 6.0) == []


def test_length_distribution_against_direct():
    T = 40.0
    total = math.fsum(m * math.exp(-0.5 * t) for t, m in p.length_distribution(DISC, OFF, T))
    full = p.direct(DISC, OFF, 0.5, tol=1e-13).value.real
    bound = p.tail_bound(DISC, OFF, 0.5, T)
    assert 1e-12 < full - total <= bound + 1e-13


def test_windowed_count_wide_bump():
    lhs, rhs = p.windowed_count(DISC, ORIGIN, p.Bump(4.9, 3.9), xi_max=30)
    assert lhs > 1 and abs(lhs - rhs) <= 1e-5


def test_windowed_count_first_shell():
    eta = p.Bump(2 * math.pi, 0.5)
    lhs, rhs = p.windowed_count(DISC, ORIGIN, eta, xi_max=30)
    assert lhs == pytest.approx(4 * eta(2 * math.pi), rel=1e-14)
    # a narrow window leaves a frequency-truncation error of order 1e-3 at this cutoff
    assert abs(lhs - rhs) <= 2e-3


def test_windowed_count_empty_window():
    lhs, rhs = p.windowed_count(DISC, ORIGIN, p.Bump(3.0, 2.0), xi_max=30)
    assert lhs == 0.0 and abs(rhs) <= 1e-3


def test_windowed_count_ellipse_ball_target():
    target = g.ConvexTarget.from_body(g.SupportBody.ball(2, 0.2))
    lhs, rhs = p.windowed_count(ELLIPSE, target, p.Bump(4.9, 3.9), xi_max=30)
    assert abs(lhs - rhs) <= 1e-5


def test_mode_integral_unit_weight():
    one = lambda phi: np.ones_like(np.asarray(phi, dtype=float))
    val = p.mode_integral(DISC, ORIGIN, [0, 1], 0, 1.0, weight=one)
    assert val == pytest.approx(2 * math.pi / math.sqrt(2), rel=1e-12)


def test_mode_integral_derivative_relation():
    xi, s, h = [1, 2], 0.9 + 0.4j, 1e-4
    lam = math.sqrt(5)
    target = g.ConvexTarget.from_body(g.SupportBody.ball(2, 0.3), center=[1.0, 1.0])
    one = lambda phi: np.ones_like(np.asarray(phi, dtype=float))
    d0 = lambda s: p.mode_integral(DISC, target, xi, 0, s, weight=one)
    fd = (d0(s + h) - d0(s - h)) / (2 * h) * lam
    assert p.mode_integral(DISC, target, xi, 1, s, weight=one) == pytest.approx(-fd, rel=1e-5)


def test_mode_integral_continued_matches_direct():
    for s in (0.7 + 0.2j, 1.5 - 0.3j):
        a = p.mode_integral(ELLIPSE, OFF, [1, -1], 1, s, mode="direct")
        b = p.mode_integral(ELLIPSE, OFF, [1, -1], 1, s, mode="continued")
        assert abs(a - b) <= 1e-8 * abs(a)


def test_low_freq_empty():
    assert p.low_freq(DISC, ORIGIN, 1.0, 1) == 0


def test_pole_coefficients_disc():
    np.testing.assert_allclose(p.pole_coefficients(DISC, ORIGIN), [0.0, 1 / (2 * math.pi)], atol=1e-12)


def test_pole_part_from_mixed_volumes():
    target = g.ConvexTarget.from_body(g.SupportBody.ball(2, 0.3))
    v = g.minkowski_volume_poly(target, DISC)
    for s in (0.3, 1 + 2j):
        expected = sum(math.factorial(ell) * v[ell] / s ** ell for ell in range(1, 3)) / (2 * math.pi) ** 2
        assert p.pole_part(DISC, target, s) == pytest.approx(expected, rel=1e-8)


def test_pole_part_is_real_on_conjugates():
    target = g.ConvexTarget.from_body(g.SupportBody.ball(2, 0.3))
    s = 0.4 + 1.3j
    assert p.pole_part(DISC, target, s.conjugate()) == pytest.approx(np.conj(p.pole_part(DISC, target, s)))


def test_oracle_leading_pole():
    vals = [s ** 2 * p.ball_point_oracle(2, [1.0, 1.0], s).value for s in (0.02, 0.01)]
    assert vals[-1] == pytest.approx(1 / (2 * math.pi), rel=0.05)
    assert abs(vals[-1] - 1 / (2 * math.pi)) < abs(vals[0] - 1 / (2 * math.pi))


def test_oracle_blows_up_towards_first_branch_point():
    mags = [abs(p.ball_point_oracle(2, [1.0, 1.0], 0.1 + 1j * t).value) for t in (0.9, 0.98)]
    assert np.isfinite(mags).all() and mags[1] > mags[0]


def test_smooth_cutoff():
    chi = p.SmoothCutoff(3.0)
    assert chi(2.9) == 0.0 and chi(6.1) == 1.0
    assert 0 < chi(4.5) < 1
    t = np.linspace(3.1, 5.9, 7)
    fd = (chi(t + 1e-6) - chi(t - 1e-6)) / 2e-6
    np.testing.assert_allclose(chi.derivative(t), fd, rtol=1e-5, atol=1e-8)


@pytest.fixture(scope="module")
def total_at_half():
    return p.continued_total(DISC, OFF, 0.5, FAST)


def test_continued_total_matches_direct(total_at_half):
    d = p.direct(DISC, OFF, 0.5).value
    assert abs(total_at_half.value - d) <= 1e-5 * abs(d)
    parts = total_at_half.meta["parts"]
    assert set(parts) == {"entire", "pole", "low", "high"}


def test_continued_total_matches_oracle_in_strip():
    s = -0.05 + 0.5j
    val = p.continued_total(DISC, OFF, s, FAST).value
    assert abs(val - p.ball_point_oracle(2, [1.0, 1.0], s).value) <= 1e-4


def test_continued_total_continuous_across_axis():
    left = p.continued_total(DISC, OFF, -1e-7 + 0.5j, FAST).value
    right = p.continued_total(DISC, OFF, 1e-7 + 0.5j, FAST).value
    assert abs(left - right) <= 1e-5


def test_continued_total_rejects_cut():
    with pytest.raises(CutProximityError):
        p.continued_total(DISC, OFF, -0.1 + 1.0j, FAST)


def test_scan_finds_disc_spectrum():
    peaks, grid = p.scan_singularities(DISC, OFF, 0.05, (0.5, 2.2), 0.005)
    taus = sorted(pk.tau for pk in peaks if pk.prominence > 0.1 * max(x.prominence for x in peaks))
    for lam in (1.0, math.sqrt(2), 2.0):
        assert min(abs(t - lam) for t in taus) <= 0.02
    assert all(row[4] == "direct" for row in grid)


def test_branch_exponent_disc():
    fit = p.branch_exponent_fit(p.oracle_evaluator(2, [1.0, 1.0]), 1j)
    assert fit.exponent == pytest.approx(-1.5, abs=0.1) and fit.conclusive
