import cmath
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from finsler_zeta import branch as b
from finsler_zeta.errors import DomainError


def test_log_det_values():
    assert b.log_det(0.0, math.e) == pytest.approx(1.0, abs=1e-15)
    assert b.log_det(math.pi / 2, -4j) == pytest.approx(math.log(4) - 0.5j * math.pi, abs=1e-14)


def test_log_det_on_cut():
    with pytest.raises(DomainError):
        b.log_det(0.0, -2.0)


@given(st.floats(-3.0, 3.0), st.floats(0.01, 100.0))
def test_log_det_agrees_on_positive_axis(theta, x):
    assert b.log_det(theta, x) == pytest.approx(math.log(x), abs=1e-13)


@given(st.floats(-1.4, 1.4), st.complex_numbers(max_magnitude=10, allow_nan=False, allow_infinity=False))
def test_exp_of_log_det(theta, z):
    if abs(z) < 1e-3 or abs(cmath.phase(z * cmath.exp(1j * theta))) > math.pi - 1e-3:
        return
    assert cmath.exp(b.log_det(theta, z)) == pytest.approx(z, rel=1e-12)
    assert b.sqrt_det(theta, z) ** 2 == pytest.approx(z, rel=1e-12)


@given(st.floats(-1.4, 1.4), st.floats(0.1, 5.0), st.floats(-1.5, 1.5))
def test_log_det_principal_near_positive_axis(theta, r, arg):
    z = r * cmath.exp(1j * arg)
    if abs(arg + theta) >= math.pi - 1e-6:
        return
    assert b.log_det(theta, z) == pytest.approx(cmath.log(z), abs=1e-13)


def test_F_quadrature_values():
    assert b.F_quadrature(0.0, 3.0) == pytest.approx(math.log(2), abs=1e-13)
    assert b.F_quadrature(-0.5, math.sqrt(2)) == pytest.approx(math.pi, abs=1e-13)
    assert b.F_quadrature(0.5, 2.0) == pytest.approx(2 * math.pi - math.sqrt(3) * math.pi, abs=1e-13)


def test_F_closed_values():
    assert b.F_closed(3, 3.0) == pytest.approx(math.log(2), abs=1e-14)
    assert b.F_closed(2, math.sqrt(2)) == pytest.approx(math.pi, abs=1e-14)
    assert b.F_closed(4, 2.0) == pytest.approx(2 * math.pi - math.sqrt(3) * math.pi, abs=1e-13)


def test_P_d_values():
    np.testing.assert_allclose(b.P_d(3), [0.0], atol=1e-15)
    np.testing.assert_allclose(b.P_d(4), [0.0, math.pi], atol=1e-14)
    np.testing.assert_allclose(b.P_d(5), [0.0, 2.0], atol=1e-14)


@pytest.mark.parametrize("d", [3, 4, 5, 6])
def test_P_d_extraction(d):
    coef, labels, resid = b.P_d_extract(d)
    assert resid <= 1e-10
    n = min(len(coef), len(b.P_d(d)))
    np.testing.assert_allclose(np.asarray(coef)[:n], b.P_d(d)[:n], atol=1e-9)


@pytest.mark.parametrize("gamma,expected", [(0.0, 2.0), (-0.5, math.pi), (0.5, math.pi / 2)])
def test_recurrence(gamma, expected):
    cg, resid = b.recurrence_check(gamma, [3.0, 2 + 1j, -1.5 - 0.5j, 0.2 + 1.2j])
    assert cg == pytest.approx(expected, rel=1e-13)
    assert resid <= 1e-12


def _far_from_segment():
    return st.complex_numbers(max_magnitude=4, allow_nan=False, allow_infinity=False).filter(
        lambda z: abs(z.imag) >= 0.5 or abs(z.real) >= 1.5).filter(
        lambda z: abs(z.imag) > 1e-9 or z.real > 1)


@given(_far_from_segment(), st.integers(2, 7))
def test_closed_form_matches_quadrature(zeta, d):
    q = b.F_quadrature((d - 3) / 2, zeta)
    assert abs(b.F_closed(d, zeta) - q) <= 1e-10 * max(1.0, abs(q))


def test_closed_form_rejects_cut():
    with pytest.raises(DomainError):
        b.F_closed(3, -2.0)


def test_contour_straight_segment():
    assert b.F_contour(0.0, 3.0, [-1, 1]) == pytest.approx(b.F_quadrature(0.0, 3.0), abs=1e-12)


@pytest.mark.parametrize("gamma", [0.0, -0.5, 0.5])
def test_contour_residue(gamma):
    dip = [-1, -1 - 0.5j, 1 - 0.5j, 1]
    zeta = 0.2 - 0.1j
    shift = b.F_contour(gamma, zeta, dip) - b.F_quadrature(gamma, zeta)
    residue = 2j * math.pi * (1 - zeta ** 2) ** gamma
    assert min(abs(shift - residue), abs(shift + residue)) < 1e-9


def test_contour_without_crossing():
    dip = [-1, -1 - 0.5j, 1 - 0.5j, 1]
    assert abs(b.F_contour(0.5, 0.2 + 0.1j, dip) - b.F_quadrature(0.5, 0.2 + 0.1j)) < 1e-10


def test_loop_around_plus_one_odd():
    ctx = b.BranchContext.start(3, 3.0)
    after = b.continue_along_path(ctx, b.loop_around(3.0, 1.0, 0.5))
    assert after.windings == (0, 1)
    shift = after.value - ctx.value
    assert abs(abs(shift) - 2 * math.pi) < 1e-10 and abs(shift.real) < 1e-10
    assert shift == pytest.approx(b.monodromy_shift(3, 3.0, 0, 1), abs=1e-10)


def test_odd_shift_formula():
    ctx = b.BranchContext.start(5, 2.0 + 0.5j)
    path = b.loop_around(ctx.zeta, -1.0, 0.4) + b.loop_around(ctx.zeta, 1.0, 0.4, turns=-2)[1:]
    after = b.continue_along_path(ctx, path)
    wp, wm = after.windings
    assert (wp, wm) == (1, -2)
    assert after.value - ctx.value == pytest.approx(b.monodromy_shift(5, ctx.zeta, wp, wm), abs=1e-9)


def test_even_double_loop_returns():
    ctx = b.BranchContext.start(2, 3.0)
    once = b.continue_along_path(ctx, b.loop_around(3.0, 1.0, 0.5))
    twice = b.continue_along_path(ctx, b.loop_around(3.0, 1.0, 0.5, turns=2))
    assert abs(once.value - ctx.value) > 1
    assert abs(twice.value - ctx.value) < 1e-10


def test_trivial_loop():
    ctx = b.BranchContext.start(3, 3.0)
    after = b.continue_along_path(ctx, b.loop_around(3.0, 4.0, 0.5))
    assert abs(after.value - ctx.value) < 1e-10


@given(st.integers(-2, 2), st.integers(-2, 2), st.integers(-2, 2), st.integers(-2, 2))
def test_loop_composition(a1, a2, b1, b2):
    base = 0.3 + 2.0j
    ctx = b.BranchContext.start(3, base)

    def loop(wp, wm):
        path = [base]
        if wp:
            path += b.loop_around(base, -1.0, 0.5, turns=wp, n=24)[1:]
        if wm:
            path += b.loop_around(base, 1.0, 0.5, turns=wm, n=24)[1:]
        return path

    first, second = loop(a1, b1), loop(a2, b2)
    stepwise = b.continue_along_path(b.continue_along_path(ctx, first), second)
    joined = b.continue_along_path(ctx, first + second[1:])
    assert stepwise.value == pytest.approx(joined.value, abs=1e-10)
    assert stepwise.windings == (a1 + a2, b1 + b2)


def test_path_through_branch_point():
    with pytest.raises(DomainError):
        b.continue_along_path(b.BranchContext.start(3, 3.0), [3.0, -3.0])
