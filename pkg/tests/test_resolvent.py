import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from finsler_zeta import coarea as c
from finsler_zeta import geometry as g
from finsler_zeta import resolvent as r
from finsler_zeta.errors import OutOfRegionError

COS = c.CircleFunction.trig([(1, 1.0, 0.0)])
HEIGHT = c.SphereFunction.height()
TRIG_BODY = g.SupportBody.trig2d(1.0, [(3, 0.1, 0.0)])


def test_spectrum_interval():
    assert r.spectrum_interval(COS) == pytest.approx((-1.0, 1.0))
    lo, hi = r.spectrum_interval(c.CircleFunction.projection(g.SupportBody.ellipsoid(np.diag([1.0, 2.0])), [0, 1]))
    assert lo == pytest.approx(-2.0, abs=1e-12) and hi == pytest.approx(2.0, abs=1e-12)


def test_pairing_values():
    assert r.pairing(COS, None, None, 2.0) == pytest.approx(2 * math.pi / math.sqrt(3), rel=1e-12)
    val = r.pairing(COS, None, lambda phi: np.exp(1j * phi), 2.0)
    assert val == pytest.approx(2 * math.pi * (2 - math.sqrt(3)) / math.sqrt(3), rel=1e-12)


@given(st.floats(1.1, 10.0))
def test_pairing_positive_on_real_axis(z):
    val = r.pairing(COS, None, lambda phi: 1 + np.cos(phi) ** 2, z)
    assert abs(val.imag) < 1e-12 * abs(val) and val.real > 0


@given(st.floats(-3, 3), st.floats(0.2, 2.0))
def test_conjugate_symmetry(x, y):
    pr = r.Pairing(HEIGHT)
    z = complex(x, y)
    assert pr(z.conjugate()) == pytest.approx(np.conj(pr(z)), rel=1e-10)


def test_continued_pairing_other_branch():
    z = 0.1j
    val = r.continue_pairing(COS, None, None, z)
    other = 2 * math.pi / np.sqrt(complex(z * z - 1))
    assert min(abs(val - other), abs(val + other)) < 1e-8
    assert abs(val - r.pairing(COS, None, None, z)) > 1
    assert val == pytest.approx(r.pairing(COS, None, None, -z), rel=1e-8)


def test_continued_limit_on_cut():
    pr = r.Pairing(COS)
    below = c.cauchy_transform(pr.level_density, 0.4 - 1e-8j)
    assert pr.continued(0.4 + 1e-8j) == pytest.approx(below, abs=1e-5)


def test_continued_pairing_trig_body():
    fn = c.CircleFunction.projection(TRIG_BODY, [0.6, 0.8])
    z = complex(0.5 * (fn.fmin + fn.fmax), 0.05)
    val = r.continue_pairing(fn, None, None, z)
    assert abs(val - c.contour_integral(fn, None, z)) < 1e-7


def test_continuation_box_enforced():
    with pytest.raises(OutOfRegionError):
        r.continue_pairing(COS, None, None, 0.2 + 5j)
    with pytest.raises(OutOfRegionError):
        r.continue_pairing(COS, None, None, 1.5 + 0.1j)


def test_edge_exponent_circle():
    gamma, resid = r.edge_exponent(COS)
    assert gamma == pytest.approx(-0.5, abs=0.02)


def test_edge_log_coefficient_sphere():
    coef, resid = r.edge_exponent(HEIGHT)
    assert coef == pytest.approx(-2 * math.pi, rel=0.01)


def test_endpoint_decomposition_fits():
    dec = r.endpoint_decomposition(COS)
    assert dec.passed
    dec3 = r.endpoint_decomposition(HEIGHT)
    assert dec3.passed and dec3.log_coefficient == pytest.approx(-2 * math.pi, rel=0.01)


def test_vanishing_weight_suppresses_edge():
    weight = lambda phi: np.sin(phi / 2) ** 12
    dec = r.endpoint_decomposition(COS, None, weight, endpoint="max")
    assert abs(dec.H_at_edge) <= 1e-3 * 2 * math.pi


@pytest.mark.parametrize("fn", [COS, HEIGHT])
def test_resolvent_identity(fn):
    assert r.resolvent_identity_residual(fn, None, 2.0 + 0.5j, -1.5 + 1j) <= 1e-8


@pytest.mark.parametrize("z0", [0.1 + 0.1j, -0.4 + 0.2j, 0.5 + 0.05j])
def test_continued_pairing_holomorphic(z0):
    pr = r.Pairing(COS)
    assert r.cauchy_riemann_residual(pr.continued, z0) <= 1e-6
