"""Resolvent pairings of multiplication operators on the sphere.

For a Morse function f with two critical points the operator of
multiplication by f has spectrum [min f, max f], and

    <(z - m_f)^{-1} phi_2, phi_1> = integral phi_2 conj(phi_1) / (z - f).

The pairing continues across the open spectrum to a second sheet; near the
spectral edges it splits as H(z) F_d(z) + R(z) with H, R holomorphic and
F_d the model singularity of the branch module.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import coarea
from .branch import F_closed
from .errors import DomainError, NumericError, OutOfRegionError


def spectrum_interval(fn):
    return fn.fmin, fn.fmax


def pairing_weight(phi1, phi2):
    """G = phi_2 * conj(phi_1), written so that it stays holomorphic off the real sphere."""
    one = lambda x: 1.0
    phi1 = phi1 or one
    phi2 = phi2 or one

    def G(x):
        x = np.asarray(x)
        return phi2(x) * np.conj(phi1(np.conj(x)))
    return G


@dataclass
class Pairing:
    """<(z - m_f)^{-1} phi_2, phi_1> with the level-density model built once."""

    fn: object
    phi1: object = None
    phi2: object = None
    delta: float | None = None
    margin: float = 0.3
    _ld: object = field(default=None, repr=False)

    @property
    def G(self):
        if self.phi1 is None and self.phi2 is None:
            return None
        return pairing_weight(self.phi1, self.phi2)

    @property
    def level_density(self):
        if self._ld is None:
            self._ld = coarea.density_fit(self.fn, self.G, self.delta)
        return self._ld

    def __call__(self, z, ell: int = 0):
        """ell-th z-derivative of the pairing on the first sheet (sphere quadrature)."""
        return coarea.direct_integral(self.fn, self.G, z, ell)

    def in_box(self, z) -> bool:
        z = complex(z)
        span = self.fn.fmax - self.fn.fmin
        return self.fn.fmin < z.real < self.fn.fmax and 0 <= z.imag <= self.margin * span

    def continued(self, z, ell: int = 0):
        """Value continued upward through the open spectrum (second sheet)."""
        z = complex(z)
        if not self.in_box(z):
            raise OutOfRegionError("z outside the continuation box above the spectrum", z=str(z))
        try:
            return coarea.second_sheet(self.level_density, z, ell)
        except NumericError as exc:
            raise OutOfRegionError("continuation not certified at z", z=str(z)) from exc


def pairing(fn, phi1, phi2, z, ell: int = 0):
    return Pairing(fn, phi1, phi2)(z, ell)


def continue_pairing(fn, phi1, phi2, z, ell: int = 0):
    return Pairing(fn, phi1, phi2).continued(z, ell)


# ---------------------------------------------------------------------------
# edge behaviour


@dataclass
class EdgeDecomposition:
    endpoint: float
    exponent: float
    H: np.ndarray
    R: np.ndarray
    points: np.ndarray
    H_at_edge: complex
    log_coefficient: complex | None
    residual: float
    passed: bool


def _model(fn, z):
    """F_d for the spectrum rescaled to [-1, 1]."""
    d = fn.dim
    zeta = (2 * z - (fn.fmin + fn.fmax)) / (fn.fmax - fn.fmin)
    return np.array([F_closed(d, complex(w)) for w in np.atleast_1d(zeta)])


def endpoint_decomposition(fn, phi1=None, phi2=None, endpoint: str = "max", radius: float | None = None,
                           degree: int = 6, n_r: int = 8, n_a: int = 16, tol: float = 1e-6):
    """Least-squares split pairing = H F_d + R on a half-disc around a spectral edge.

    H and R are polynomials of the given degree in (z - c).  Samples lie on
    the outer side of the edge, where the first sheet is analytic apart from
    the model singularity at c.  The fit certifies the singularity type when
    the relative residual is below tol.
    """
    pr = Pairing(fn, phi1, phi2)
    span = fn.fmax - fn.fmin
    c = fn.fmax if endpoint == "max" else fn.fmin
    radius = radius or 0.2 * span
    r = radius * np.geomspace(0.05, 1.0, n_r)
    base = 0.0 if endpoint == "max" else np.pi
    alpha = base + np.linspace(-0.45 * np.pi, 0.45 * np.pi, n_a)
    pts = (c + r[:, None] * np.exp(1j * alpha[None, :])).ravel()
    vals = np.array([pr(z) for z in pts])
    model = _model(fn, pts)
    u = (pts - c) / radius
    powers = np.stack([u ** k for k in range(degree + 1)], axis=1)
    design = np.hstack([powers * model[:, None], powers])
    coef, *_ = np.linalg.lstsq(design, vals, rcond=None)
    resid = float(np.abs(design @ coef - vals).max() / np.abs(vals).max())
    h, rr = coef[: degree + 1], coef[degree + 1:]
    gamma = (fn.dim - 3) / 2
    # for d = 3, F_3 = ln(zeta + 1) - ln(zeta - 1): ln(z - c) enters with -H(c) at the top edge
    log_coef = None
    if fn.dim == 3:
        log_coef = complex(-h[0] if endpoint == "max" else h[0])
    return EdgeDecomposition(c, gamma, powers @ h, powers @ rr, pts, complex(h[0]), log_coef,
                             resid, resid <= tol)


def edge_exponent(fn, phi1=None, phi2=None, endpoint: str = "max", r_range=(1e-6, 1e-2), n: int = 25):
    """Growth of the pairing along the real ray leaving the spectrum at an edge.

    d = 2: slope of ln|pairing| against ln r, with smooth corrections in sqrt(r).
    d = 3: coefficient of ln r in pairing = a ln r + b + r (c ln r + e).
    Returns (value, fit residual).
    """
    ld = Pairing(fn, phi1, phi2).level_density
    r = np.geomspace(*r_range, n)
    sgn = 1.0 if endpoint == "max" else -1.0
    c = fn.fmax if endpoint == "max" else fn.fmin
    # so close to the edge the sphere quadrature would need huge grids; the
    # Jacobi-weighted Cauchy transform of the level density resolves it
    vals = np.array([coarea.cauchy_transform(ld, c + sgn * x) for x in r])
    if fn.dim == 2:
        design = np.column_stack([np.log(r)] + [r ** (k / 2) for k in range(4)])
        y = np.log(np.abs(vals))
    else:
        design = np.column_stack([np.log(r), np.ones_like(r), r * np.log(r), r])
        y = np.real(vals)
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    resid = float(np.abs(design @ coef - y).max())
    return float(coef[0]), resid


def cauchy_riemann_residual(func, z0, h: float = 1e-3, degree: int = 3):
    """Relative size of d/dz-bar of a local polynomial fit on a 5 x 5 stencil."""
    k = np.arange(-2, 3)
    xx, yy = np.meshgrid(k * h, k * h, indexing="ij")
    pts = (z0 + xx + 1j * yy).ravel()
    vals = np.array([func(z) for z in pts])
    x, y = (pts - z0).real / h, (pts - z0).imag / h
    terms = [(i, j) for i in range(degree + 1) for j in range(degree + 1 - i)]
    design = np.column_stack([x ** i * y ** j for i, j in terms])
    coef, *_ = np.linalg.lstsq(design, vals, rcond=None)
    # at the centre only the linear terms contribute to the derivatives
    dx = coef[terms.index((1, 0))] / h
    dy = coef[terms.index((0, 1))] / h
    dbar = 0.5 * (dx + 1j * dy)
    scale = max(abs(0.5 * (dx - 1j * dy)), abs(vals).max() / max(abs(z0), 1.0), 1e-300)
    return float(abs(dbar) / scale)


def resolvent_identity_residual(fn, G, z1, z2):
    """|I(z1) - I(z2) - (z2 - z1) integral G / ((z1 - f)(z2 - f))| relative, by sphere quadrature."""
    ld = coarea.density_fit(fn, G)
    lhs = coarea.cauchy_transform(ld, z1) - coarea.cauchy_transform(ld, z2)
    if fn.dim == 2:
        n = 4096
        phi = 2 * np.pi * np.arange(n) / n
        fv, g, w = np.real(fn.f(phi)), coarea._g_eval(fn, G, phi), 2 * np.pi / n
    else:
        from .geometry import sphere_grid
        pts, w = sphere_grid(3, 128)
        fv, g = np.real(fn.value(pts)), coarea._g_eval(fn, G, pts)
    rhs = (z2 - z1) * np.sum(w * g / ((z1 - fv) * (z2 - fv)))
    return float(abs(lhs - rhs) / abs(lhs))
