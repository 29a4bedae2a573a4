"""Level-set densities of Morse functions on S^1 and S^2, and their transforms.

For a Morse function f with two critical points and a weight G on the
sphere, the coarea density is

    J(tau) = integral over {f = tau} of G / |grad f|,

so that integral of G / (z - f) over the sphere = integral of J(tau) / (z - tau).
This module evaluates J (directly and as a piecewise Chebyshev model),
continues it to complex arguments, and evaluates the Cauchy transform on
its first sheet and across the cut.

Circle functions are handled through the angle phi.  On S^2 the two critical
points are antipodal (+-axis) and level sets are parametrised over meridians
theta(r, psi) = -cos r axis + sin r (cos psi e1 + sin psi e2), along which f
increases from min f (r = 0) to max f (r = pi).
"""

from __future__ import annotations

import math
from functools import lru_cache
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import chebyshev as C
from scipy.linalg import sqrtm
from scipy.fft import dct
from scipy.optimize import brentq

from .branch import _jacobi
from .errors import DomainError, NumericError, OutOfRegionError, ValidationError
from .geometry import SupportBody, sphere_grid

# Continuing the Cauchy transform upward through the open segment adds
# SECOND_SHEET_SIGN * 2 pi i * J(z).  Calibrated against contour-deformed
# quadrature by calibrate_second_sheet_sign(); frozen here.
SECOND_SHEET_SIGN = 1


# ---------------------------------------------------------------------------
# Morse functions


class CircleFunction:
    """Morse function on S^1 given through the angle, holomorphic in phi."""

    dim = 2

    def __init__(self, f, df, d2f, name: str = "f", crit=None):
        self.f, self.df, self.d2f, self.name = f, df, d2f, name
        if crit is None:
            crit = self._find_critical()
        self.phi_min, self.phi_max = crit
        self.fmin = float(np.real(f(self.phi_min)))
        self.fmax = float(np.real(f(self.phi_max)))
        if not self.fmin < self.fmax:
            raise ValidationError("f must be nonconstant")
        for p in crit:
            if abs(np.real(d2f(p))) < 1e-8:
                raise ValidationError("degenerate critical point")
        # the increasing arc runs phi_min -> phi_max, the decreasing one phi_max -> phi_min + 2 pi
        up_end = self.phi_max if self.phi_max > self.phi_min else self.phi_max + 2 * np.pi
        self.arc_up = (self.phi_min, up_end)
        self.arc_down = (up_end, self.phi_min + 2 * np.pi)

    def _find_critical(self):
        phi = np.linspace(0, 2 * np.pi, 4097)
        d = np.real(self.df(phi))
        roots = []
        for i in range(4096):
            if d[i] == 0:
                roots.append(phi[i])
            elif d[i] * d[i + 1] < 0:
                roots.append(brentq(lambda p: np.real(self.df(p)), phi[i], phi[i + 1], xtol=1e-15))
        if len(roots) != 2:
            raise ValidationError(f"f must have exactly two critical points, found {len(roots)}")
        vals = [np.real(self.f(r)) for r in roots]
        return (roots[0], roots[1]) if vals[0] < vals[1] else (roots[1], roots[0])

    @classmethod
    def trig(cls, terms, name: str = "trig"):
        """f(phi) = sum a cos(k phi) + b sin(k phi) over (k, a, b)."""
        terms = [(int(k), float(a), float(b)) for k, a, b in terms]

        def deriv(n):
            def g(phi):
                phi = np.asarray(phi)
                out = 0.0 * phi
                for k, a, b in terms:
                    if k == 0:
                        out = out + (a if n == 0 else 0.0)
                        continue
                    arg = k * phi + n * np.pi / 2
                    out = out + k ** n * (a * np.cos(arg) + b * np.sin(arg))
                return out
            return g

        obj = cls(deriv(0), deriv(1), deriv(2), name)
        obj.terms = terms
        return obj

    @classmethod
    def projection(cls, body: SupportBody, omega):
        """f(phi) = omega . v(theta(phi)) for a planar body."""
        omega = np.asarray(omega, dtype=float)
        omega = omega / np.linalg.norm(omega)
        f = lambda p: body.circle_boundary(p)[0] @ omega
        df = lambda p: body.circle_boundary(p)[1] @ omega
        d2f = lambda p: body.circle_boundary2(p) @ omega
        a = math.atan2(omega[1], omega[0])
        obj = cls(f, df, d2f, "omega.v", crit=((a + np.pi) % (2 * np.pi), a % (2 * np.pi)))
        obj.body, obj.omega = body, omega
        return obj

    # roots of f = tau on the two monotone arcs
    def level_points(self, tau):
        """Real solutions (phi_up, phi_down) of f(phi) = tau; tau interior."""
        tau = np.asarray(tau, dtype=float)
        out = []
        for lo, hi, sgn in ((*self.arc_up, 1.0), (*self.arc_down, -1.0)):
            a = np.full(tau.shape, lo)
            b = np.full(tau.shape, hi)
            for _ in range(64):
                m = 0.5 * (a + b)
                above = sgn * (np.real(self.f(m)) - tau) > 0
                b = np.where(above, m, b)
                a = np.where(above, a, m)
            p = 0.5 * (a + b)
            for _ in range(2):
                step = (np.real(self.f(p)) - tau) / np.real(self.df(p))
                q = p - step
                p = np.where((q > a - 1e-12) & (q < b + 1e-12), q, p)
            out.append(p)
        return out[0], out[1]

    def track_roots(self, z, steps: int | None = None):
        """Complex solutions of f(phi) = z continued from the real roots at Re z."""
        z = np.asarray(z, dtype=complex)
        x = np.clip(z.real, self.fmin + 1e-14, self.fmax - 1e-14)
        roots = list(self.level_points(x))
        # straight path from the real point to z (also absorbs clipping)
        nstep = steps or int(np.clip(np.ceil(np.abs(z - x).max() / 0.01), 1, 4000))
        out = []
        for p in roots:
            p = p.astype(complex)
            for k in range(1, nstep + 1):
                target = x + (z - x) * k / nstep
                for _ in range(30):
                    dp = (self.f(p) - target) / self.df(p)
                    p = p - dp
                    if np.all(np.abs(dp) <= 1e-15 * (1 + np.abs(p))):
                        break
                else:
                    if np.max(np.abs(dp)) > 1e-10:
                        raise NumericError("complex root tracking failed", z=str(z))
            out.append(p)
        return out[0], out[1]


class SphereFunction:
    """omega.v on S^2 for a ball or ellipsoid (height function for the unit ball)."""

    dim = 3

    def __init__(self, body: SupportBody, axis, name: str = "omega.v"):
        if body.dim != 3 or body.family == "trig2d":
            raise ValidationError("S^2 functions need a 3-d ball or ellipsoid")
        axis = np.asarray(axis, dtype=float)
        self.axis = axis / np.linalg.norm(axis)
        self.body, self.name = body, name
        a = np.zeros(3)
        a[np.argmin(np.abs(self.axis))] = 1
        e1 = a - (a @ self.axis) * self.axis
        self.e1 = e1 / np.linalg.norm(e1)
        self.e2 = np.cross(self.axis, self.e1)
        self.fmin = -float(body.support(-self.axis))
        self.fmax = float(body.support(self.axis))
        r = np.linspace(0.01, np.pi - 0.01, 200)
        psi = np.linspace(0, 2 * np.pi, 64, endpoint=False)
        rr, pp = np.meshgrid(r, psi, indexing="ij")
        if np.min(np.real(self.dr(rr, pp))) <= 0:
            raise ValidationError("f is not monotone along meridians")

    @classmethod
    def height(cls, axis=(0.0, 0.0, 1.0)):
        return cls(SupportBody.ball(3), axis, "height")

    def value(self, pts):
        return self.body.gradient(pts) @ self.axis

    def grad(self, pts):
        """Tangential gradient H(theta) axis (real points)."""
        return self.body.hessian(pts) @ self.axis

    def meridian(self, r, psi):
        r, psi = np.asarray(r), np.asarray(psi)
        e = np.cos(psi)[..., None] * self.e1 + np.sin(psi)[..., None] * self.e2
        return -np.cos(r)[..., None] * self.axis + np.sin(r)[..., None] * e

    def meridian_dr(self, r, psi):
        r, psi = np.asarray(r), np.asarray(psi)
        e = np.cos(psi)[..., None] * self.e1 + np.sin(psi)[..., None] * self.e2
        return np.sin(r)[..., None] * self.axis + np.cos(r)[..., None] * e

    def f_meridian(self, r, psi):
        return self.value(self.meridian(r, psi))

    def dr(self, r, psi):
        th = self.meridian(r, psi)
        return np.einsum("...i,...i->...", self.body.hessian(th) @ self.axis, self.meridian_dr(r, psi))

    def d2r(self, r, psi, h=1e-4):
        return (self.dr(r + h, psi) - self.dr(r - h, psi)) / (2 * h)

    def level_radius(self, tau, psi):
        """Real r in (0, pi) with f(theta(r, psi)) = tau, broadcasting tau and psi."""
        tau, psi = np.broadcast_arrays(np.asarray(tau, dtype=float), np.asarray(psi, dtype=float))
        a = np.zeros(tau.shape)
        b = np.full(tau.shape, np.pi)
        for _ in range(60):
            m = 0.5 * (a + b)
            above = np.real(self.f_meridian(m, psi)) > tau
            b = np.where(above, m, b)
            a = np.where(above, a, m)
        r = 0.5 * (a + b)
        for _ in range(2):
            q = r - (np.real(self.f_meridian(r, psi)) - tau) / np.real(self.dr(r, psi))
            r = np.where((q > a - 1e-12) & (q < b + 1e-12), q, r)
        return r

    def track_radius(self, z, psi, steps: int | None = None):
        """Complex r(z, psi) continued from the real level radius at Re z."""
        z = np.asarray(z, dtype=complex)
        z, psi = np.broadcast_arrays(z, np.asarray(psi, dtype=float))
        x = np.clip(z.real, self.fmin + 1e-14, self.fmax - 1e-14)
        r = self.level_radius(x, psi).astype(complex)
        nstep = steps or int(np.clip(np.ceil(np.abs(z - x).max() / 0.01), 1, 4000))
        for k in range(1, nstep + 1):
            target = x + (z - x) * k / nstep
            for _ in range(30):
                dr = (self.f_meridian(r, psi) - target) / self.dr(r, psi)
                r = r - dr
                if np.all(np.abs(dr) <= 1e-15 * (1 + np.abs(r))):
                    break
            else:
                if np.max(np.abs(dr)) > 1e-10:
                    raise NumericError("complex level tracking failed")
        return r


def _const_one(x):
    x = np.asarray(x)
    return np.ones(x.shape[:-1] if x.ndim and x.shape[-1] == 3 else x.shape,
                   dtype=complex if np.iscomplexobj(x) else float)


def _g_eval(fn, G, pts_or_phi):
    return (_const_one if G is None else G)(pts_or_phi)


# ---------------------------------------------------------------------------
# densities


def density(fn, G, tau, n_psi: int = 64):
    """J(tau) for min f < tau < max f (array tau allowed)."""
    tau = np.asarray(tau, dtype=float)
    if np.any(tau <= fn.fmin) or np.any(tau >= fn.fmax):
        raise DomainError("tau must lie strictly between the critical values")
    if fn.dim == 2:
        pu, pd = fn.level_points(tau)
        return (_g_eval(fn, G, pu) / np.real(fn.df(pu)) - _g_eval(fn, G, pd) / np.real(fn.df(pd)))
    return _density_sphere(fn, G, tau, n_psi)


def _density_sphere(fn, G, tau, n_psi, tol=1e-14, n_max=2048):
    def rule(n):
        psi = 2 * np.pi * np.arange(n) / n
        r = fn.level_radius(tau[..., None], psi)
        integrand = _g_eval(fn, G, fn.meridian(r, psi)) * np.sin(r) / np.real(fn.dr(r, psi))
        return integrand.mean(axis=-1) * 2 * np.pi

    n = n_psi
    prev = rule(n)
    while True:
        cur = rule(2 * n)
        if np.max(np.abs(cur - prev) / np.maximum(np.abs(cur), 1e-300), initial=0) <= tol or 2 * n >= n_max:
            return cur
        n *= 2
        prev = cur


def density_complex(fn, G, z, n_psi: int = 64):
    """J(z) by continuing the level set to complex z (root tracking)."""
    z = np.asarray(z, dtype=complex)
    if fn.dim == 2:
        pu, pd = fn.track_roots(z)
        return _g_eval(fn, G, pu) / fn.df(pu) - _g_eval(fn, G, pd) / fn.df(pd)
    out = None
    for n in (n_psi, 2 * n_psi, 4 * n_psi):
        psi = 2 * np.pi * np.arange(n) / n
        r = fn.track_radius(z[..., None], psi)
        val = (_g_eval(fn, G, fn.meridian(r, psi)) * np.sin(r) / fn.dr(r, psi)).mean(axis=-1) * 2 * np.pi
        if out is not None and np.max(np.abs(val - out) / np.maximum(np.abs(val), 1e-300), initial=0) < 1e-13:
            return val
        out = val
    return out


def density_derivative_complex(fn, G, z, order: int, radius: float | None = None, m: int = 48):
    """J^{(order)}(z) by a Cauchy integral over a small circle of tracked values."""
    z = complex(z)
    if order == 0:
        return complex(density_complex(fn, G, z))
    dist = min(abs(z - fn.fmin), abs(z - fn.fmax))
    radius = radius or min(0.4 * dist, 0.1)
    k = np.arange(m)
    pts = z + radius * np.exp(2j * np.pi * k / m)
    vals = density_complex(fn, G, pts)
    coeff = np.mean(vals * np.exp(-2j * np.pi * k * order / m)) / radius ** order
    return complex(math.factorial(order) * coeff)


# ---------------------------------------------------------------------------
# Chebyshev model


@dataclass
class Piece:
    """Chebyshev series of J on [a, b]; rho is the fitted Bernstein parameter and
    tail the relative size of the last coefficients (truncation level)."""

    a: float
    b: float
    coef: np.ndarray
    rho: float
    tail: float = 1e-16

    def u_of(self, z):
        return (2 * np.asarray(z) - (self.a + self.b)) / (self.b - self.a)

    def __call__(self, z):
        return C.chebval(self.u_of(z), self.coef)

    def derivative(self, n):
        if n == 0:
            return self.coef
        return C.chebder(self.coef, n) * (2 / (self.b - self.a)) ** n

    def continuation_error(self, z):
        """Predicted relative error of the series at complex z (inf if uncertified)."""
        u = self.u_of(z)
        rho_z = abs(u + np.sqrt(u - 1 + 0j) * np.sqrt(u + 1 + 0j))
        rho_z = max(rho_z, 1 / rho_z)
        if rho_z > self.rho / 1.5:
            return np.inf
        return self.tail * rho_z ** len(self.coef)


@dataclass
class EndPiece(Piece):
    """J = |tau - c|^gamma A(tau) on [a, b], c the critical value at one end; coef models A."""

    crit: float = 0.0
    gamma: float = 0.0

    @property
    def at_min(self):
        return self.crit == self.a

    def prefactor(self, z):
        return C.chebval(self.u_of(z), self.coef)

    def __call__(self, z):
        z = np.asarray(z)
        dist = (z - self.crit) if self.at_min else (self.crit - z)
        if np.iscomplexobj(z) or self.gamma == int(self.gamma):
            return np.power(dist + 0j, self.gamma) * self.prefactor(z)
        return np.abs(dist) ** self.gamma * self.prefactor(z)


def _bernstein_rho(coef, floor=1e-14):
    """Geometric decay rate of Chebyshev coefficients (fit to the upper envelope)."""
    mag = np.abs(coef)
    scale = mag.max()
    if scale == 0:
        return np.inf
    env = np.maximum.accumulate(mag[::-1])[::-1] / scale
    k = np.nonzero(env > floor)[0]
    if len(k) < 3:
        return np.inf
    slope = np.polyfit(k, np.log(env[k]), 1)[0]
    return float(np.exp(-slope)) if slope < 0 else 1.0


def _cheb_interp(func, deg, a, b):
    """Interpolant at Chebyshev points of the first kind via a type-II DCT."""
    n = deg + 1
    x = np.cos(np.pi * (np.arange(n) + 0.5) / n)
    vals = np.asarray(func((a + b) / 2 + (b - a) / 2 * x))
    if np.iscomplexobj(vals):
        c = (dct(vals.real, type=2) + 1j * dct(vals.imag, type=2)) / n
    else:
        c = dct(vals.astype(float), type=2) / n
    c[0] /= 2
    return c


def _fit_cheb(func, a, b, tol=1e-14, deg0=16, deg_max=512):
    """Chebyshev coefficients of func on [a, b], degree doubled until the tail is below tol."""
    deg = deg0
    while True:
        c = _cheb_interp(func, deg, a, b)
        scale = max(np.abs(c).max(), 1e-300)
        tail = np.abs(c[-3:]).max() / scale
        if tail <= tol:
            # coefficients below the rounding level only carry noise into continuation
            env = np.maximum.accumulate(np.abs(c)[::-1])[::-1] / scale
            keep = max(int(np.count_nonzero(env > 1e-15)), 1)
            return c[:keep], max(float(env[keep]) if keep < len(c) else tail, 1e-16)
        if deg >= deg_max:
            raise NumericError("Chebyshev tail did not decay: insufficient degree or hidden singularity",
                               interval=(a, b), tail=float(tail))
        deg *= 2


def _partition(lo, hi, fmin, fmax, ratio=0.25):
    """Bisect [lo, hi] until every half-width is <= ratio * distance to the nearest critical value."""
    out = []
    stack = [(lo, hi)]
    while stack:
        a, b = stack.pop()
        if (b - a) / 2 <= ratio * min(a - fmin, fmax - b):
            out.append((a, b))
        else:
            m = 0.5 * (a + b)
            stack.extend([(m, b), (a, m)])
    return sorted(out)


@dataclass
class LevelDensity:
    """Piecewise Chebyshev model of J on [min f, max f]."""

    fn: object
    G: object
    delta: float
    pieces: list
    ends: list
    exponent: float
    meta: dict = field(default_factory=dict)

    @property
    def fmin(self):
        return self.fn.fmin

    @property
    def fmax(self):
        return self.fn.fmax

    def __call__(self, tau):
        tau = np.asarray(tau, dtype=float)
        cplx = any(np.iscomplexobj(p.coef) for p in self.pieces + self.ends)
        out = np.zeros(tau.shape, dtype=complex if cplx else float)
        for p in self.pieces + self.ends:
            m = (tau >= p.a) & (tau <= p.b)
            v = p(tau[m])
            out[m] = v if cplx else np.real(v)
        return out

    def to_json(self) -> dict:
        return {
            "delta": self.delta,
            "exponent": self.exponent,
            "critical_values": [self.fmin, self.fmax],
            "pieces": [{"a": p.a, "b": p.b, "rho": p.rho, "tail": p.tail, "coefficients": p.coef.tolist()}
                       for p in self.pieces],
            "ends": [{"a": e.a, "b": e.b, "critical_value": e.crit, "exponent": e.gamma,
                      "rho": e.rho, "prefactor_coefficients": e.coef.tolist()} for e in self.ends],
        }


def density_fit(fn, G=None, delta: float | None = None, tol: float = 1e-13) -> LevelDensity:
    """Adaptive piecewise Chebyshev model of J plus endpoint prefactor models."""
    span = fn.fmax - fn.fmin
    delta = delta or 0.05 * span
    if not 0 < delta < span / 4:
        raise DomainError("delta must lie in (0, (max f - min f)/4)")
    gamma = (fn.dim - 3) / 2
    lo, hi = fn.fmin + delta, fn.fmax - delta
    pieces = []
    for a, b in _partition(lo, hi, fn.fmin, fn.fmax):
        coef, tail = _fit_cheb(lambda t: density(fn, G, t), a, b, tol)
        pieces.append(Piece(a, b, coef, _bernstein_rho(coef), tail))
    ends = []
    for a, b, crit in ((fn.fmin, lo, fn.fmin), (hi, fn.fmax, fn.fmax)):
        def pref(t, a=a, b=b, crit=crit):
            t = np.clip(t, a + 1e-13 * span, b - 1e-13 * span)
            return density(fn, G, t) / np.abs(t - crit) ** gamma
        coef, tail = _fit_cheb(pref, a, b, max(tol, 1e-12))
        ends.append(EndPiece(a, b, coef, _bernstein_rho(coef), tail, crit=crit, gamma=gamma))
    return LevelDensity(fn, G, delta, pieces, ends, gamma)


def _certified_piece(ld: LevelDensity, z, tol):
    errs = [p.continuation_error(z) for p in ld.pieces]
    k = int(np.argmin(errs))
    if not errs[k] <= tol:
        raise OutOfRegionError("z outside every certified Bernstein ellipse", z=str(z))
    return ld.pieces[k]


def density_continue(ld: LevelDensity, z, tol: float = 1e-9, cross_check: bool = False):
    """J(z) from the Chebyshev model inside a certified Bernstein ellipse.

    A piece of degree n with relative tail eps certifies z when z lies inside the
    ellipse rho_z <= rho / 1.5 and the predicted error eps * rho_z^n is below tol.
    Neighbourhoods of the critical values are never certified here.
    """
    z = complex(z)
    val = complex(_certified_piece(ld, z, tol)(z))
    if cross_check:
        other = complex(density_complex(ld.fn, ld.G, z))
        if abs(other - val) > 1e-8 * max(1.0, abs(val)):
            raise NumericError("continuation methods disagree", chebyshev=val, tracking=other)
    return val


# ---------------------------------------------------------------------------
# Cauchy transforms


def _check_off_segment(z, lo, hi, tol=1e-10):
    if abs(z.imag) < tol and lo - tol <= z.real <= hi + tol:
        raise DomainError("z within 1e-10 of the spectral segment: near-singular")


def _interior_raw(piece: Piece, z: complex, power: int):
    """integral over the piece of p(tau) / (z - tau)^(power) for a polynomial p, power >= 1.

    Integration by parts lowers the power to 1; the power-one integral uses
    p(tau) = p(z) + (p(tau) - p(z)) with the exact logarithm for the first term.
    """
    a, b = piece.a, piece.b
    h = (b - a) / 2
    coef = piece.coef
    if power > 1:
        k = power - 1
        pb, pa = C.chebval(1.0, coef), C.chebval(-1.0, coef)
        boundary = (pb / (z - b) ** k - pa / (z - a) ** k) / k
        dcoef = C.chebder(coef) / h
        return boundary - _interior_raw(Piece(a, b, dcoef, piece.rho), z, k) / k
    u_z = (z - (a + b) / 2) / h
    far = abs(u_z) > 3 or abs(u_z.imag) > 1.0
    n = max(len(coef) + 8, 24)
    x, w = np.polynomial.legendre.leggauss(n if not far else max(n, 48))
    t = (a + b) / 2 + h * x
    pt = C.chebval(x, coef)
    if far:
        return complex(np.sum(h * w * pt / (z - t)))
    pz = C.chebval(u_z, coef)
    log_term = np.log(z - a) - np.log(z - b)
    return complex(pz * log_term + np.sum(h * w * (pt - pz) / (z - t)))


def _end_raw(end: EndPiece, z: complex, power: int, n0: int = 40):
    h = (end.b - end.a) / 2
    def rule(n):
        if end.at_min:
            u, w = _jacobi(n, 0.0, float(end.gamma))
        else:
            u, w = _jacobi(n, float(end.gamma), 0.0)
        t = (end.a + end.b) / 2 + h * u
        return np.sum(h ** (1 + end.gamma) * w * C.chebval(u, end.coef) / (z - t) ** power)
    n = n0
    prev = rule(n)
    while n < 2000:
        n *= 2
        cur = rule(n)
        if abs(cur - prev) <= 1e-14 * max(abs(cur), 1e-300):
            return complex(cur)
        prev = cur
    return complex(cur)


def cauchy_raw(ld: LevelDensity, z, power: int = 1) -> complex:
    """integral J(tau) / (z - tau)^power over [min f, max f] (first sheet)."""
    z = complex(z)
    _check_off_segment(z, ld.fmin, ld.fmax)
    total = sum(_interior_raw(p, z, power) for p in ld.pieces)
    total += sum(_end_raw(e, z, power) for e in ld.ends)
    return complex(total)


def cauchy_transform(ld: LevelDensity, z, ell: int = 0) -> complex:
    """ell-th z-derivative of I(z) = integral J(tau) / (z - tau) dtau."""
    return (-1) ** ell * math.factorial(ell) * cauchy_raw(ld, z, ell + 1)


def direct_integral(fn, G, z, ell: int = 0, rotated: bool = False, tol: float = 1e-13,
                    n0: int = 64, n_max: int = 1 << 17):
    """Sphere quadrature of the resolvent-type integral.

    plain:   ell-th z-derivative of integral G / (z - f), i.e.
             (-1)^ell ell! integral G / (z - f)^(ell + 1)
    rotated: integral G / (z - i f)^(ell + 1)  (no factorial normalisation)
    """
    z = complex(z)
    if not rotated:
        _check_off_segment(z, fn.fmin, fn.fmax)
    else:
        w = z / 1j
        _check_off_segment(w, fn.fmin, fn.fmax)

    def rule(n):
        if fn.dim == 2:
            phi = 2 * np.pi * np.arange(n) / n
            fv, g = np.real(fn.f(phi)), _g_eval(fn, G, phi)
            wts = 2 * np.pi / n
        else:
            pts, wts = sphere_grid(3, n)
            fv, g = np.real(fn.value(pts)), _g_eval(fn, G, pts)
        den = (z - 1j * fv) if rotated else (z - fv)
        return np.sum(wts * g / den ** (ell + 1))

    n = n0
    prev = rule(n)
    while True:
        n *= 2
        cur = rule(n)
        if abs(cur - prev) <= tol * max(abs(cur), 1e-300):
            break
        if n >= n_max:
            raise NumericError("sphere quadrature did not converge", z=str(z))
        prev = cur
    if rotated:
        return complex(cur)
    return complex((-1) ** ell * math.factorial(ell) * cur)


def plemelj_jump(ld: LevelDensity, tau: float, eps=None):
    """Richardson-extrapolated limit of I(tau + i eps) - I(tau - i eps)."""
    if not (ld.fmin + ld.delta <= tau <= ld.fmax - ld.delta):
        raise DomainError("tau must stay delta away from the critical values")
    eps = np.asarray(eps if eps is not None else [1e-2 / 2 ** k for k in range(6)], dtype=float)
    jumps = np.array([cauchy_raw(ld, tau + 1j * e) - cauchy_raw(ld, tau - 1j * e) for e in eps])
    # Neville-style Richardson table in eps (halving assumed)
    table = [jumps]
    for k in range(1, len(eps)):
        prev = table[-1]
        ratio = eps[:-k] / eps[k:]
        table.append((ratio[: len(prev) - 1] * prev[1:] - prev[:-1]) / (ratio[: len(prev) - 1] - 1))
        if len(table[-1]) == 1:
            break
    best = table[-1][-1]
    spread = abs(table[-1][-1] - table[-2][-1]) if len(table) > 1 else np.inf
    if not np.isfinite(best) or spread > 1e-3 * max(1.0, abs(best)):
        raise NumericError("Plemelj extrapolation did not converge", spread=float(spread))
    return complex(best)


def second_sheet(ld: LevelDensity, z, ell: int = 0, method: str = "auto") -> complex:
    """ell-th derivative of I continued upward through the open segment.

    Returns the sheet-one value plus SECOND_SHEET_SIGN * 2 pi i J^{(ell)}(z).
    J^{(ell)} comes from the certified Chebyshev model ("chebyshev"), from
    complex level tracking ("tracking"), or the first that applies ("auto").
    """
    z = complex(z)
    if not (ld.fmin < z.real < ld.fmax) or z.imag < 0:
        raise OutOfRegionError("second sheet is reached only for Im z >= 0 above the open segment")
    sheet1_z = complex(z.real, -0.0) if z.imag == 0 else z
    base = (-1) ** ell * math.factorial(ell) * _sheet_one_raw(ld, sheet1_z, ell + 1)
    jd = _continued_density_derivative(ld, z, ell, method)
    return complex(base + SECOND_SHEET_SIGN * 2j * np.pi * jd)


def _sheet_one_raw(ld, z, power):
    total = sum(_interior_raw(p, z, power) for p in ld.pieces)
    total += sum(_end_raw(e, z, power) for e in ld.ends)
    return total


def _continued_density_derivative(ld, z, ell, method):
    # differentiating a continued Chebyshev series loses digits quickly, so
    # derivatives default to Cauchy integrals of tracked values
    if method == "chebyshev" or (method == "auto" and ell == 0):
        try:
            if ell == 0:
                return density_continue(ld, z)
            return _chebyshev_derivative(ld, z, ell)
        except OutOfRegionError:
            if method == "chebyshev":
                raise
    return density_derivative_complex(ld.fn, ld.G, z, ell)


def _chebyshev_derivative(ld, z, ell, tol=1e-8):
    p = _certified_piece(ld, z, tol)
    return complex(C.chebval(p.u_of(z), p.derivative(ell)))


def contour_integral(fn, G, z, ell: int = 0, height: float = 0.5, tol: float = 1e-13,
                     n0: int = 64, n_max: int = 1 << 15, power: int | None = None):
    """Contour-deformed sphere quadrature of the ell-th derivative of integral G / (z - f).

    The angle (d = 2) or the meridian radius (d = 3) is pushed into the complex
    domain so that Im f > 0 along the deformed sphere, except at the critical
    points.  For Im z >= 0 above the segment this evaluates the continuation
    from below; for Im z < 0 it reproduces the first sheet.  The root(s) of
    f = z are checked to lie between the real sphere and the deformed one.
    """
    z = complex(z)
    power = power or ell + 1
    if fn.dim == 2:
        peak = np.abs(np.real(fn.df(np.linspace(0, 2 * np.pi, 512)))).max()
        c = height / peak
        if fn.fmin < z.real < fn.fmax and z.imag >= 0:
            for p in fn.track_roots(z):
                p = complex(p)
                kap = c * np.real(fn.df(p.real))
                if not (0 <= p.imag * np.sign(kap) < abs(kap)):
                    raise OutOfRegionError("root not enclosed by the deformed contour; raise height")

        def rule(n):
            s = 2 * np.pi * np.arange(n) / n
            phi = s + 1j * c * np.real(fn.df(s))
            dphi = 1 + 1j * c * np.real(fn.d2f(s))
            return np.sum(_g_eval(fn, G, phi) * dphi / (z - fn.f(phi)) ** power) * 2 * np.pi / n
    else:
        c = height
        if fn.fmin < z.real < fn.fmax and z.imag >= 0:
            psi = 2 * np.pi * np.arange(32) / 32
            r = fn.track_radius(np.full(32, z), psi)
            kap = c * np.sin(r.real)
            if not np.all((r.imag >= 0) & (r.imag < kap)):
                raise OutOfRegionError("level set not enclosed by the deformed sphere; raise height")

        def rule(n):
            x, wx = np.polynomial.legendre.leggauss(n)
            r = np.pi * (x + 1) / 2
            psi = 2 * np.pi * np.arange(2 * n) / (2 * n)
            rr, pp = np.meshgrid(r, psi, indexing="ij")
            rho = rr + 1j * c * np.sin(rr)
            drho = 1 + 1j * c * np.cos(rr)
            pts = fn.meridian(rho, pp)
            integrand = _g_eval(fn, G, pts) * np.sin(rho) * drho / (z - fn.value(pts)) ** power
            return (wx[:, None] * integrand).sum() * (np.pi / 2) * (2 * np.pi / (2 * n))

    n = n0
    prev = rule(n)
    while True:
        n *= 2
        cur = rule(n)
        if abs(cur - prev) <= tol * max(abs(cur), 1e-300):
            break
        if n >= n_max:
            raise NumericError("contour quadrature did not converge", z=str(z))
        prev = cur
    if power != ell + 1:
        return complex(cur)
    return complex((-1) ** ell * math.factorial(ell) * cur)


def calibrate_second_sheet_sign(z=0.1j) -> int:
    """Fix the sign of the second-sheet correction against contour quadrature (f = cos, G = 1)."""
    fn = CircleFunction.trig([(1, 1.0, 0.0)], "cos")
    ld = density_fit(fn)
    ref = contour_integral(fn, None, z)
    base = _sheet_one_raw(ld, z, 1)
    jd = density_continue(ld, z)
    errs = {s: abs(base + s * 2j * np.pi * jd - ref) for s in (1, -1)}
    sign = min(errs, key=errs.get)
    if errs[sign] > 1e-8 * abs(ref):
        raise NumericError("second-sheet calibration failed", errors={str(k): v for k, v in errs.items()})
    return sign


# ---------------------------------------------------------------------------
# endpoint behaviour


def critical_exponent(fn, G=None, endpoint: str = "min", u_range=(1e-6, 1e-2), n: int = 25):
    """Least-squares slope of ln J against ln(distance to the critical value).

    Fits ln J = gamma ln u + ln A0 + a1 u + ... + a4 u^4; returns (gamma, A0, residual).
    """
    u = np.geomspace(*u_range, n)
    tau = fn.fmin + u if endpoint == "min" else fn.fmax - u
    j = np.real(density(fn, G, tau))
    if np.any(j <= 0):
        raise DomainError("density must be positive near the endpoint for a log fit")
    design = np.column_stack([np.log(u)] + [u ** k for k in range(5)])
    coef, *_ = np.linalg.lstsq(design, np.log(j), rcond=None)
    resid = float(np.abs(design @ coef - np.log(j)).max())
    if resid > 1e-4:
        raise NumericError("exponent fit residual too large: non-Morse input?", residual=resid)
    return float(coef[0]), float(np.exp(coef[1])), resid


# ---------------------------------------------------------------------------
# quantitative Morse lemma


@lru_cache(maxsize=None)
def _unit_gauss(n):
    t, w = np.polynomial.legendre.leggauss(n)
    return (t + 1) / 2, w / 2


@dataclass
class MorseChart:
    """Data of the normal form f(x0 + phi(x)) = f(x0) + |x|^2 / 2."""

    x0: np.ndarray
    f0: float
    P: np.ndarray
    Q0: np.ndarray
    hess: object
    f: object
    series: np.ndarray | None = None
    series_exponents: list | None = None
    residual: float = np.nan
    series_residual: float = np.nan

    def Q(self, y, n: int = 16):
        """Q(y) = 2 integral_0^1 (1 - t) Hess f(x0 + t y) dt."""
        t, w = _unit_gauss(n)
        return 2 * sum(wi * (1 - ti) * self.hess(self.x0 + ti * y) for ti, wi in zip(t, w))

    def M(self, y):
        """Q0-self-adjoint M with M^T Q0 M = Q(y), by Newton's square-root iteration from I."""
        target = np.linalg.solve(self.Q0, self.Q(y))
        m = np.eye(len(self.x0))
        last = np.inf
        for _ in range(60):
            new = 0.5 * (m + np.linalg.solve(m, target))
            step = np.abs(new - m).max()
            m = new
            # quadratic convergence: stop at the rounding floor or once steps stop shrinking
            if step <= 1e-15 * np.abs(m).max() or step >= last:
                return m
            last = step
        if np.abs(m.T @ self.Q0 @ m - self.Q(y)).max() > 1e-12:
            raise NumericError("Newton iteration for M(Q) did not converge")
        return m

    def psi(self, y):
        y = np.asarray(y, dtype=float)
        return self.P @ self.M(y) @ y

    def phi(self, x):
        """Inverse of psi by Newton with a finite-difference Jacobian."""
        x = np.asarray(x, dtype=float)
        y = np.linalg.solve(self.P, x)
        n = len(x)
        h = 1e-7
        best = np.inf
        for _ in range(40):
            p = self.psi(y)
            r = p - x
            err = np.abs(r).max()
            if err <= 1e-15 * (1 + np.abs(x).max()) or err >= best:
                break
            best = err
            # forward differences suffice: the Jacobian error only slows convergence to rate ~h
            jac = np.column_stack([(self.psi(y + h * e) - p) / h for e in np.eye(n)])
            y = y - np.linalg.solve(jac, r)
        if np.abs(self.psi(y) - x).max() > 1e-12:
            raise NumericError("inversion of psi did not converge", last_residual=float(err))
        return y

    def series_eval(self, x):
        x = np.atleast_2d(x)
        basis = np.column_stack([np.prod(x ** np.array(e), axis=1) for e in self.series_exponents])
        return basis @ self.series


def _fd_hessian(f, h=1e-3):
    def hess(x):
        x = np.asarray(x, dtype=float)
        n = len(x)
        out = np.empty((n, n))
        e = np.eye(n) * h
        # fourth-order central differences
        def d2(i, j):
            def g(a, b):
                return f(x + a * e[i] + b * e[j])
            if i == j:
                return (-g(2, 0) + 16 * g(1, 0) - 30 * f(x) + 16 * g(-1, 0) - g(-2, 0)) / (12 * h * h)
            return (g(1, 1) - g(1, -1) - g(-1, 1) + g(-1, -1)) / (4 * h * h)
        for i in range(n):
            for j in range(i, n):
                out[i, j] = out[j, i] = d2(i, j)
        return out
    return hess


def morse_normal_form(f, x0, hess=None, rho: float = 1.0, degree: int = 10, n_check: int = 48,
                      seed: int = 0) -> MorseChart:
    """Quantitative Morse chart at a nondegenerate minimum x0 of f.

    The residual max |f(x0 + phi(x)) - f(x0) - |x|^2/2| over |x| <= rho/2 is
    reported (sampled on a grid/random set), as is the residual of the
    degree-`degree` polynomial fit of phi.
    """
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    fv = lambda y: float(f(np.atleast_1d(np.asarray(y, dtype=float))))
    hess = hess or _fd_hessian(fv)
    hfun = lambda y: np.atleast_2d(np.asarray(hess(np.atleast_1d(y)), dtype=float))
    q0 = hfun(x0)
    if np.linalg.eigvalsh(q0).min() <= 0:
        raise DomainError("Hessian at the critical point must be positive definite")
    p = np.real(sqrtm(q0))
    chart = MorseChart(x0, fv(x0), p, q0, hfun, fv)
    n = x0.size
    rng = np.random.default_rng(seed)
    if n == 1:
        xs = np.linspace(-rho / 2, rho / 2, n_check)[:, None]
    else:
        g = rng.normal(size=(n_check, n))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        xs = g * (rho / 2) * rng.uniform(0, 1, size=(n_check, 1)) ** (1 / n)
        xs = np.vstack([xs, g * rho / 2])
    ys = np.array([chart.phi(x) for x in xs])
    res = [abs(fv(x0 + y) - chart.f0 - 0.5 * x @ x) for x, y in zip(xs, ys)]
    chart.residual = float(max(res))
    exps = [e for e in _exponents(n, degree)]
    basis = np.column_stack([np.prod(xs ** np.array(e), axis=1) for e in exps])
    coef, *_ = np.linalg.lstsq(basis, ys, rcond=None)
    chart.series, chart.series_exponents = coef, exps
    approx = basis @ coef
    chart.series_residual = float(max(abs(fv(x0 + y) - chart.f0 - 0.5 * x @ x) for x, y in zip(xs, approx)))
    return chart


def _exponents(n, degree):
    if n == 1:
        return [(k,) for k in range(1, degree + 1)]
    out = []
    def rec(prefix, left, k):
        if k == n - 1:
            out.append(prefix + (left,))
            return
        for i in range(left + 1):
            rec(prefix + (i,), left - i, k + 1)
    for total in range(1, degree + 1):
        rec((), total, 0)
    return out
