"""The Poincaré series P(s) = sum over x in 2πZ^d of exp(-s d_K(K0, x)).

Direct lattice sums (Re s > 0) carry a tail bound built from the norm
equivalence constants.  Poisson summation against the Omega form rewrites
the series as

    P(s) = S_near(s) + pole(s) + P_low(s) + P_high(s) + (entire bump terms),

where a smooth cutoff chi_1 on (kappa_1, 2 kappa_1) separates short
distances (summed directly) from long ones (summed in frequency).  Modes
with 0 < |xi| < N are resolvent integrals continued through the coarea
module; modes with |xi| >= N are integrated by parts in t and evaluated on
a contour pushed a height eps0 into the complex level plane, which makes
them continue to a strip around the imaginary axis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import expit, gammaincc

from . import coarea
from .errors import (CutProximityError, DomainError, NumericError, OutOfRegionError,
                     ResourceError, ValidationError)
from .geometry import (ConvexTarget, SupportBody, omega_circle, omega_coefficients, omega_holomorphic,
                       omega_integrals, sphere_grid, unit_ball_volume)
from .lattice import enumerate_points, norm_equivalence, spectrum, target_radius

TWO_PI = 2 * np.pi


@dataclass
class SeriesEvaluation:
    """A value of P (or a piece of it) with its truncation data."""

    value: complex
    radius: float
    tail: float
    region: str = "direct"
    params: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        v = complex(self.value)
        return {"value": [v.real, v.imag], "abs": abs(v), "radius": self.radius, "tail": self.tail,
                "region": self.region, "params": self.params, "meta": self.meta}


# ---------------------------------------------------------------------------
# smooth cutoff


def _smoothstep(x):
    """exp(-1/x)-based step: 0 for x <= 0, 1 for x >= 1, and S'(x) >= 0."""
    x = np.asarray(x, dtype=float)
    inside = (x > 0) & (x < 1)
    xc = np.where(inside, x, 0.5)
    u = 1.0 / xc - 1.0 / (1.0 - xc)
    s = expit(-u)
    ds = s * (1 - s) * (1.0 / xc ** 2 + 1.0 / (1.0 - xc) ** 2)
    s = np.where(inside, s, (x >= 1).astype(float))
    ds = np.where(inside, ds, 0.0)
    return s, ds


@dataclass(frozen=True)
class SmoothCutoff:
    """chi_1(t) = S((t - kappa_1) / kappa_1), rising from 0 to 1 on (kappa_1, 2 kappa_1)."""

    kappa1: float = 3.0

    def __post_init__(self):
        if not self.kappa1 > 0:
            raise ValidationError("kappa1 must be positive")

    def __call__(self, t):
        return _smoothstep((np.asarray(t, dtype=float) - self.kappa1) / self.kappa1)[0]

    def derivative(self, t):
        return _smoothstep((np.asarray(t, dtype=float) - self.kappa1) / self.kappa1)[1] / self.kappa1

    @property
    def support(self):
        return self.kappa1, 2 * self.kappa1


@lru_cache(maxsize=None)
def _gauss(n):
    return np.polynomial.legendre.leggauss(n)


def _gl(a, b, n):
    x, w = _gauss(n)
    return 0.5 * (b - a) * x + 0.5 * (a + b), 0.5 * (b - a) * w


# ---------------------------------------------------------------------------
# direct lattice sums


def _count_constants(body, target):
    """(A, c) with #{x : d_K(T, x) <= t} <= A (t + c)^d for all t >= 0.

    Each counted point has |x - anchor| <= r_T + t / m; the disjoint cubes of
    side 2π around them fit in the ball of radius r_T + t/m + π sqrt(d).
    """
    d = body.dim
    m, _ = norm_equivalence(body)
    a = unit_ball_volume(d) / (TWO_PI * m) ** d
    c = m * (target_radius(target) + np.pi * math.sqrt(d))
    return a, c


def tail_bound(body, target, sigma: float, T: float) -> float:
    """Upper bound for the sum of exp(-sigma d) over lattice points with d > T.

    Stieltjes integration by parts against the counting bound A (t + c)^d gives
    A exp(sigma c) Gamma(d + 1, sigma (T + c)) / sigma^d.
    """
    if not sigma > 0:
        raise DomainError("tail bound needs Re s > 0")
    a, c = _count_constants(body, target)
    d = body.dim
    x = sigma * (T + c)
    log_gamma = math.lgamma(d + 1) + math.log(max(gammaincc(d + 1, x), 1e-300))
    return float(a * math.exp(sigma * c + log_gamma - d * math.log(sigma)))


_DIST_CACHE: dict = {}


def _distances(body, target, T):
    """Sorted distances in (0, T], reusing a cached enumeration to a larger T."""
    key = (id(body), id(target))
    hit = _DIST_CACHE.get(key)
    if hit is not None and hit[2] >= T:
        dist = hit[3]
        return dist[: np.searchsorted(dist, T, side="right")]
    _, dist = enumerate_points(body, target, T)
    dist = np.sort(dist)
    if len(_DIST_CACHE) > 16:
        _DIST_CACHE.clear()
    _DIST_CACHE[key] = (body, target, T, dist)
    return dist


def _radius_for(body, target, sigma, tol, max_points):
    a, c = _count_constants(body, target)
    hi = 1.0
    while tail_bound(body, target, sigma, hi) > tol:
        hi *= 2
        if a * (hi + c) ** body.dim > 4 * max_points:
            break
    lo = 0.0
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        if tail_bound(body, target, sigma, mid) > tol:
            lo = mid
        else:
            hi = mid
    if a * (hi + c) ** body.dim > max_points:
        raise ResourceError("tail tolerance unreachable within the point budget",
                            achievable_tail=tail_bound(body, target, sigma,
                                                       (max_points / a) ** (1 / body.dim) - c))
    return hi


def _fsum_complex(vals):
    return complex(math.fsum(np.real(vals)), math.fsum(np.imag(vals)))


def direct(body: SupportBody, target: ConvexTarget, s, tol: float = 1e-10,
           max_points: int = 5_000_000) -> SeriesEvaluation:
    """Truncated lattice sum with a certified tail bound <= tol (Re s > 0)."""
    s = complex(s)
    if not s.real > 0:
        raise DomainError("direct summation needs Re s > 0")
    T = _radius_for(body, target, s.real, tol, max_points)
    dist = _distances(body, target, T)
    val = _fsum_complex(np.exp(-s * dist))
    return SeriesEvaluation(val, float(T), tail_bound(body, target, s.real, T), "direct",
                            meta={"points": int(len(dist))})


def direct_many(body, target, s_values, tol: float = 1e-10, max_points: int = 5_000_000):
    """direct() on many s sharing one enumeration (radius set by the smallest Re s)."""
    s_values = np.asarray(s_values, dtype=complex)
    sigma = float(s_values.real.min())
    if not sigma > 0:
        raise DomainError("direct summation needs Re s > 0")
    T = _radius_for(body, target, sigma, tol, max_points)
    dist = _distances(body, target, T)
    vals = np.array([_fsum_complex(np.exp(-s * dist)) for s in s_values])
    return vals, float(T), tail_bound(body, target, sigma, T)


def length_distribution(body, target, tmax, rel_tol: float = 1e-12):
    """Distinct distances d_K(T, x) <= tmax with multiplicities, ascending."""
    _, dist = enumerate_points(body, target, tmax)
    out = []
    for t in np.sort(dist):
        if out and abs(t - out[-1][0]) <= rel_tol * max(1.0, t):
            out[-1][1] += 1
        else:
            out.append([float(t), 1])
    return [(t, k) for t, k in out]


# ---------------------------------------------------------------------------
# ball oracle


@lru_cache(maxsize=16)
def _shell_sums(d, x0, n_max):
    """For n <= n_max, the sum of cos(xi.x0) over integer xi with |xi|^2 = n."""
    r = int(math.isqrt(n_max))
    axes = np.arange(-r, r + 1)
    total = np.zeros(n_max + 1)
    x0 = np.asarray(x0)
    if d == 2:
        a, b = np.meshgrid(axes, axes, indexing="ij")
        n = a ** 2 + b ** 2
        keep = n <= n_max
        np.add.at(total, n[keep], np.cos(a[keep] * x0[0] + b[keep] * x0[1]))
        return total
    if d == 3:
        a, b = np.meshgrid(axes, axes, indexing="ij")
        for c in axes:
            n = a ** 2 + b ** 2 + c * c
            keep = n <= n_max
            np.add.at(total, n[keep], np.cos(a[keep] * x0[0] + b[keep] * x0[1] + c * x0[2]))
        return total
    raise ValidationError("ball oracle implemented for d = 2, 3")


def _oracle_sum(d, x0, s, xi_max):
    n_max = int(xi_max ** 2)
    shells = _shell_sums(d, tuple(float(v) for v in x0), n_max)
    n = np.arange(n_max + 1)
    k = np.sqrt(n)
    # smooth window: 1 up to xi_max / 2, then an exp(-1/x) step down to 0
    win = 1.0 - _smoothstep(2 * k / xi_max - 1)[0]
    keep = (shells != 0) & (win > 0)
    p = (d + 1) / 2
    a, b = s - 1j * k[keep], s + 1j * k[keep]
    if np.min(np.abs(a)) < 1e-14 or np.min(np.abs(b)) < 1e-14:
        raise DomainError("s coincides with a singular point +-i|xi|")
    terms = shells[keep] * win[keep] * np.power(a, -p) * np.power(b, -p)
    return _fsum_complex(terms)


def ball_point_oracle(d: int, x0, s, xi_max: float = 200.0) -> SeriesEvaluation:
    """d! V_d s (2π)^{-d} sum over xi of exp(i xi.x0) (s^2 + |xi|^2)^{-(d+1)/2}.

    The power is split as (s - i|xi|)^{-p} (s + i|xi|)^{-p} with principal
    branches, which continues from Re s > 0 with horizontal-left cuts from
    +-i|xi|.  The frequency sum carries a smooth window; the tail estimate is
    the change when the window radius shrinks by a factor 0.7.
    """
    x0 = np.asarray(x0, dtype=float)
    if x0.size != d:
        raise ValidationError("x0 has the wrong dimension")
    if np.all(np.abs(x0 / TWO_PI - np.round(x0 / TWO_PI)) < 1e-12):
        raise DomainError("x0 must not lie on the lattice 2πZ^d")
    s = complex(s)
    pref = math.factorial(d) * unit_ball_volume(d) * s / TWO_PI ** d
    full = pref * _oracle_sum(d, x0, s, xi_max)
    coarse = pref * _oracle_sum(d, x0, s, 0.7 * xi_max)
    region = "direct" if s.real > 0 else "continued"
    return SeriesEvaluation(full, float(xi_max), float(abs(full - coarse)), region,
                            meta={"cuts": "horizontal-left from +-i|xi|"})


# ---------------------------------------------------------------------------
# Fourier side: profile data on the sphere


def _profile(body, target, n):
    """Real nodes on the sphere with weights, v, x_T and Omega coefficients."""
    d = body.dim
    if d == 2:
        phi = TWO_PI * np.arange(n) / n
        v, _ = body.circle_boundary(phi)
        xt, _ = target.circle_boundary(phi)
        om = np.stack(omega_circle(body, target, phi), axis=-1)
        return np.full(n, TWO_PI / n), v, xt, om
    pts, w = sphere_grid(3, n)
    return w, body.gradient(pts), target.gradient(pts), omega_coefficients(body, target, pts)


def _lattice_vectors(d, r_max, r_min=0.0):
    """Nonzero integer vectors with r_min <= |xi| <= r_max, sorted by (|xi|, lexicographic)."""
    r = int(math.floor(r_max))
    axes = np.arange(-r, r + 1)
    grid = np.stack(np.meshgrid(*([axes] * d), indexing="ij"), axis=-1).reshape(-1, d)
    n2 = np.sum(grid ** 2, axis=1)
    keep = (n2 > 0) & (n2 <= r_max ** 2 + 1e-9) & (n2 >= r_min ** 2 - 1e-9)
    grid, n2 = grid[keep], n2[keep]
    order = np.lexsort(tuple(grid[:, j] for j in range(d - 1, -1, -1)) + (n2,))
    return grid[order]


class Bump:
    """exp(-1 / (1 - u^2)) with u = (t - center) / halfwidth, compactly supported."""

    def __init__(self, center: float, halfwidth: float):
        if not 0 < halfwidth < center:
            raise ValidationError("bump must be supported in (0, infinity)")
        self.center, self.halfwidth = float(center), float(halfwidth)
        self.support = (self.center - self.halfwidth, self.center + self.halfwidth)

    def __call__(self, t):
        u = (np.asarray(t, dtype=float) - self.center) / self.halfwidth
        inside = np.abs(u) < 1
        uc = np.where(inside, u, 0.0)
        return np.where(inside, np.exp(-1.0 / (1.0 - uc ** 2)), 0.0)


class _Transform:
    """k -> integral eta(t) t^l exp(i t k) dt on a uniform k-grid, 8-point Lagrange interpolation.

    The transform is band limited by the support, so the grid spacing
    0.1 / max t keeps the interpolation error near 1e-11 of the L^1 mass.
    """

    def __init__(self, eta, support, ell_max, k_max, nt=None):
        a, b = support
        nt = nt or int(60 + 2 * (b - a) * k_max)
        t, w = _gl(a, b, nt)
        self.h = 0.1 / b
        self.k0 = -k_max - 8 * self.h
        self.grid = self.k0 + self.h * np.arange(int(2 * (k_max + 8 * self.h) / self.h) + 9)
        we = w * eta(t)
        ph = np.exp(1j * np.outer(self.grid, t))
        self.tables = [ph @ (we * t ** ell) for ell in range(ell_max + 1)]

    def __call__(self, ell, k):
        k = np.asarray(k, dtype=float)
        x = (k - self.k0) / self.h
        i0 = np.floor(x).astype(int) - 3
        frac = x - i0
        out = np.zeros(k.shape, dtype=complex)
        tab = self.tables[ell]
        offs = np.arange(8)
        for j in offs:
            lj = np.ones(k.shape)
            for m in offs:
                if m != j:
                    lj = lj * (frac - m) / (j - m)
            out = out + lj * tab[i0 + j]
        return out


def windowed_count(body: SupportBody, target: ConvexTarget, eta, xi_max: float = 30.0,
                   n_theta: int | None = None, tol: float = 1e-9):
    """(lhs, rhs) of the windowed counting identity.

    lhs = sum over lattice points of eta(d_K(T, x));
    rhs = (2π)^{-d} sum over |xi| <= xi_max of the integral of eta(t) against
          exp(i xi.(t v + x_T)) Omega(t, theta).
    The t-integral is tabulated as a function of k = xi.v; the sphere rule is
    doubled until two successive right-hand sides agree to tol.
    """
    support = getattr(eta, "support", None)
    if support is None or not support[0] > 0:
        raise ValidationError("eta needs a compact support attribute inside (0, infinity)")
    d = body.dim
    lo, hi = support
    _, dist = enumerate_points(body, target, hi)
    lhs = math.fsum(eta(dist)) if len(dist) else 0.0
    xis = _lattice_vectors(d, xi_max)
    # the xi and -xi terms are complex conjugates: keep one of each pair
    first = np.array([tuple(x) > tuple(-x) for x in xis], dtype=bool)
    xis = xis[first]
    m, _ = norm_equivalence(body)
    k_max = xi_max / m + 1.0
    tr = _Transform(eta, support, d - 1, k_max)
    w0 = (lambda t: eta(t))

    def rhs_at(n):
        w, v, xt, om = _profile(body, target, n)
        base = math.fsum(w @ om[:, ell] * _moment(eta, support, ell) for ell in range(d))
        total = [base]
        for chunk in np.array_split(xis, max(1, len(xis) // 64)):
            k = chunk @ v.T
            phase = np.exp(1j * (chunk @ xt.T))
            acc = np.zeros(len(chunk), dtype=complex)
            for ell in range(d):
                acc = acc + (tr(ell, k) * phase * om[:, ell]) @ w
            total.extend(2 * np.real(acc))
        return math.fsum(total) / TWO_PI ** d

    n = n_theta or (max(256, int(3 * xi_max * hi / m)) if d == 2 else max(32, int(1.5 * xi_max * hi / m)))
    prev = rhs_at(n)
    for _ in range(4):
        n = 2 * n if d == 2 else int(1.5 * n)
        cur = rhs_at(n)
        if abs(cur - prev) <= tol * max(1.0, abs(cur)):
            return float(lhs), float(cur)
        prev = cur
    raise NumericError("windowed-count quadrature did not converge", change=abs(cur - prev))


def _moment(eta, support, ell, n=200):
    t, w = _gl(*support, n)
    return float(np.sum(w * eta(t) * t ** ell))


# ---------------------------------------------------------------------------
# mode integrals


def _mode_function(body, omega):
    if body.dim == 2:
        return coarea.CircleFunction.projection(body, omega)
    return coarea.SphereFunction(body, omega)


def _mode_weight(body, target, xi, ell, weight=None):
    """G(theta) = exp(i xi.x_T(theta)) Omega_ell(theta), holomorphic in the sphere variable."""
    xi = np.asarray(xi, dtype=float)
    if body.dim == 2:
        def G(phi):
            phi = np.asarray(phi)
            xt, _ = target.circle_boundary(phi)
            f = omega_circle(body, target, phi)[ell] if weight is None else weight(phi)
            return np.exp(1j * (xt @ xi)) * f
    else:
        def G(pts):
            pts = np.asarray(pts)
            f = omega_holomorphic(body, target, pts)[..., ell] if weight is None else weight(pts)
            return np.exp(1j * (target.gradient(pts) @ xi)) * f
    return G


_MODE_CACHE: dict = {}


def _mode_density(body, target, xi, ell):
    """Level-density model of the mode weight; point targets share it along rays."""
    xi = np.asarray(xi, dtype=int)
    g = math.gcd(*[int(abs(c)) for c in xi])
    prim = tuple(int(c) // g for c in xi)
    key = (id(body), id(target), prim if target.is_point else tuple(xi), ell)
    hit = _MODE_CACHE.get(key)
    if hit is None:
        omega = np.asarray(prim, dtype=float)
        fn = _mode_function(body, omega)
        if target.is_point:
            G = _mode_weight(body, ConvexTarget.at_point(np.zeros(body.dim)), xi * 0, ell)
        else:
            G = _mode_weight(body, target, xi, ell)
        if len(_MODE_CACHE) > 512:
            _MODE_CACHE.clear()
        hit = _MODE_CACHE[key] = (body, target, coarea.density_fit(fn, G))
    ld = hit[2]
    phase = np.exp(1j * float(np.asarray(xi, dtype=float) @ target.point)) if target.is_point else 1.0
    return ld, phase


def mode_integral(body: SupportBody, target: ConvexTarget, xi, ell: int, s, mode: str = "direct",
                  weight=None) -> complex:
    """I^(ell)(z) = integral of exp(i xi.x_T) F / (z - i omega.v)^(ell + 1), z = s / |xi|.

    F defaults to Omega_ell; ``weight`` overrides it (a function on the sphere
    variable).  mode "direct" is sphere quadrature (Re s > 0); "continued"
    writes z - i omega.v = i (w - omega.v) with w = -i z and evaluates the
    Cauchy transform in w, on the second sheet once Re s <= 0.
    """
    xi = np.asarray(xi, dtype=int)
    lam = float(np.linalg.norm(xi))
    if lam == 0:
        raise DomainError("mode integrals need xi != 0")
    s = complex(s)
    z = s / lam
    if mode == "direct":
        if not s.real > 0:
            raise DomainError("direct mode integrals need Re s > 0")
        fn = _mode_function(body, xi / lam)
        return coarea.direct_integral(fn, _mode_weight(body, target, xi, ell, weight), z, ell, rotated=True)
    if mode != "continued":
        raise ValidationError("mode must be 'direct' or 'continued'")
    if weight is None:
        ld, phase = _mode_density(body, target, xi, ell)
    else:
        fn = _mode_function(body, xi / lam)
        ld, phase = coarea.density_fit(fn, _mode_weight(body, target, xi, ell, weight)), 1.0
    w = -1j * z
    if w.imag < 0 or not (ld.fmin < w.real < ld.fmax):
        deriv = coarea.cauchy_transform(ld, w, ell)
    else:
        deriv = coarea.second_sheet(ld, w, ell)
    return complex(phase * (-1) ** ell / math.factorial(ell) * deriv / 1j ** (ell + 1))


def _active_ells(body, target):
    """Omega_ell vanishing identically for point targets are skipped."""
    d = body.dim
    return [d - 1] if target.is_point else list(range(d))


def low_freq(body: SupportBody, target: ConvexTarget, s, N: float, mode: str = "continued") -> complex:
    """(2π)^{-d} sum over 0 < |xi| < N and ell of ell! / |xi|^(ell+1) I^(ell)(s / |xi|)."""
    terms = []
    for xi in _lattice_vectors(body.dim, N - 1e-9) if N > 1 else []:
        lam = float(np.linalg.norm(xi))
        for ell in _active_ells(body, target):
            val = mode_integral(body, target, xi, ell, s, mode)
            terms.append(math.factorial(ell) / lam ** (ell + 1) * val)
    return _fsum_complex(np.array(terms, dtype=complex)) / TWO_PI ** body.dim if terms else 0j


# ---------------------------------------------------------------------------
# pole part and entire corrections


def pole_coefficients(body, target):
    """E^(ell) = ell! W_ell / (2π)^d with W_ell the sphere integral of Omega_ell."""
    w = omega_integrals(body, target)
    return np.array([math.factorial(ell) * w[ell] / TWO_PI ** body.dim for ell in range(body.dim)])


def pole_part(body, target, s) -> complex:
    e = pole_coefficients(body, target)
    s = complex(s)
    return complex(sum(e[ell] / s ** (ell + 1) for ell in range(len(e))))


def _bump_integrals(body, target, s, N, chi, n_t=None, n_theta=None):
    """Sum over 0 <= |xi| < N of integral (1 - chi) t^ell exp(-s t) A_xi^ell(t) dt."""
    d = body.dim
    kap2 = 2 * chi.kappa1
    m, _ = norm_equivalence(body)
    freq = abs(s.imag) + max(N, 1) / m
    n_t = n_t or int(32 + 0.75 * kap2 * freq)
    # split at kappa_1: Gauss-Legendre converges slowly across the flat seam
    t1, w1 = _gl(0.0, chi.kappa1, n_t)
    t2, w2 = _gl(chi.kappa1, kap2, n_t + 96)
    t, wt = np.concatenate([t1, t2]), np.concatenate([w1, w2])
    wt = wt * (1 - chi(t)) * np.exp(-s * t)
    n_theta = n_theta or (max(128, int(4 * N * kap2 / m)) if d == 2 else max(24, int(2 * N * kap2 / m)))
    w, v, xt, om = _profile(body, target, n_theta)
    xis = [np.zeros(d, dtype=int)] + list(_lattice_vectors(d, N - 1e-9) if N > 1 else [])
    total = []
    for xi in xis:
        phase = np.exp(1j * np.outer(t, v @ xi) + 1j * (xt @ xi)[None, :])
        for ell in range(d):
            total.append(((wt * t ** ell) @ phase) @ (w * om[:, ell]))
    return _fsum_complex(np.array(total))


def entire_corrections(body: SupportBody, target: ConvexTarget, s, N: float, chi: SmoothCutoff,
                       check: bool = True):
    """Entire part of the split: short-distance sum minus the bump integrals.

    Returns (value, E) with E the pole coefficients E^(ell).
    """
    s = complex(s)
    dist = _distances(body, target, 2 * chi.kappa1)
    near = _fsum_complex((1 - chi(dist)) * np.exp(-s * dist))
    bumps = _bump_integrals(body, target, s, N, chi)
    if check:
        m, _ = norm_equivalence(body)
        n_t = int(48 + 1.5 * 2 * chi.kappa1 * (abs(s.imag) + max(N, 1) / m))
        again = _bump_integrals(body, target, s, N, chi, n_t=n_t)
        if abs(again - bumps) > 1e-10 * max(1.0, abs(bumps)):
            raise NumericError("bump integrals not converged", change=abs(again - bumps))
    value = near - bumps / TWO_PI ** body.dim
    return complex(value), pole_coefficients(body, target)


# ---------------------------------------------------------------------------
# high frequencies


def default_eps0(body) -> float:
    """A quarter of the minimal width min over omega of h(omega) + h(-omega)."""
    pts, _ = sphere_grid(body.dim, 512 if body.dim == 2 else 48)
    return float(0.25 * np.min(body.support(pts) + body.support(-pts)))


def strip_halfwidth(body, eps0) -> float:
    """delta_0 with the high-frequency terms valid for Re s > -delta_0 N, |Im s| < delta_0 N."""
    _, big_m = norm_equivalence(body)
    return float(min(eps0, 1.0 / big_m - eps0))


class _KernelL:
    """L_j(A) = integral chi_1'(t) t^j exp(-t A) dt by Gauss-Legendre in t."""

    def __init__(self, chi, jmax, n):
        t, w = _gl(chi.kappa1, 2 * chi.kappa1, n)
        self.t = t
        self.wj = np.stack([w * chi.derivative(t) * t ** j for j in range(jmax + 1)], axis=-1)

    def __call__(self, A):
        e = np.exp(-A[..., None] * self.t)
        return e @ self.wj


def _kernel(ells, A, L):
    """K_ell(A) = sum_j ell!/j! A^{-(ell - j + 1)} L_j(A), the t-integral of chi_1 t^ell exp(-A t)."""
    out = {}
    for ell in ells:
        acc = 0
        for j in range(ell + 1):
            acc = acc + math.factorial(ell) / math.factorial(j) * A ** (-(ell - j + 1)) * L[..., j]
        out[ell] = acc
    return out


class _KernelTable:
    """L_j(s - i q) for real q, tabulated on a uniform grid (8-point Lagrange).

    As a function of q this is the Fourier transform of a smooth function
    supported in [kappa_1, 2 kappa_1], so the spacing 0.05 / kappa_1 keeps the
    interpolation error near 1e-11 of its L^1 mass.
    """

    def __init__(self, chi, jmax, s, q_max):
        kap = chi.kappa1
        nt = int(40 + 0.4 * kap * (q_max + abs(s.imag)))
        t, w = _gl(kap, 2 * kap, nt)
        wj = np.stack([w * chi.derivative(t) * t ** j * np.exp(-s * t) for j in range(jmax + 1)], axis=-1)
        self.h = 0.05 / kap
        self.q0 = -q_max - 8 * self.h
        q = self.q0 + self.h * np.arange(int(2 * (q_max + 8 * self.h) / self.h) + 9)
        self.table = np.concatenate([np.exp(1j * np.outer(c, t)) @ wj
                                     for c in np.array_split(q, max(1, len(q) // 2048))])

    def __call__(self, q):
        return _lagrange8(self.table, self.q0, self.h, q)


def _lagrange8(table, x0, h, x):
    """8-point Lagrange interpolation of a uniformly tabulated function (trailing axes kept)."""
    x = np.asarray(x, dtype=float)
    pos = (x - x0) / h
    i0 = np.floor(pos).astype(int) - 3
    if np.any(i0 < 0) or np.any(i0 + 7 >= len(table)):
        raise NumericError("interpolation argument outside the tabulated range")
    frac = pos - i0
    out = 0
    for j in range(8):
        lj = np.ones(x.shape)
        for m in range(8):
            if m != j:
                lj = lj * (frac - m) / (j - m)
        out = out + lj[(...,) + (None,) * (table.ndim - 1)] * table[i0 + j]
    return out


class _CircleBatch:
    """omega.v on the circle for a batch of directions, vectorised over (batch, nodes)."""

    def __init__(self, body, target, xis):
        self.body, self.target = body, target
        self.xi = xis.astype(float)
        self.lam = np.linalg.norm(self.xi, axis=1)
        self.omega = self.xi / self.lam[:, None]
        self.alpha = np.arctan2(self.omega[:, 1], self.omega[:, 0])
        self.fmax = body.support(self.omega)
        self.fmin = -body.support(-self.omega)

    def f(self, phi):
        """omega.v and its phi-derivative: h cos(phi - alpha) - h' sin(phi - alpha) and -(h + h'') sin."""
        h0, h1, h2 = self.body.circle_jet(phi)
        al = self.alpha if np.ndim(phi) == 1 else self.alpha[:, None]
        c, sn = np.cos(phi - al), np.sin(phi - al)
        return h0 * c - h1 * sn, -(h0 + h2) * sn

    def G(self, phi, ells):
        xt, _ = self.target.circle_boundary(phi)
        xi = self.xi if phi.ndim == 1 else self.xi[:, None, :]
        phase = np.exp(1j * np.sum(xt * xi, axis=-1))
        om = omega_circle(self.body, self.target, phi)
        return {ell: phase * om[ell] for ell in ells}

    def roots(self, level, up: bool):
        """Real phi with f = level on the increasing (up) or decreasing arc; level shape (B,)."""
        lo = self.alpha - np.pi if up else self.alpha.copy()
        hi = lo + np.pi
        sgn = 1.0 if up else -1.0
        for _ in range(56):
            mid = 0.5 * (lo + hi)
            above = sgn * (self.f(mid)[0] - level) > 0
            hi = np.where(above, mid, hi)
            lo = np.where(above, lo, mid)
        p = 0.5 * (lo + hi)
        for _ in range(2):
            fv, dfv = self.f(p)
            q = p - (fv - level) / dfv
            p = np.where((q > lo - 1e-12) & (q < hi + 1e-12), q, p)
        return p

    def march(self, p, u_start, path, max_step=0.05):
        """Roots of f = u along the node sequence path[:, k], starting from f(p) = u_start.

        p has shape (B, m) (several roots per direction).  Each step takes the
        Newton step of the previous evaluation as predictor and two corrections.
        """
        p = p.astype(complex)
        prev = u_start.astype(complex)[:, None]
        out = np.empty(p.shape + (path.shape[1],), dtype=complex)
        fv, dfv = self.f(p)
        for k in range(path.shape[1]):
            target = path[:, k][:, None]
            sub = int(max(1, np.ceil(np.max(np.abs(target - prev)) / max_step)))
            for m in range(1, sub + 1):
                goal = prev + (target - prev) * m / sub
                for _ in range(3):
                    p = p - (fv - goal) / dfv
                    fv, dfv = self.f(p)
            out[..., k] = p
            prev = target
        res = self.f(out.reshape(len(p), -1))[0].reshape(out.shape) - path[:, None, :]
        if np.max(np.abs(res)) > 1e-10:
            raise NumericError("root continuation along the shifted contour failed",
                               residual=float(np.max(np.abs(res))))
        return out


def _high_batch_2d(body, target, xis, s, chi, eps0, ells, table):
    """Mode terms T_xi for a batch of frequencies in d = 2 (one shell |xi| in [r, r+1))."""
    cb = _CircleBatch(body, target, xis)
    lam = cb.lam
    sig = s.real
    kap = chi.kappa1
    a_lvl, b_lvl = cb.fmin + eps0, cb.fmax - eps0
    if sig <= 0:
        w_re = s.imag / lam
        if np.any(sig <= -eps0 * lam) or np.any((w_re <= a_lvl) | (w_re >= b_lvl)):
            raise OutOfRegionError("s outside the high-frequency strip", s=str(s))
    r_t = 0.0 if target.is_point else 1.0 / norm_equivalence(target.body)[0]
    fspan = float(np.max(np.maximum(-cb.fmin, cb.fmax)))
    L = _KernelL(chi, max(ells), int(40 + 0.4 * kap * (abs(s.imag) + lam.max() * fspan)))

    def kern_real(u):
        A = s - 1j * lam[:, None] * u
        return _kernel(ells, A, table(lam[:, None] * u))

    def kern(u):
        A = s - 1j * lam[:, None] * u
        return _kernel(ells, A, L(A))

    total = np.zeros(len(xis), dtype=complex)
    # caps {f < a} and {f > b}, integrated in phi between real roots
    n_cap = int(24 + 2 * kap * lam.max() * eps0 + 2 * lam.max() * r_t)
    x, wq = _gauss(n_cap)
    ra_up, ra_dn = cb.roots(a_lvl, True), cb.roots(a_lvl, False)
    rb_up, rb_dn = cb.roots(b_lvl, True), cb.roots(b_lvl, False)
    for lo, hi in ((ra_dn, ra_up + TWO_PI), (rb_up, rb_dn)):
        half = 0.5 * (hi - lo)
        phi = 0.5 * (hi + lo)[:, None] + half[:, None] * x[None, :]
        fv, _ = cb.f(phi)
        K, G = kern_real(fv), cb.G(phi, ells)
        total += sum((G[ell] * K[ell]) @ wq * half for ell in ells)

    def density_along(p_up, p_dn):
        Gu, Gd = cb.G(p_up, ells), cb.G(p_dn, ells)
        du, dd = cb.f(p_up)[1], cb.f(p_dn)[1]
        return {ell: Gu[ell] / du - Gd[ell] / dd for ell in ells}

    # rectangle a -> a + i eps0 -> b + i eps0 -> b; beyond y_cut the kernel is below e^-32
    y_cut = (32.0 / kap + max(0.0, -sig)) / lam.min()
    with_top = y_cut > eps0
    y_top = min(eps0, y_cut)
    xv, wv = _gauss(24)
    y = 0.5 * y_top * (xv + 1)
    wy = 0.5 * y_top * wv
    n_top = int(24 + 0.8 * kap * lam.max() * float(np.max(b_lvl - a_lvl)) + 2 * lam.max() * r_t) if with_top else 0
    xt_, wt_ = _gauss(n_top) if with_top else (np.zeros(0), np.zeros(0))
    for lvl, p_up0, p_dn0, sign in ((a_lvl, ra_up, ra_dn, 1.0), (b_lvl, rb_up, rb_dn, -1.0)):
        u = lvl[:, None] + 1j * y[None, :]
        pp = cb.march(np.stack([p_up0, p_dn0], axis=1), lvl, u)
        J, K = density_along(pp[:, 0], pp[:, 1]), kern(u)
        total += sign * 1j * sum((J[ell] * K[ell]) @ wy for ell in ells)
        if with_top and sign > 0:
            # continue from the top of the left edge along the top edge
            half = 0.5 * (b_lvl - a_lvl)
            ut = (0.5 * (a_lvl + b_lvl))[:, None] + half[:, None] * xt_[None, :] + 1j * eps0
            path = np.concatenate([(a_lvl + 1j * eps0)[:, None], ut], axis=1)
            qq = cb.march(pp[:, :, -1], u[:, -1], path)[:, :, 1:]
            J, K = density_along(qq[:, 0], qq[:, 1]), kern(ut)
            total += sum((J[ell] * K[ell]) @ wt_ * half for ell in ells)
    return total


def _high_mode_3d(body, target, xi, s, chi, eps0, ells, n_r=48):
    """One mode term T_xi in d = 3 (meridian coordinates and level tracking)."""
    xi = np.asarray(xi, dtype=float)
    lam = float(np.linalg.norm(xi))
    fn = coarea.SphereFunction(body, xi / lam)
    a_lvl, b_lvl = fn.fmin + eps0, fn.fmax - eps0
    if s.real <= 0:
        wr = s.imag / lam
        if s.real <= -eps0 * lam or not a_lvl < wr < b_lvl:
            raise OutOfRegionError("s outside the high-frequency strip", s=str(s))
    kap = chi.kappa1
    L = _KernelL(chi, max(ells), int(60 + 1.2 * kap * (abs(s.imag) + lam * max(-fn.fmin, fn.fmax))))
    Gs = {ell: _mode_weight(body, target, xi, ell) for ell in ells}

    def kern(u):
        A = s - 1j * lam * np.asarray(u)
        return _kernel(ells, A, L(A))

    n_psi = int(32 + 2 * lam)
    psi = TWO_PI * np.arange(n_psi) / n_psi
    total = 0j
    xr, wr_ = _gauss(n_r)
    for lvl, low in ((a_lvl, True), (b_lvl, False)):
        rb = fn.level_radius(np.full(n_psi, lvl), psi)
        lo = np.zeros(n_psi) if low else rb
        hi = rb if low else np.full(n_psi, np.pi)
        half = 0.5 * (hi - lo)
        r = 0.5 * (hi + lo)[:, None] + half[:, None] * xr[None, :]
        pts = fn.meridian(r, psi[:, None])
        K = kern(fn.value(pts))
        for ell in ells:
            total += np.sum(Gs[ell](pts) * K[ell] * np.sin(r) * wr_[None, :] * half[:, None]) * TWO_PI / n_psi
    y_cut = (40.0 / kap + max(0.0, -s.real)) / lam
    y_top = min(eps0, y_cut)
    xv, wv = _gauss(24)
    y = 0.5 * y_top * (xv + 1)
    for lvl, sign in ((a_lvl, 1.0), (b_lvl, -1.0)):
        u = lvl + 1j * y
        K = kern(u)
        for ell in ells:
            J = coarea.density_complex(fn, Gs[ell], u)
            total += sign * 1j * np.sum(J * K[ell] * 0.5 * y_top * wv)
    if y_cut > eps0:
        n_top = int(24 + 1.2 * kap * lam * (fn.fmax - fn.fmin))
        xt_, wt_ = _gl(a_lvl, b_lvl, n_top)
        u = xt_ + 1j * eps0
        K = kern(u)
        for ell in ells:
            J = coarea.density_complex(fn, Gs[ell], u)
            total += np.sum(J * K[ell] * wt_)
    return complex(total)


def high_freq(body: SupportBody, target: ConvexTarget, s, N: float, chi: SmoothCutoff | None = None,
              eps0: float | None = None, xi_max: float = 60.0, rel_stop: float = 1e-16) -> SeriesEvaluation:
    """(2π)^{-d} sum over N <= |xi| <= xi_max of the contour-shifted mode terms.

    Shells of integer radius are summed in order; once four consecutive
    shells are below rel_stop of the running total the sum stops early.  The
    tail estimate extrapolates a power law fitted to the shell magnitudes of
    the last dyadic block.
    """
    s = complex(s)
    chi = chi or SmoothCutoff()
    eps0 = default_eps0(body) if eps0 is None else float(eps0)
    d = body.dim
    ells = list(range(d)) if not target.is_point else [d - 1]
    xis = _lattice_vectors(d, xi_max, N)
    norms = np.linalg.norm(xis, axis=1)
    shell_id = np.floor(norms).astype(int)
    shells = []
    total_terms = []
    quiet = 0
    if d == 2 and len(xis):
        big = float(np.max(body.support(np.vstack([xis, -xis]).astype(float))))
        table = _KernelTable(chi, d - 1, s, big + 1.0)
    for r in range(int(math.floor(N)), int(math.floor(xi_max)) + 1):
        sel = shell_id == r
        if not np.any(sel):
            continue
        batch = xis[sel]
        if d == 2:
            vals = _high_batch_2d(body, target, batch, s, chi, eps0, ells, table)
        else:
            vals = np.array([_high_mode_3d(body, target, x, s, chi, eps0, ells) for x in batch])
        total_terms.extend(vals)
        mag = float(np.sum(np.abs(vals)))
        shells.append((r, mag))
        running = abs(_fsum_complex(np.array(total_terms)))
        quiet = quiet + 1 if mag <= rel_stop * max(running, 1e-300) else 0
        if quiet >= 4:
            break
    value = _fsum_complex(np.array(total_terms, dtype=complex)) / TWO_PI ** d
    rs = np.array([r for r, _ in shells], dtype=float)
    ms = np.array([m for _, m in shells]) / TWO_PI ** d
    last = rs[-1] if len(rs) else N
    tail, slope = _shell_tail(rs, ms, last, d)
    return SeriesEvaluation(value, float(last), tail, "continued" if s.real <= 0 else "direct",
                            params={"N": N, "kappa1": chi.kappa1, "eps0": eps0, "xi_max": xi_max},
                            meta={"shell_radii": rs.tolist(), "shell_magnitudes": ms.tolist(),
                                  "fitted_slope": slope, "stopped_early": bool(quiet >= 4),
                                  "delta0": strip_halfwidth(body, eps0)})


def _shell_tail(rs, ms, last, d):
    if len(rs) < 3:
        return (float(ms[-1]) if len(ms) else 0.0), float("nan")
    block = (rs >= last / 2) & (ms > 0)
    if block.sum() < 3:
        block = ms > 0
    if block.sum() < 2:
        return 0.0, float("nan")
    slope, icpt = np.polyfit(np.log(rs[block]), np.log(ms[block]), 1)
    if slope >= -1:
        raise NumericError("high-frequency terms do not decay; increase kappa1",
                           slope=float(slope), last_shell=float(last))
    c = math.exp(icpt)
    tail = c * last ** (slope + 1) / (-slope - 1)
    return float(min(tail, np.sum(ms[block]) * 10.0)), float(slope)


# ---------------------------------------------------------------------------
# assembly


@dataclass
class ContinuationConfig:
    N: float = 3.0
    kappa1: float = 3.0
    eps0: float | None = None
    xi_max: float = 60.0
    cut_tol: float = 1e-3
    cuts: str = "horizontal-left"


def cut_distance(body, s) -> float:
    """Distance from s to the horizontal-left cuts {+-i h_K(+-xi)} + R_- (inf if Re s > 0)."""
    s = complex(s)
    if s.real > 0:
        return np.inf
    vals = _spectrum_values(body, abs(s.imag) + 1)
    return min((abs(s.imag - v) for v in vals), default=np.inf)


def _spectrum_values(body, lam_max):
    tab = spectrum(body, lam_max)
    out = set()
    for v, sg in zip(tab.values, tab.signs):
        out.add(float(v) if sg > 0 else -float(v))
    return sorted(out)


def continued_total(body: SupportBody, target: ConvexTarget, s, config: ContinuationConfig | None = None,
                    auto_kappa: bool = True) -> SeriesEvaluation:
    """entire corrections + pole part + low modes (continued) + high modes."""
    cfg = config or ContinuationConfig()
    s = complex(s)
    if s.real <= 0 and cut_distance(body, s) < cfg.cut_tol:
        raise CutProximityError("s lies on or within cut_tol of a branch cut", s=str(s))
    chi = SmoothCutoff(cfg.kappa1)
    eps0 = default_eps0(body) if cfg.eps0 is None else cfg.eps0
    try:
        hi = high_freq(body, target, s, cfg.N, chi, eps0, cfg.xi_max)
    except NumericError as exc:
        if not auto_kappa or isinstance(exc, OutOfRegionError) or "decay" not in str(exc):
            raise
        chi = SmoothCutoff(2 * cfg.kappa1)
        hi = high_freq(body, target, s, cfg.N, chi, eps0, cfg.xi_max)
    ent, e = entire_corrections(body, target, s, cfg.N, chi)
    pole = pole_part(body, target, s)
    low = low_freq(body, target, s, cfg.N, "continued")
    value = ent + pole + low + hi.value
    region = "continued" if s.real <= 0 else "direct"
    return SeriesEvaluation(value, hi.radius, hi.tail, region,
                            params={"N": cfg.N, "kappa1": chi.kappa1, "eps0": eps0, "xi_max": cfg.xi_max},
                            meta={"cuts": cfg.cuts, "pole_coefficients": e.tolist(),
                                  "parts": {"entire": [ent.real, ent.imag], "pole": [pole.real, pole.imag],
                                            "low": [low.real, low.imag],
                                            "high": [hi.value.real, hi.value.imag]},
                                  "delta0": hi.meta["delta0"], "high_stopped_early": hi.meta["stopped_early"]})


# ---------------------------------------------------------------------------
# singularities


@dataclass
class Peak:
    tau: float
    height: float
    prominence: float
    nearest: float
    multiplicity: int
    offset: float


def _prominence(y, i):
    left = y[: i + 1][::-1]
    right = y[i:]

    def side(arr):
        low = arr[0]
        for v in arr[1:]:
            if v > arr[0]:
                break
            low = min(low, v)
        return low
    return float(y[i] - max(side(left), side(right)))


def scan_singularities(body: SupportBody, target: ConvexTarget, eps: float, tau_range=(0.5, 2.2),
                       step: float = 0.005, config: ContinuationConfig | None = None, tol: float = 1e-8):
    """Peaks of |P(eps + i tau)| on a grid, refined by golden section.

    Returns (peaks, grid) with grid rows (Re s, Im s, |P|, arg P, region).
    With eps > 0 the direct sum is used (one enumeration for the whole line).
    """
    taus = np.arange(tau_range[0], tau_range[1] + 0.5 * step, step)
    if eps > 0:
        vals, T, _ = direct_many(body, target, eps + 1j * taus, tol)
        dist = _distances(body, target, T)
        evaluate = lambda tau: abs(_fsum_complex(np.exp(-(eps + 1j * tau) * dist)))
        region = "direct"
    else:
        vals = np.array([continued_total(body, target, eps + 1j * t, config).value for t in taus])
        evaluate = lambda tau: abs(continued_total(body, target, eps + 1j * tau, config).value)
        region = "continued"
    mag = np.abs(vals)
    spec = spectrum(body, tau_range[1] + 1.0).distinct(sign=1)
    peaks = []
    for i in range(1, len(taus) - 1):
        if mag[i] >= mag[i - 1] and mag[i] > mag[i + 1]:
            res = minimize_scalar(lambda t: -evaluate(t), bracket=(taus[i - 1], taus[i], taus[i + 1]),
                                  method="golden", tol=1e-6)
            tau = float(res.x) if taus[i - 1] <= res.x <= taus[i + 1] else float(taus[i])
            lam, mult = min(spec, key=lambda vm: abs(vm[0] - tau)) if spec else (np.nan, 0)
            peaks.append(Peak(tau, float(evaluate(tau)), _prominence(mag, i), float(lam), int(mult),
                              float(tau - lam)))
    grid = [(float(eps), float(t), float(abs(v)), float(np.angle(v)), region) for t, v in zip(taus, vals)]
    return peaks, grid


@dataclass
class ExponentFit:
    exponent: float
    residual: float
    conclusive: bool
    radii: list
    values: list


def branch_exponent_fit(evaluator, lam, alpha: float = 0.0, r_range=(1e-3, 1e-1), n: int = 15,
                        subtract=None, max_residual: float = 0.05) -> ExponentFit:
    """Slope of ln|P(lam + r e^{i alpha}) - subtract(s)| against ln r.

    ``evaluator`` maps s to a complex value (for instance the continued ball
    oracle).  A smooth correction in r is fitted alongside the power.
    """
    lam = complex(lam)
    r = np.geomspace(*r_range, n)
    s = lam + r * np.exp(1j * alpha)
    vals = np.array([complex(evaluator(z)) for z in s])
    if subtract is not None:
        vals = vals - np.array([complex(subtract(z)) for z in s])
    y = np.log(np.abs(vals))
    design = np.column_stack([np.log(r), np.ones_like(r), r])
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    resid = float(np.abs(design @ coef - y).max())
    return ExponentFit(float(coef[0]), resid, resid <= max_residual, r.tolist(), [abs(v) for v in vals])


def oracle_evaluator(d, x0, xi_max: float = 200.0):
    return lambda s: ball_point_oracle(d, x0, s, xi_max).value
