"""Determinations of ln and sqrt, the model functions F_gamma, and monodromy.

F_gamma(zeta) = integral over [-1, 1] of (1 - t^2)^gamma / (zeta - t) dt.
For gamma = (d - 3)/2 it has the closed forms

    even d:  (-1)^((d-2)/2) pi (zeta + 1)^gamma (zeta - 1)^gamma + P_d(zeta)
    odd d:   (1 - zeta^2)^gamma (ln(zeta + 1) - ln(zeta - 1)) + P_d(zeta)

with real polynomials P_d generated by F_{gamma+1} = (1 - zeta^2) F_gamma + C_gamma zeta.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from functools import lru_cache

import numpy as np
from numpy.polynomial import polynomial as npoly
from scipy.special import gammaln, roots_jacobi

from .errors import DomainError, NumericError

CUT_TOL = 1e-14


def _on_cut(w):
    return (np.real(w) <= 0) & (np.abs(np.imag(w)) <= CUT_TOL * np.maximum(np.abs(w), 1e-300))


def log_det(theta: float, z):
    """ln_theta(z) = ln(e^{i theta} z) - i theta, cut along e^{-i theta} R_-."""
    w = np.exp(1j * theta) * np.asarray(z, dtype=complex)
    if np.any(_on_cut(w)):
        raise DomainError(f"z lies on the cut of ln_theta (theta={theta})")
    return np.log(w) - 1j * theta


def sqrt_det(theta: float, z):
    """Square root with the same cut as ln_theta; positive on R_+."""
    w = np.exp(1j * theta) * np.asarray(z, dtype=complex)
    if np.any(_on_cut(w) & (np.abs(w) > 0)):
        raise DomainError(f"z lies on the cut of sqrt_theta (theta={theta})")
    return np.exp(-0.5j * theta) * np.sqrt(w)


def power_det(theta: float, z, gamma: float):
    return np.exp(gamma * log_det(theta, z))


def c_gamma(gamma: float) -> float:
    """C_gamma = integral of (1 - t^2)^gamma over [-1, 1]."""
    return math.exp(0.5 * math.log(math.pi) + gammaln(gamma + 1) - gammaln(gamma + 1.5))


@lru_cache(maxsize=64)
def _jacobi(n: int, alpha: float, beta: float):
    return roots_jacobi(n, alpha, beta)


def _segment_distance(z):
    z = np.asarray(z, dtype=complex)
    x = np.clip(z.real, -1, 1)
    return np.abs(z - x)


def F_quadrature(gamma: float, zeta, n0: int = 200, tol: float = 1e-12, n_max: int = 25600):
    """F_gamma(zeta) by Gauss-Jacobi quadrature, doubling n until converged."""
    if gamma <= -1:
        raise DomainError("gamma must exceed -1")
    zeta = np.asarray(zeta, dtype=complex)
    if np.any(_segment_distance(zeta) < 1e-10):
        raise DomainError("zeta within 1e-10 of [-1, 1]: near-singular")

    def rule(n):
        t, w = _jacobi(n, float(gamma), float(gamma))
        return (w / (zeta[..., None] - t)).sum(axis=-1)

    n = n0
    prev = rule(n)
    while True:
        n *= 2
        cur = rule(n)
        err = np.max(np.abs(cur - prev) / np.maximum(np.abs(cur), 1e-300), initial=0.0)
        if err <= tol:
            return cur if cur.ndim else complex(cur)
        if n >= n_max:
            raise NumericError("Gauss-Jacobi quadrature did not converge", last_error=float(err))
        prev = cur


def _poly_recurrence(d: int) -> np.ndarray:
    """Coefficients (increasing degree) of P_d from the recurrence."""
    start = 2 if d % 2 == 0 else 3
    p = np.zeros(1)
    for dd in range(start, d, 2):
        gamma = (dd - 3) / 2
        p = npoly.polyadd(npoly.polymul([1.0, 0.0, -1.0], p), [0.0, c_gamma(gamma)])
    return np.trim_zeros(p, "b") if np.any(p) else np.zeros(1)


def P_d(d: int) -> np.ndarray:
    if d < 2:
        raise DomainError("d must be at least 2")
    return _poly_recurrence(d)


def F_singular(d: int, zeta, theta: float = 0.0):
    """Singular part of F_{(d-3)/2} with logarithms/powers of determination theta."""
    gamma = (d - 3) / 2
    zeta = np.asarray(zeta, dtype=complex)
    lp = log_det(theta, zeta + 1)
    lm = log_det(theta, zeta - 1)
    if d % 2 == 0:
        return (-1) ** ((d - 2) // 2) * np.pi * np.exp(gamma * (lp + lm))
    return (1 - zeta ** 2) ** int(gamma) * (lp - lm)


def F_closed(d: int, zeta, theta: float = 0.0):
    """Closed form of F_{(d-3)/2}, including the polynomial P_d."""
    zeta = np.asarray(zeta, dtype=complex)
    return F_singular(d, zeta, theta) + npoly.polyval(zeta, P_d(d))


def _rationalize(c: float, tol: float = 1e-9):
    """Express c as a small rational or rational times pi, if within tol."""
    for base, label in ((1.0, ""), (math.pi, "π")):
        fr = Fraction(c / base).limit_denominator(1000)
        if abs(float(fr) * base - c) <= tol * max(1.0, abs(c)):
            return float(fr) * base, f"{fr}{label}" if label else f"{fr}"
    return c, None


def P_d_extract(d: int, n_samples: int | None = None):
    """Recover P_d by least squares from quadrature minus the singular part.

    Returns (coefficients, labels, relative residual).
    """
    if not 2 <= d <= 9:
        raise DomainError("P_d extraction supported for 2 <= d <= 9")
    gamma = (d - 3) / 2
    n_samples = n_samples or max(2 * d, 8)
    z = np.linspace(2.05, 4.95, n_samples)
    diff = (F_quadrature(gamma, z + 0j) - F_singular(d, z)).real
    deg = max(0, d - 3)
    # fit in a centred variable for conditioning, then convert
    u = (z - 3.5) / 1.5
    cheb = np.polynomial.Chebyshev.fit(u, diff, deg, domain=[-1, 1])
    fitted = cheb(u)
    scale = max(1.0, np.abs(F_singular(d, z)).max())
    resid = float(np.abs(fitted - diff).max() / scale)
    if resid > 1e-10:
        raise NumericError("polynomial part not recovered to 1e-10", residual=resid)
    poly_u = cheb.convert(kind=np.polynomial.Polynomial).coef
    # substitute u = (z - 3.5) / 1.5
    coef = np.zeros(deg + 1)
    lin = np.array([-3.5 / 1.5, 1 / 1.5])
    term = np.array([1.0])
    for c in poly_u:
        coef[: len(term)] += c * term
        term = npoly.polymul(term, lin)
    labels = []
    big = max(1.0, np.abs(coef).max())
    for i, c in enumerate(coef):
        if abs(c) < 1e-8 * big:
            coef[i], lab = 0.0, "0"
        else:
            coef[i], lab = _rationalize(c, 1e-8 * big / max(1.0, abs(c)))
        labels.append(lab)
    return coef, labels, resid


def recurrence_check(gamma: float, zetas) -> tuple[float, float]:
    """(C_gamma, max normalised residual of F_{gamma+1} - (1 - z^2) F_gamma - C_gamma z)."""
    zetas = np.asarray(zetas, dtype=complex)
    t, w = _jacobi(400, float(gamma), float(gamma))
    cg = float(w.sum())
    lhs = F_quadrature(gamma + 1, zetas)
    rhs = (1 - zetas ** 2) * F_quadrature(gamma, zetas) + cg * zetas
    scale = 1 + np.abs(lhs) + np.abs(cg * zetas)
    return cg, float(np.max(np.abs(lhs - rhs) / scale))


# ---------------------------------------------------------------------------
# contour quadrature


def F_contour(gamma: float, zeta, path, tol: float = 1e-12):
    """Integral of (1 - t^2)^gamma / (zeta - t) along a polygonal path from -1 to 1.

    The branch of (1 - t^2)^gamma is continued along the path from its
    positive value on the real segment.  Pieces touching +-1 use Gauss-Jacobi
    rules matching the endpoint singularity; other pieces are subdivided so
    each is no longer than its distance to zeta.
    """
    path = np.asarray(path, dtype=complex)
    if abs(path[0] + 1) > 1e-14 or abs(path[-1] - 1) > 1e-14:
        raise DomainError("contour must run from -1 to 1")
    zeta = complex(zeta)
    seg_a, seg_b = path[:-1], path[1:]
    dist = min(_point_segment_distance(zeta, a, b) for a, b in zip(seg_a, seg_b))
    if dist < 1e-6:
        raise DomainError("contour passes within 1e-6 of zeta")
    if abs(np.angle(path[1] + 1)) > np.pi - 1e-12 or abs(np.angle(1 - path[-2])) > np.pi - 1e-12:
        raise DomainError("contour must leave -1 and enter 1 away from the outward rays")
    # continuous arguments of (1 + t) and (1 - t) at the vertices
    nv = len(path)
    arg_p = np.zeros(nv)
    arg_m = np.zeros(nv)
    arg_p[1] = np.angle(path[1] + 1)
    for k in range(2, nv):
        arg_p[k] = arg_p[k - 1] + np.angle((path[k] + 1) / (path[k - 1] + 1))
    arg_m[0] = 0.0
    for k in range(1, nv - 1):
        arg_m[k] = arg_m[k - 1] + np.angle((1 - path[k]) / (1 - path[k - 1]))

    def log_p(t, k):
        """Continuous log(1 + t) on segment k."""
        ref = path[1] if k == 0 else path[k]
        base = arg_p[1] if k == 0 else arg_p[k]
        return np.log(np.abs(1 + t)) + 1j * (base + np.angle((t + 1) / (ref + 1)))

    def log_m(t, k):
        """Continuous log(1 - t) on segment k."""
        return np.log(np.abs(1 - t)) + 1j * (arg_m[k] + np.angle((1 - t) / (1 - path[k])))

    def piece(k, a, b, n):
        left = abs(a + 1) < 1e-15
        right = abs(b - 1) < 1e-15
        h = (b - a) / 2
        probe = a + h  # interior point giving the constant arguments of h
        if left and right:
            u, w = _jacobi(n, float(gamma), float(gamma))
            t = a + h * (u + 1)
            # (1 + t)(1 - t) = h^2 (1 + u)(1 - u); the args are those at the probe
            fac = np.exp(gamma * (2 * np.log(abs(h)) + 1j * (log_p(probe, k).imag + log_m(probe, k).imag)))
            return (h * w * fac / (zeta - t)).sum()
        if left:
            u, w = _jacobi(n, 0.0, float(gamma))
            t = a + h * (u + 1)
            fac = np.exp(gamma * (np.log(abs(h)) + 1j * log_p(probe, k).imag))
            return (h * w * fac * np.exp(gamma * log_m(t, k)) / (zeta - t)).sum()
        if right:
            u, w = _jacobi(n, float(gamma), 0.0)
            t = a + h * (u + 1)
            fac = np.exp(gamma * (np.log(abs(h)) + 1j * log_m(probe, k).imag))
            return (h * w * fac * np.exp(gamma * log_p(t, k)) / (zeta - t)).sum()
        u, w = np.polynomial.legendre.leggauss(n)
        t = a + h * (u + 1)
        return (h * w * np.exp(gamma * (log_p(t, k) + log_m(t, k))) / (zeta - t)).sum()

    def pieces():
        out = []
        for k, (a, b) in enumerate(zip(seg_a, seg_b)):
            stack = [(a, b)]
            while stack:
                x, y = stack.pop()
                mid_d = _point_segment_distance(zeta, x, y)
                if abs(y - x) > 2 * mid_d and abs(y - x) > 1e-9:
                    m = 0.5 * (x + y)
                    stack.extend([(m, y), (x, m)])
                else:
                    out.append((k, x, y))
        return out

    parts = pieces()
    n = 32
    prev = sum(piece(k, a, b, n) for k, a, b in parts)
    while True:
        n *= 2
        cur = sum(piece(k, a, b, n) for k, a, b in parts)
        if abs(cur - prev) <= tol * max(abs(cur), 1e-300):
            return cur
        if n > 4096:
            raise NumericError("contour quadrature did not converge", last_error=abs(cur - prev))
        prev = cur


def _point_segment_distance(z, a, b):
    ab = b - a
    if ab == 0:
        return abs(z - a)
    s = np.clip(((z - a) * np.conj(ab)).real / abs(ab) ** 2, 0, 1)
    return abs(z - (a + s * ab))


# ---------------------------------------------------------------------------
# branch tracking


@dataclass(frozen=True)
class BranchContext:
    """F_{(d-3)/2} carried along a path by continuity of ln(zeta +- 1)."""

    d: int
    zeta: complex
    log_plus: complex
    log_minus: complex
    path: tuple = field(default=())

    @classmethod
    def start(cls, d: int, zeta0: complex) -> "BranchContext":
        """Start on the principal sheet (the one carrying F_gamma itself)."""
        zeta0 = complex(zeta0)
        if min(abs(zeta0 - 1), abs(zeta0 + 1)) < 1e-12:
            raise DomainError("base point on a branch point")
        return cls(d, zeta0, complex(np.log(zeta0 + 1)), complex(np.log(zeta0 - 1)), (zeta0,))

    @property
    def windings(self) -> tuple[int, int]:
        """Net counterclockwise windings around (-1, +1) relative to the principal sheet."""
        wp = round((self.log_plus - np.log(self.zeta + 1)).imag / (2 * np.pi))
        wm = round((self.log_minus - np.log(self.zeta - 1)).imag / (2 * np.pi))
        return int(wp), int(wm)

    @property
    def value(self) -> complex:
        gamma = (self.d - 3) / 2
        z = self.zeta
        poly = npoly.polyval(z, P_d(self.d))
        if self.d % 2 == 0:
            sing = (-1) ** ((self.d - 2) // 2) * np.pi * np.exp(gamma * (self.log_plus + self.log_minus))
        else:
            sing = (1 - z ** 2) ** int(gamma) * (self.log_plus - self.log_minus)
        return complex(sing + poly)


def continue_along_path(ctx: BranchContext, path) -> BranchContext:
    """Continue the context along a polygonal path starting at ctx.zeta.

    Each segment is cut into steps shorter than a quarter of the distance
    to the nearer branch point, so each increment of arg(zeta -+ 1) is the
    principal argument of a ratio close to 1.
    """
    path = [complex(p) for p in path]
    if abs(path[0] - ctx.zeta) > 1e-12:
        path = [ctx.zeta] + path
    lp, lm, z = ctx.log_plus, ctx.log_minus, ctx.zeta
    for a, b in zip(path[:-1], path[1:]):
        d_min = min(_point_segment_distance(-1, a, b), _point_segment_distance(1, a, b))
        if d_min < 1e-12:
            raise DomainError("path passes through a branch point")
        nstep = int(np.ceil(abs(b - a) / (d_min / 4))) + 1
        if nstep > 10_000_000:
            raise NumericError("step adaptivity failure near a branch point")
        pts = a + (b - a) * np.arange(1, nstep + 1) / nstep
        prev = np.concatenate([[a], pts[:-1]])
        lp = lp + np.sum(np.log((pts + 1) / (prev + 1)))
        lm = lm + np.sum(np.log((pts - 1) / (prev - 1)))
        z = b
    return replace(ctx, zeta=z, log_plus=complex(lp), log_minus=complex(lm),
                   path=ctx.path + tuple(path[1:]))


def circle_path(center: complex, radius: float, start_angle: float = 0.0,
                turns: float = 1.0, n: int = 64):
    """Polygonal approximation of a circle; counterclockwise for turns > 0."""
    k = np.arange(int(abs(turns) * n) + 1)
    ang = start_angle + np.sign(turns) * 2 * np.pi * k / n
    return list(center + radius * np.exp(1j * ang))


def loop_around(base: complex, point: complex, radius: float, turns: int = 1, n: int = 64):
    """Closed path: base -> circle of given radius around point -> base."""
    base, point = complex(base), complex(point)
    direction = (base - point) / abs(base - point)
    start = point + radius * direction
    circle = circle_path(point, radius, float(np.angle(direction)), turns, n)
    return [base, start] + circle[1:] + [base]


def monodromy_shift(d: int, zeta, winding_plus: int = 0, winding_minus: int = 0):
    """Predicted change of F_{(d-3)/2} after net windings around -1 and +1 (odd d)."""
    gamma = (d - 3) / 2
    zeta = complex(zeta)
    if d % 2 == 0:
        raise DomainError("additive monodromy only for odd d")
    return 2j * np.pi * (1 - zeta ** 2) ** int(gamma) * (winding_plus - winding_minus)
