"""Analytic convex bodies described by their support functions.

A body K with 0 in its interior is stored through h_K(xi) = sup{xi.x : x in K}.
Everything else (boundary points, gauges, Finsler distances, the Omega form,
mixed volumes) is obtained from h_K and its first two derivatives.

Three families are built in:

* ``ball``       h(xi) = R |xi|, any dimension
* ``ellipsoid``  K = A.(unit ball), h(xi) = |A xi|, any dimension
* ``trig2d``     h(r e(phi)) = r hhat(phi) with
                 hhat = c0 + sum_k a_k cos(k phi) + b_k sin(k phi), k >= 2

In d = 2 all families also expose a complexifiable parametrisation of the
unit circle (``circle_jet``), which the continuation code relies on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, NumericError, ValidationError

UNIT_TOL = 1e-10


def _as_vectors(xi, dim):
    xi = np.asarray(xi)
    if not np.iscomplexobj(xi):
        xi = xi.astype(float)
    if xi.shape[-1] != dim:
        raise ValidationError(f"expected vectors of length {dim}, got shape {xi.shape}")
    return xi


@dataclass(frozen=True, eq=False)
class SupportBody:
    """Analytic strictly convex body given by its support function."""

    dim: int
    family: str
    radius: float = 1.0
    matrix: np.ndarray | None = None
    c0: float = 1.0
    harmonics: tuple = ()
    _a2: np.ndarray = field(default=None, repr=False)

    # -- constructors -----------------------------------------------------
    @classmethod
    def ball(cls, dim: int, radius: float = 1.0) -> "SupportBody":
        return cls(dim=dim, family="ball", radius=float(radius))

    @classmethod
    def ellipsoid(cls, matrix) -> "SupportBody":
        a = np.atleast_2d(np.asarray(matrix, dtype=float))
        if a.ndim == 2 and a.shape[0] == 1 and a.shape[1] > 1:
            a = np.diag(a[0])
        return cls(dim=a.shape[0], family="ellipsoid", matrix=a)

    @classmethod
    def trig2d(cls, c0: float, harmonics=()) -> "SupportBody":
        """``harmonics`` is a sequence of (k, a_k, b_k) with k >= 2."""
        harm = tuple((int(k), float(a), float(b)) for k, a, b in harmonics)
        return cls(dim=2, family="trig2d", c0=float(c0), harmonics=harm)

    def __post_init__(self):
        if self.dim < 2:
            raise ValidationError("dimension must be at least 2")
        if self.family == "ball":
            if not self.radius > 0:
                raise ValidationError("ball radius must be positive")
            a = self.radius * np.eye(self.dim)
            object.__setattr__(self, "matrix", a)
        elif self.family == "ellipsoid":
            a = np.asarray(self.matrix, dtype=float)
            if a.shape != (self.dim, self.dim):
                raise ValidationError("ellipsoid matrix must be square of size dim")
            if not np.allclose(a, a.T, rtol=0, atol=1e-14 * np.abs(a).max()):
                raise ValidationError("ellipsoid matrix must be symmetric")
            if np.linalg.eigvalsh(a).min() <= 0:
                raise ValidationError("ellipsoid matrix must be positive definite "
                                      "(smallest eigenvalue of A <= 0)")
        elif self.family == "trig2d":
            if self.dim != 2:
                raise ValidationError("trig2d bodies exist only in dimension 2")
            for k, _, _ in self.harmonics:
                if k < 2:
                    raise ValidationError("trig2d harmonics start at k = 2")
            margin = self.convexity_margin()
            if margin <= 0:
                raise ValidationError(
                    f"trig2d body is not strictly convex: min(ĥ+ĥ″) = {margin:.6g}, "
                    "i.e. ĥ+ĥ″ ≤ 0 somewhere")
            phi = np.linspace(0, 2 * np.pi, 2048, endpoint=False)
            if self.hhat(phi).min() <= 0:
                raise ValidationError("support function must be positive (0 inside K)")
        else:
            raise ValidationError(f"unknown body family {self.family!r}")
        if self.matrix is not None:
            object.__setattr__(self, "_a2", self.matrix @ self.matrix)

    # -- description ------------------------------------------------------
    def describe(self) -> dict:
        out = {"dim": self.dim, "family": self.family}
        if self.family == "ball":
            out["radius"] = self.radius
        elif self.family == "ellipsoid":
            out["matrix"] = self.matrix.tolist()
        else:
            out["c0"] = self.c0
            out["harmonics"] = [list(h) for h in self.harmonics]
        return out

    @property
    def is_symmetric(self) -> bool:
        if self.family != "trig2d":
            return True
        return all(k % 2 == 0 for k, a, b in self.harmonics if a or b)

    def convexity_margin(self) -> float:
        """min over the sphere of the smallest curvature radius."""
        if self.family == "trig2d":
            phi = np.linspace(0, 2 * np.pi, 4096, endpoint=False)
            return float((self.hhat(phi, 0) + self.hhat(phi, 2)).min())
        w = np.linalg.eigvalsh(self.matrix)
        return float(w.min() ** 2 / w.max())

    # -- trig2d profile -----------------------------------------------------
    def hhat(self, phi, n: int = 0):
        """n-th derivative of the angular profile (complex phi allowed)."""
        phi = np.asarray(phi)
        if self.family == "trig2d":
            out = np.zeros(phi.shape, dtype=phi.dtype if np.iscomplexobj(phi) else float)
            if n == 0:
                out = out + self.c0
            for k, a, b in self.harmonics:
                # d^n/dphi^n of a cos + b sin = k^n (a cos(kphi + n pi/2) + b sin(kphi + n pi/2))
                arg = k * phi + n * np.pi / 2
                out = out + k ** n * (a * np.cos(arg) + b * np.sin(arg))
            return out
        h0, h1, h2 = self.circle_jet(phi)
        if n > 2:
            raise ValidationError("profile derivatives above order 2 only for trig2d")
        return (h0, h1, h2)[n]

    def circle_jet(self, phi):
        """(hhat, hhat', hhat'') at angle(s) phi; holomorphic in phi."""
        if self.dim != 2:
            raise ValidationError("circle parametrisation only in dimension 2")
        phi = np.asarray(phi)
        if self.family == "trig2d":
            return self.hhat(phi, 0), self.hhat(phi, 1), self.hhat(phi, 2)
        a2 = self._a2
        mean = 0.5 * (a2[0, 0] + a2[1, 1])
        half = 0.5 * (a2[0, 0] - a2[1, 1])
        r = a2[0, 1]
        c2, s2 = np.cos(2 * phi), np.sin(2 * phi)
        q = mean + half * c2 + r * s2
        q1 = -2 * half * s2 + 2 * r * c2
        q2 = -4 * (half * c2 + r * s2)
        h0 = np.sqrt(q)
        h1 = q1 / (2 * h0)
        h2 = (0.5 * q2 - h1 ** 2) / h0
        return h0, h1, h2

    def circle_h3(self, phi):
        """Third derivative of the angular profile (holomorphic in phi)."""
        if self.family == "trig2d":
            return self.hhat(phi, 3)
        a2 = self._a2
        half = 0.5 * (a2[0, 0] - a2[1, 1])
        r = a2[0, 1]
        c2, s2 = np.cos(2 * phi), np.sin(2 * phi)
        q3 = 8 * (half * s2 - r * c2)
        h0, h1, h2 = self.circle_jet(phi)
        return (0.5 * q3 - 3 * h1 * h2) / h0

    def circle_boundary2(self, phi):
        """Second phi-derivative of v(theta(phi))."""
        h0, h1, h2 = self.circle_jet(phi)
        h3 = self.circle_h3(phi)
        c, s = np.cos(phi), np.sin(phi)
        a, b = h1 + h3, h0 + h2
        return np.stack([-a * s - b * c, a * c - b * s], axis=-1)

    def circle_boundary(self, phi):
        """v(theta(phi)) and dv/dphi, both holomorphic in phi; shapes (..., 2)."""
        h0, h1, h2 = self.circle_jet(phi)
        c, s = np.cos(phi), np.sin(phi)
        v = np.stack([h0 * c - h1 * s, h0 * s + h1 * c], axis=-1)
        rad = h0 + h2
        dv = np.stack([-rad * s, rad * c], axis=-1)
        return v, dv

    # -- support function and derivatives ---------------------------------
    def support(self, xi):
        xi = _as_vectors(xi, self.dim)
        if self.family == "trig2d":
            r = np.hypot(xi[..., 0], xi[..., 1])
            return r * self.hhat(np.arctan2(xi[..., 1], xi[..., 0]))
        return np.sqrt(np.sum(xi * (xi @ self._a2.T), axis=-1))

    def gradient(self, xi):
        xi = _as_vectors(xi, self.dim)
        if self.family == "trig2d":
            phi = np.arctan2(xi[..., 1], xi[..., 0])
            v, _ = self.circle_boundary(phi)
            return v
        a2x = xi @ self._a2.T
        h = np.sqrt(np.sum(xi * a2x, axis=-1))
        return a2x / h[..., None]

    def hessian(self, xi):
        xi = _as_vectors(xi, self.dim)
        if self.family == "trig2d":
            r = np.hypot(xi[..., 0], xi[..., 1])
            phi = np.arctan2(xi[..., 1], xi[..., 0])
            rad = self.hhat(phi, 0) + self.hhat(phi, 2)
            e = np.stack([-np.sin(phi), np.cos(phi)], axis=-1)
            return (rad / r)[..., None, None] * e[..., :, None] * e[..., None, :]
        a2x = xi @ self._a2.T
        h = np.sqrt(np.sum(xi * a2x, axis=-1))[..., None, None]
        return self._a2 / h - a2x[..., :, None] * a2x[..., None, :] / h ** 3

    def dual_gauge(self, x):
        """Closed-form gauge |A^{-1} x| for balls/ellipsoids, else None."""
        if self.family == "trig2d":
            return None
        x = _as_vectors(x, self.dim)
        return np.linalg.norm(np.linalg.solve(self.matrix, np.moveaxis(x, -1, 0).reshape(self.dim, -1)),
                              axis=0).reshape(x.shape[:-1])


@dataclass(frozen=True, eq=False)
class ConvexTarget:
    """Either a point x0 or a translated body center + K0."""

    dim: int
    point: np.ndarray | None = None
    body: SupportBody | None = None
    center: np.ndarray | None = None

    @classmethod
    def at_point(cls, x0) -> "ConvexTarget":
        x0 = np.asarray(x0, dtype=float).ravel()
        return cls(dim=x0.size, point=x0)

    @classmethod
    def from_body(cls, body: SupportBody, center=None) -> "ConvexTarget":
        c = np.zeros(body.dim) if center is None else np.asarray(center, dtype=float).ravel()
        if c.size != body.dim:
            raise ValidationError("target center has wrong dimension")
        return cls(dim=body.dim, body=body, center=c)

    @property
    def is_point(self) -> bool:
        return self.body is None

    @property
    def anchor(self) -> np.ndarray:
        return self.point if self.is_point else self.center

    def describe(self) -> dict:
        if self.is_point:
            return {"kind": "point", "point": self.point.tolist()}
        return {"kind": "body", "center": self.center.tolist(), "body": self.body.describe()}

    def support(self, xi):
        xi = _as_vectors(xi, self.dim)
        val = xi @ self.anchor
        if not self.is_point:
            val = val + self.body.support(xi)
        return val

    def gradient(self, xi):
        """Boundary point x_{K0}(theta) (constant for a point target)."""
        xi = _as_vectors(xi, self.dim)
        g = np.broadcast_to(self.anchor, xi.shape).copy()
        if not self.is_point:
            g = g + self.body.gradient(xi)
        return g

    def hessian(self, xi):
        xi = _as_vectors(xi, self.dim)
        if self.is_point:
            return np.zeros(xi.shape + (self.dim,))
        return self.body.hessian(xi)

    def circle_boundary(self, phi):
        """x_{K0}(theta(phi)) and its phi-derivative, holomorphic in phi."""
        phi = np.asarray(phi)
        shape = phi.shape + (2,)
        if self.is_point:
            return (np.broadcast_to(self.point, shape).astype(phi.dtype if np.iscomplexobj(phi) else float),
                    np.zeros(shape, dtype=complex if np.iscomplexobj(phi) else float))
        v, dv = self.body.circle_boundary(phi)
        return v + self.center, dv

    def contains(self, x):
        """True where x lies in the (closed) target set."""
        x = np.asarray(x, dtype=float)
        if self.is_point:
            return np.all(x == self.point, axis=-1)
        g = gauge(self.body, x - self.center)
        return g <= 1.0


# ---------------------------------------------------------------------------
# sphere grids and tangent frames


def sphere_grid(dim: int, n: int):
    """Quadrature nodes and weights on S^{dim-1}.

    d = 2: n-point periodic trapezoid.  d = 3: n Gauss-Legendre nodes in the
    height times 2n trapezoid nodes in azimuth (exact on spherical
    polynomials of degree < 2n).
    """
    if dim == 2:
        phi = 2 * np.pi * np.arange(n) / n
        pts = np.stack([np.cos(phi), np.sin(phi)], axis=-1)
        return pts, np.full(n, 2 * np.pi / n)
    if dim == 3:
        z, wz = np.polynomial.legendre.leggauss(n)
        naz = 2 * n
        az = 2 * np.pi * (np.arange(naz) + 0.5) / naz
        zz, aa = np.meshgrid(z, az, indexing="ij")
        rho = np.sqrt(1 - zz ** 2)
        pts = np.stack([rho * np.cos(aa), rho * np.sin(aa), zz], axis=-1).reshape(-1, 3)
        w = (wz[:, None] * np.full(naz, 2 * np.pi / naz)[None, :]).ravel()
        return pts, w
    raise ValidationError("sphere quadrature implemented for d = 2, 3")


def tangent_frame(theta):
    """Orthonormal basis E of theta-perp with det[theta, E] = 1; shape (..., d, d-1)."""
    theta = np.asarray(theta, dtype=float)
    d = theta.shape[-1]
    if d == 2:
        return np.stack([-theta[..., 1], theta[..., 0]], axis=-1)[..., None]
    if d == 3:
        ax = np.argmin(np.abs(theta), axis=-1)
        a = np.zeros_like(theta)
        np.put_along_axis(a, ax[..., None], 1.0, axis=-1)
        e1 = a - np.sum(a * theta, axis=-1, keepdims=True) * theta
        e1 /= np.linalg.norm(e1, axis=-1, keepdims=True)
        e2 = np.cross(theta, e1)
        return np.stack([e1, e2], axis=-1)
    # general d: QR on [theta, I] then fix orientation
    flat = theta.reshape(-1, d)
    out = np.empty(flat.shape + (d - 1,))
    for i, t in enumerate(flat):
        q, _ = np.linalg.qr(np.column_stack([t, np.eye(d)]))
        q = q[:, :d] * np.sign(q[:, 0] @ t)
        e = q[:, 1:]
        if np.linalg.det(np.column_stack([t, e])) < 0:
            e[:, 0] *= -1
        out[i] = e
    return out.reshape(theta.shape + (d - 1,))


def _check_unit(theta):
    theta = np.asarray(theta, dtype=float)
    if np.any(np.abs(np.linalg.norm(theta, axis=-1) - 1) > UNIT_TOL):
        raise DomainError("theta must be a unit vector")
    return theta


# ---------------------------------------------------------------------------
# public operations


def support(body: SupportBody, xi):
    xi = _as_vectors(xi, body.dim)
    if np.any(np.linalg.norm(xi, axis=-1) == 0):
        raise DomainError("support function undefined at the zero vector")
    return body.support(xi)


def inverse_gauss(body: SupportBody, theta):
    """Boundary point v(theta) = grad h_K(theta) with outward normal theta."""
    theta = _check_unit(_as_vectors(theta, body.dim))
    return body.gradient(theta)


def _coarse_directions(dim):
    if dim == 2:
        return sphere_grid(2, 256)[0]
    pol = (np.arange(32) + 0.5) * np.pi / 32
    az = np.arange(64) * 2 * np.pi / 64
    p, a = np.meshgrid(pol, az, indexing="ij")
    return np.stack([np.sin(p) * np.cos(a), np.sin(p) * np.sin(a), np.cos(p)], axis=-1).reshape(-1, 3)


def _maximize_ratio(body: SupportBody, target, x, max_iter: int = 60):
    """sup over unit theta of (x.theta - h_T(theta)) / h_K(theta), for rows of x.

    ``target`` may be None (plain gauge).  Coarse grid then Riemannian Newton.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    d = body.dim
    grid = _coarse_directions(d)
    hk_grid = body.support(grid)
    ht_grid = target.support(grid) if target is not None else np.zeros(len(grid))
    chunk = max(1, int(2_000_000 // len(grid)))
    theta = np.empty_like(x)
    for i in range(0, len(x), chunk):
        vals = (x[i:i + chunk] @ grid.T - ht_grid) / hk_grid
        theta[i:i + chunk] = grid[np.argmax(vals, axis=1)]

    scale = 1.0 + np.linalg.norm(x, axis=1) / body.support(grid).min()
    active = np.ones(len(x), dtype=bool)
    value = np.empty(len(x))
    for _ in range(max_iter):
        idx = np.nonzero(active)[0]
        if idx.size == 0:
            break
        th, xx = theta[idx], x[idx]
        dk, gk, hk = body.support(th), body.gradient(th), body.hessian(th)
        if target is None:
            nn = np.sum(xx * th, axis=1)
            gn = xx
            hn = np.zeros((len(idx), d, d))
        else:
            nn = np.sum(xx * th, axis=1) - target.support(th)
            gn = xx - target.gradient(th)
            hn = -target.hessian(th)
        g = nn / dk
        grad = (gn - g[:, None] * gk) / dk[:, None]
        hess = (hn - g[:, None, None] * hk - grad[:, :, None] * gk[:, None, :]
                - gk[:, :, None] * grad[:, None, :]) / dk[:, None, None]
        e = tangent_frame(th)
        gs = np.einsum("nij,ni->nj", e, grad)
        hs = np.einsum("nia,nij,njb->nab", e, hess, e)
        value[idx] = g
        gnorm = np.linalg.norm(gs, axis=1)
        done = gnorm <= 1e-12 * scale[idx]
        # Newton where the tangent Hessian is negative definite, gradient step otherwise
        eig_max = np.linalg.eigvalsh(hs)[:, -1]
        ok = eig_max < 0
        step = np.zeros_like(gs)
        if ok.any():
            step[ok] = -np.linalg.solve(hs[ok], gs[ok][..., None])[..., 0]
        bad = ~ok
        if bad.any():
            step[bad] = 0.05 * gs[bad] / np.maximum(gnorm[bad, None], 1e-300)
        snorm = np.linalg.norm(step, axis=1)
        step *= np.minimum(1.0, 0.2 / np.maximum(snorm, 1e-300))[:, None]
        new = th + np.einsum("nij,nj->ni", e, step)
        new /= np.linalg.norm(new, axis=1, keepdims=True)
        upd = ~done
        theta[idx[upd]] = new[upd]
        small = snorm <= 1e-15
        active[idx[done | (small & ok)]] = False
    if active.any():
        raise NumericError("sphere maximisation did not converge",
                           points=x[active][:5].tolist())
    return value, theta


def gauge(body: SupportBody, x):
    """Minkowski gauge inf{t > 0 : x in tK} = h_{K°}(x) by sphere maximisation."""
    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 1
    xx = np.atleast_2d(_as_vectors(x, body.dim))
    out = np.zeros(len(xx))
    nz = np.linalg.norm(xx, axis=1) > 0
    if nz.any():
        out[nz] = _maximize_ratio(body, None, xx[nz])[0]
    return float(out[0]) if scalar else out


def finsler_distance(body: SupportBody, target: ConvexTarget, x, closed_form: bool = True):
    """d_K(T, x) = sup_theta (x.theta - h_T(theta)) / h_K(theta), clipped at 0.

    Closed forms are used where they exist (point targets of balls and
    ellipsoids, concentric ball/ball) unless ``closed_form`` is False.
    """
    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 1
    xx = np.atleast_2d(_as_vectors(x, body.dim))
    out = None
    if closed_form:
        out = _closed_form_distance(body, target, xx)
    if out is None:
        out = np.maximum(_maximize_ratio(body, target, xx)[0], 0.0)
        if target.is_point:
            out[np.all(xx == target.point, axis=1)] = 0.0
    return float(out[0]) if scalar else out


def _closed_form_distance(body, target, x):
    if target.is_point and body.family != "trig2d":
        return body.dual_gauge(x - target.point)
    if (not target.is_point and body.family == "ball" and target.body.family == "ball"):
        r = np.linalg.norm(x - target.center, axis=1)
        return np.maximum(r - target.body.radius, 0.0) / body.radius
    return None


def omega_coefficients(body: SupportBody, target: ConvexTarget, theta):
    """Coefficients (Omega_0, ..., Omega_{d-1}) of t -> det[v, (t H_K + H_T) E].

    This is the density of the pulled-back form Omega(t, theta) against the
    sphere volume.  Shape (..., d).
    """
    theta = _check_unit(_as_vectors(theta, body.dim))
    d = body.dim
    v = body.gradient(theta)
    e = tangent_frame(theta)
    hk = body.hessian(theta) @ e
    ht = target.hessian(theta) @ e
    ts = np.arange(d, dtype=float)
    dets = []
    for t in ts:
        m = np.concatenate([v[..., :, None], t * hk + ht], axis=-1)
        dets.append(np.linalg.det(m))
    dets = np.stack(dets, axis=-1)
    vander = np.vander(ts, d, increasing=True)
    return dets @ np.linalg.inv(vander).T


def omega_holomorphic(body: SupportBody, target: ConvexTarget, theta):
    """Omega coefficients without a tangent frame, valid for complex theta.

    With H_K, H_T the Hessians (which annihilate theta), Omega(t) = h_K times
    the tangential determinant of t H_K + H_T, expanded through traces.
    """
    theta = _as_vectors(theta, body.dim)
    h = body.support(theta)
    hk = body.hessian(theta)
    ht = target.hessian(theta)
    tr = lambda m: np.trace(m, axis1=-2, axis2=-1)
    if body.dim == 2:
        return np.stack([h * tr(ht), h * tr(hk)], axis=-1)
    if body.dim != 3:
        raise ValidationError("frame-free Omega implemented for d = 2, 3")
    e2 = lambda m: 0.5 * (tr(m) ** 2 - tr(m @ m))
    mixed = tr(hk) * tr(ht) - tr(hk @ ht)
    return np.stack([h * e2(ht), h * mixed, h * e2(hk)], axis=-1)


def omega_circle(body: SupportBody, target: ConvexTarget, phi):
    """(Omega_0, Omega_1) at angle phi in d = 2, holomorphic in phi."""
    v, dv = body.circle_boundary(phi)
    _, dx = target.circle_boundary(phi)
    cross = lambda a, b: a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]
    return cross(v, dx), cross(v, dv)


def omega_integrals(body: SupportBody, target: ConvexTarget, n: int | None = None):
    """W_l = integral over the sphere of Omega_l, l = 0..d-1."""
    d = body.dim
    n = n or (1024 if d == 2 else 64)
    pts, w = sphere_grid(d, n)
    om = omega_coefficients(body, target, pts)
    return w @ om


def _mixed_volume_integrand(body, target, theta, t):
    e = tangent_frame(theta)
    h = target.support(theta) + t * body.support(theta)
    hh = target.hessian(theta) + t * body.hessian(theta)
    det = np.linalg.det(np.swapaxes(e, -1, -2) @ hh @ e)
    return h * det


def minkowski_volume_poly(target: ConvexTarget, body: SupportBody, n: int | None = None):
    """(V_d, ..., V_0) with Vol(K0 + tK) = sum_l t^l V_{d-l}.

    Volumes of K0 + t_i K come from Vol = (1/d) integral of h det(E^T Hess h E)
    over the sphere; the polynomial is fitted through d + 1 nodes t_i.
    """
    d = body.dim
    if d not in (2, 3):
        raise ValidationError("mixed volumes implemented for d = 2, 3")
    n = n or (1024 if d == 2 else 64)
    pts, w = sphere_grid(d, n)
    ts = 0.5 * np.arange(1, d + 2)
    vols = np.array([w @ _mixed_volume_integrand(body, target, pts, t) / d for t in ts])
    vander = np.vander(ts, d + 1, increasing=True)
    if np.linalg.cond(vander) > 1e8:
        raise NumericError("ill-conditioned volume fit")
    coef = np.linalg.solve(vander, vols)
    if np.any(vols < -1e-12):
        raise NumericError("negative fitted volume: invalid body", volumes=vols.tolist())
    coef[np.abs(coef) < 1e-13 * np.abs(coef).max()] = 0.0
    return coef


def geometric_constants(body: SupportBody, n: int = 64):
    """Empirical constant c0 for the two-sided Morse bounds of omega.v.

    Checks |grad_S (omega.v)(theta)|^2 >= c0 dist^2 and
    |omega.v(theta) - omega.v(+-omega)| <= dist^2 / c0 on a grid of pairs,
    where dist is the angular distance from theta to the nearer of +-omega.
    Returns (c0, passed, violating_pair_or_None).
    """
    d = body.dim
    if d == 2:
        om, _ = sphere_grid(2, n)
        th = om
    else:
        om, _ = sphere_grid(3, max(4, n // 4))
        th, _ = sphere_grid(3, n // 2)
    hth = body.hessian(th)
    vth = body.gradient(th)
    c_lo, c_hi = np.inf, 0.0
    for w in om:
        cos = np.clip(th @ w, -1, 1)
        near = np.where(cos >= 0, 1.0, -1.0)
        dist = np.arccos(np.abs(cos))
        keep = dist > 1e-6
        grad2 = np.sum((hth @ w) ** 2, axis=-1)
        f = vth @ w
        fcrit = np.where(near > 0, body.support(w), -body.support(-w))
        r1 = grad2[keep] / dist[keep] ** 2
        r2 = np.abs(f - fcrit)[keep] / dist[keep] ** 2
        if r1.size and r1.min() <= 1e-12:
            j = np.argmin(r1)
            return 0.0, False, (w.tolist(), th[keep][j].tolist())
        c_lo = min(c_lo, r1.min())
        c_hi = max(c_hi, r2.max())
    c0 = min(c_lo, 1.0 / c_hi)
    return float(c0), bool(c0 > 0), None


def area_2d(body_or_profile, n: int = 1024) -> float:
    """Area 1/2 integral of (hhat^2 - hhat'^2) for a planar body."""
    phi = 2 * np.pi * np.arange(n) / n
    h0, h1, _ = body_or_profile.circle_jet(phi)
    return float(0.5 * np.mean(h0 ** 2 - h1 ** 2) * 2 * np.pi)


def unit_ball_volume(d: int) -> float:
    return math.pi ** (d / 2) / math.gamma(d / 2 + 1)


def body_volume(body: SupportBody) -> float:
    if body.family == "trig2d":
        return area_2d(body)
    return unit_ball_volume(body.dim) * abs(np.linalg.det(body.matrix))
