"""Lattice points of 2πZ^d under a Finsler distance, and the spectrum table."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import NumericError, ValidationError
from .geometry import ConvexTarget, SupportBody, finsler_distance, sphere_grid, tangent_frame

TWO_PI = 2 * np.pi


def norm_equivalence(body: SupportBody, n: int | None = None):
    """Constants (m, M) with m h_K(xi) <= |xi| <= M h_K(xi) for every xi != 0.

    Extremes of h on the unit sphere are taken on a grid and widened by
    C delta^2 / 2, where delta is the grid covering radius and C is 1.5 times
    the largest spherical Hessian norm seen on the grid (the gradient vanishes
    at the true extremum, so this is a second-order Taylor margin).
    """
    d = body.dim
    if d == 2:
        n = n or 4096
        pts, _ = sphere_grid(2, n)
        delta = np.pi / n
    elif d == 3:
        n = n or 96
        pts, _ = sphere_grid(3, n)
        delta = np.pi / n
    else:
        if body.family == "trig2d":
            raise ValidationError("trig2d bodies are planar")
        sv = np.linalg.svd(body.matrix, compute_uv=False)
        return 1.0 / sv.max(), 1.0 / sv.min()
    h = body.support(pts)
    e = tangent_frame(pts)
    sph = np.swapaxes(e, -1, -2) @ body.hessian(pts) @ e - h[:, None, None] * np.eye(d - 1)
    c = 1.5 * np.abs(np.linalg.eigvalsh(sph)).max()
    margin = 0.5 * c * delta ** 2
    hmin = h.min() - margin
    if hmin <= 0:
        raise NumericError("norm-equivalence margin exceeds min h_K (degenerate body)",
                           hmin=float(h.min()), margin=float(margin))
    return float(1.0 / (h.max() + margin)), float(1.0 / hmin)


def _integer_box(radius: float, d: int, center=None):
    """Integer vectors k with |2πk - center| <= radius, lexicographic order."""
    center = np.zeros(d) if center is None else np.asarray(center, dtype=float)
    lo = np.floor((center - radius) / TWO_PI).astype(int)
    hi = np.ceil((center + radius) / TWO_PI).astype(int)
    axes = [np.arange(a, b + 1) for a, b in zip(lo, hi)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    keep = np.linalg.norm(TWO_PI * grid - center, axis=1) <= radius + 1e-9
    return grid[keep]


def target_radius(target: ConvexTarget) -> float:
    """Largest distance from the target anchor to a point of the target."""
    if target.is_point:
        return 0.0
    m, _ = norm_equivalence(target.body)
    return 1.0 / m


def enumerate_points(body: SupportBody, target: ConvexTarget, tmax: float,
                     closed_form: bool = True):
    """Lattice points x in 2πZ^d with 0 < d_K(T, x) <= tmax.

    Returns (points, distances) in lexicographic order of the integer labels.
    Points inside the target (distance 0) are excluded.
    """
    if not tmax > 0:
        raise ValidationError("tmax must be positive")
    m, _ = norm_equivalence(body)
    radius = target_radius(target) + tmax / m
    k = _integer_box(radius, body.dim, target.anchor)
    x = TWO_PI * k.astype(float)
    if len(x) == 0:
        return x, np.zeros(0)
    dist = finsler_distance(body, target, x, closed_form=closed_form)
    keep = (dist <= tmax) & (dist > 0)
    return x[keep], dist[keep]


def count(body: SupportBody, target: ConvexTarget, tmax: float) -> int:
    return len(enumerate_points(body, target, tmax)[1])


def brute_force_points(body, target, tmax, box: int):
    """Independent scan of the full cube |k_i| <= box (no norm bound)."""
    d = body.dim
    ks = np.array(list(itertools.product(range(-box, box + 1), repeat=d)), dtype=float)
    x = TWO_PI * ks
    dist = finsler_distance(body, target, x, closed_form=False)
    keep = (dist <= tmax) & (dist > 0)
    return x[keep], dist[keep]


@dataclass
class SpectrumTable:
    """Sorted values h_K(xi) (sign +) and h_K(-xi) (sign -) for xi in Z^d minus 0."""

    values: np.ndarray
    xis: np.ndarray
    signs: np.ndarray
    cutoff: float

    def __len__(self):
        return len(self.values)

    def distinct(self, sign: int | None = None, tol: float = 1e-12):
        """Merged values with multiplicities (number of generating xi)."""
        vals = self.values if sign is None else self.values[self.signs == sign]
        out = []
        for v in vals:
            if out and abs(v - out[-1][0]) <= tol * max(1.0, v):
                out[-1][1] += 1
            else:
                out.append([float(v), 1])
        return [(v, c) for v, c in out]

    def rows(self):
        for v, xi, sg in zip(self.values, self.xis, self.signs):
            yield [int(c) for c in xi], float(v), "+" if sg > 0 else "-"


def spectrum(body: SupportBody, lam_max: float) -> SpectrumTable:
    """All h_K(+-xi) <= lam_max over nonzero integer xi, sorted ascending."""
    if not lam_max > 0:
        raise ValidationError("lam_max must be positive")
    d = body.dim
    _, big_m = norm_equivalence(body)
    r = int(np.floor(big_m * lam_max)) + 1
    ks = np.array(list(itertools.product(range(-r, r + 1), repeat=d)), dtype=float)
    ks = ks[(np.linalg.norm(ks, axis=1) <= big_m * lam_max + 1e-9) & np.any(ks != 0, axis=1)]
    vals, xis, signs = [], [], []
    for sg in (1, -1):
        h = body.support(sg * ks)
        keep = h <= lam_max
        vals.append(h[keep])
        xis.append(ks[keep])
        signs.append(np.full(keep.sum(), sg))
    vals, xis, signs = np.concatenate(vals), np.concatenate(xis), np.concatenate(signs)
    order = np.lexsort(tuple(xis[:, j] for j in range(d - 1, -1, -1)) + (-signs, np.round(vals, 12)))
    return SpectrumTable(vals[order], xis[order].astype(int), signs[order], float(lam_max))
