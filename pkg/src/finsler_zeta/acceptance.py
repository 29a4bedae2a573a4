"""Acceptance checks: one function per criterion, each returning a Criterion.

Every check evaluates the quantities independently and compares them with
the stated tolerance; nothing is cached between criteria.  ``run_all``
runs them in order and is what ``finsler-zeta verify`` and the test suite
call.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import branch, coarea, lattice, norms, poincare, resolvent
from .geometry import ConvexTarget, SupportBody, minkowski_volume_poly


@dataclass
class Criterion:
    number: int
    name: str
    passed: bool
    detail: dict = field(default_factory=dict)
    seconds: float = 0.0
    budget: float = 0.0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] {self.number:2d} {self.name} ({self.seconds:.1f}s / {self.budget:.0f}s)"

    def to_json(self) -> dict:
        return {"number": self.number, "name": self.name, "passed": self.passed,
                "seconds": self.seconds, "budget": self.budget, "detail": _plain(self.detail)}


def _plain(x):
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (complex, np.complexfloating)):
        return [float(np.real(x)), float(np.imag(x))]
    if isinstance(x, (np.floating, float)):
        return float(x)
    return x


def _circle_functions():
    return [coarea.CircleFunction.trig([(1, 1.0, 0.0)], "cos"),
            coarea.CircleFunction.trig([(1, 1.0, 0.0), (2, 0.2, 0.0)], "cos+0.2cos2"),
            coarea.CircleFunction.trig([(1, 0.8, 0.3), (3, 0.05, 0.02)], "trig3")]


def _ellipsoid_function():
    return coarea.SphereFunction(SupportBody.ellipsoid(np.diag([1.0, 1.5, 2.0])), [0.3, 0.5, 0.8])


def _trig_body():
    return SupportBody.trig2d(1.0, [(3, 0.05, 0.0), (2, 0.0, 0.04)])


# ---------------------------------------------------------------------------


def ball_oracle() -> dict:
    rows, ok = [], True
    for d, xi_max in ((2, 200.0), (3, 100.0)):
        body, target = SupportBody.ball(d), ConvexTarget.at_point(np.ones(d))
        for s in (0.5, 1.0, 2.0):
            dv = poincare.direct(body, target, s, tol=1e-10)
            ov = poincare.ball_point_oracle(d, np.ones(d), s, xi_max)
            rel = abs(dv.value - ov.value) / abs(dv.value)
            certified = dv.tail <= 1e-8 * abs(dv.value) and ov.tail <= 1e-7 * abs(dv.value)
            ok &= rel <= 1e-6 and certified
            rows.append({"d": d, "s": s, "direct": dv.value, "oracle": ov.value, "rel": rel,
                         "direct_tail": dv.tail, "oracle_tail": ov.tail})
    return {"passed": ok, "rows": rows}


def counting() -> dict:
    body, target = SupportBody.ball(2), ConvexTarget.at_point([1.0, 1.0])
    T = 200.0
    n = lattice.count(body, target, T)
    ratio = n * 4 * math.pi / T ** 2
    return {"passed": abs(ratio - 1) <= 0.05, "N": n, "ratio": ratio}


def pole_structure() -> dict:
    disc = SupportBody.ball(2)
    point = ConvexTarget.at_point([1.0, 1.0])
    ss = np.linspace(0.05, 0.2, 7)
    dev = []
    for s in ss:
        ev = poincare.direct(disc, point, s, tol=1e-10)
        dev.append(abs(s ** 2 * ev.value - 1 / (2 * math.pi)))
    sup_dev = max(dev)
    ok_point = sup_dev <= 0.02 / (2 * math.pi)
    ball = ConvexTarget.from_body(SupportBody.ball(2))
    vols = minkowski_volume_poly(ball, disc)
    coef = poincare.pole_coefficients(disc, ball)
    expected = np.array([2 * math.pi, 2 * math.pi]) / (2 * math.pi) ** 2  # (1! V_1, 2! V_0)
    ok_coef = np.allclose(vols, [math.pi, 2 * math.pi, math.pi], rtol=1e-10) and \
        np.allclose(coef, expected, rtol=1e-8)
    resid = [abs(poincare.direct(disc, ball, s, tol=1e-10).value - poincare.pole_part(disc, ball, s))
             for s in (0.05, 0.1, 0.2)]
    # s spans a factor 4: a leftover 1/s term would grow the residual fourfold, a 1/s^2 term sixteenfold
    ok_resid = max(resid) <= 2 * min(resid)
    return {"passed": bool(ok_point and ok_coef and ok_resid), "sup_deviation": sup_dev,
            "mixed_volumes": vols.tolist(), "pole_coefficients": list(coef), "residuals": resid}


def coarea_identity(seed: int = 1) -> dict:
    rng = np.random.default_rng(seed)
    fns = _circle_functions()[:2] + [_circle_functions()[2], coarea.SphereFunction.height(),
                                     _ellipsoid_function()]
    worst = {}
    for fn in fns:
        ld = coarea.density_fit(fn)
        w = 0.0
        for _ in range(20):
            while True:
                z = complex(rng.uniform(fn.fmin - 1, fn.fmax + 1), rng.uniform(-1, 1))
                dist = abs(z.imag) if fn.fmin < z.real < fn.fmax else min(abs(z - fn.fmin), abs(z - fn.fmax))
                if dist >= 0.2:
                    break
            a = coarea.cauchy_transform(ld, z)
            b = coarea.direct_integral(fn, None, z)
            w = max(w, abs(a - b) / abs(b))
        worst[fn.name] = w
    return {"passed": max(worst.values()) <= 1e-8, "worst_relative": worst}


def closed_forms() -> dict:
    zetas = np.array([2.0 + 0.5j, -1.5 + 1.0j, 0.3 + 0.7j, 3.0 - 0.2j, -0.4 - 1.3j])
    quad = {}
    for d in (2, 3, 4, 5):
        g = (d - 3) / 2
        q = branch.F_quadrature(g, zetas)
        c = branch.F_closed(d, zetas)
        quad[d] = float(np.max(np.abs(q - c) / np.abs(c)))
    rec = {g: branch.recurrence_check(g, zetas)[1] for g in (-0.5, 0.0, 0.5, 1.0)}
    c4, _, _ = branch.P_d_extract(4)
    c5, _, _ = branch.P_d_extract(5)
    e4 = float(np.max(np.abs(np.pad(c4, (0, max(0, 2 - len(c4)))) - [0.0, math.pi])))
    e5 = float(np.max(np.abs(np.pad(c5, (0, max(0, 3 - len(c5))))[:3] - [0.0, 2.0, 0.0])))
    ok = max(quad.values()) <= 1e-10 and max(rec.values()) <= 1e-12 and e4 <= 1e-8 and e5 <= 1e-8
    return {"passed": ok, "quadrature_vs_closed": quad, "recurrence": rec,
            "P4": list(c4), "P5": list(c5), "P4_error": e4, "P5_error": e5}


def plemelj() -> dict:
    out = {}
    for fn in (_circle_functions()[0], coarea.SphereFunction.height()):
        ld = coarea.density_fit(fn)
        taus = np.linspace(fn.fmin, fn.fmax, 7)[1:-1]
        out[fn.name] = max(abs(coarea.plemelj_jump(ld, t) + 2j * math.pi * coarea.density(fn, None, t))
                           for t in taus)
    return {"passed": max(out.values()) <= 1e-4, "max_error": out}


def endpoint_exponents() -> dict:
    cos = _circle_functions()[0]
    height = coarea.SphereFunction.height()
    j2 = coarea.critical_exponent(cos)[0]
    j3 = coarea.critical_exponent(height)[0]
    edge2 = resolvent.edge_exponent(cos)[0]
    log3 = resolvent.edge_exponent(height)[0]
    ok = abs(j2 + 0.5) <= 0.02 and abs(j3) <= 0.02 and abs(edge2 + 0.5) <= 0.02 and \
        abs(log3 / (-2 * math.pi) - 1) <= 0.01
    return {"passed": ok, "J_exponent_d2": j2, "J_exponent_d3": j3, "pairing_exponent_d2": edge2,
            "log_coefficient_d3": log3}


def second_sheet() -> dict:
    rng = np.random.default_rng(7)
    fns = [_circle_functions()[0], coarea.CircleFunction.projection(_trig_body(), [0.6, 0.8])]
    worst = {}
    for fn in fns:
        pr = resolvent.Pairing(fn)
        span = fn.fmax - fn.fmin
        w = 0.0
        for _ in range(10):
            z = complex(rng.uniform(fn.fmin + 0.15 * span, fn.fmax - 0.15 * span), rng.uniform(0.02, 0.2))
            a = pr.continued(z)
            b = coarea.contour_integral(fn, None, z)
            w = max(w, abs(a - b))
        worst[fn.name] = w
    return {"passed": max(worst.values()) <= 1e-7, "max_error": worst}


def singularities() -> dict:
    body = SupportBody.ellipsoid(np.diag([1.0, 1.3]))
    target = ConvexTarget.at_point([1.0, 1.0])
    lo, hi = 0.5, 2.2
    peaks, _ = poincare.scan_singularities(body, target, 0.05, (lo, hi))
    values = [v for v, _ in lattice.spectrum(body, hi).distinct() if lo <= v <= hi]
    matched = {v: min((abs(p.tau - v) for p in peaks), default=np.inf) for v in values}
    true = [p for p in peaks if min(abs(p.tau - v) for v in values) <= 0.02]
    smallest = min((p.prominence for p in true), default=0.0)
    spurious = [p.tau for p in peaks if p not in true and p.prominence > 0.5 * smallest]
    ok = all(m <= 0.02 for m in matched.values()) and not spurious
    return {"passed": ok, "spectrum": values, "offsets": list(matched.values()),
            "peaks": [p.tau for p in peaks], "spurious": spurious}


def branch_exponent() -> dict:
    out, ok = {}, True
    for d, target in ((2, -1.5), (3, -2.0)):
        fit = poincare.branch_exponent_fit(poincare.oracle_evaluator(d, np.ones(d)), 1j)
        out[d] = fit.exponent
        ok &= abs(fit.exponent - target) <= 0.1 and fit.conclusive
    return {"passed": ok, "exponents": out}


def _height_hessian(y):
    r = math.sqrt(1 - y @ y)
    return np.eye(len(y)) / r + np.outer(y, y) / r ** 3


def morse() -> dict:
    tests = {
        "3y^2": (lambda y: 3 * y[0] ** 2, [0.0], lambda y: np.array([[6.0]])),
        "1-cos": (lambda y: 1 - np.cos(y[0]), [0.0], lambda y: np.array([[np.cos(y[0])]])),
        "quartic-2d": (lambda y: y[0] ** 2 + 2 * y[1] ** 2 + y[0] * y[1] ** 2, [0.0, 0.0],
                       lambda y: np.array([[2.0, 2 * y[1]], [2 * y[1], 4 + 2 * y[0]]])),
        "sphere-height": (lambda y: 1 - np.sqrt(1 - y @ y), [0.0, 0.0], _height_hessian),
    }
    res = {}
    for name, (f, x0, h) in tests.items():
        res[name] = coarea.morse_normal_form(f, x0, hess=h, rho=0.4).residual
    return {"passed": max(res.values()) <= 1e-9, "residuals": res}


def windowed() -> dict:
    eta = poincare.Bump(4.9, 3.9)
    cases = {"ball/point": (SupportBody.ball(2), ConvexTarget.at_point([1.0, 1.0])),
             "ellipse/disc": (SupportBody.ellipsoid(np.diag([1.0, 1.3])),
                              ConvexTarget.from_body(SupportBody.ball(2, 0.2), [0.5, 0.3]))}
    out, ok = {}, True
    for name, (body, target) in cases.items():
        lhs, rhs = poincare.windowed_count(body, target, eta, 30.0)
        err = abs(lhs - rhs)
        ok &= err <= 1e-5 * max(1.0, lhs)
        out[name] = {"lhs": lhs, "rhs": rhs, "error": err}
    return {"passed": ok, "cases": out}


def decomposition(xi_max: float = 30.0) -> dict:
    body, target = SupportBody.ball(2), ConvexTarget.at_point([1.0, 1.0])
    base = dict(N=3.0, kappa1=3.0, eps0=0.3, xi_max=xi_max)
    rows, ok = [], True
    for s in (0.5, 1.0, 2.0):
        ev = poincare.continued_total(body, target, s, poincare.ContinuationConfig(**base))
        dv = poincare.direct(body, target, s, tol=1e-12)
        err = abs(ev.value - dv.value)
        bound = 3 * (ev.tail + dv.tail)
        ok &= err <= bound
        rows.append({"s": s, "error": err, "bound": bound})
    ref = poincare.continued_total(body, target, 1.0, poincare.ContinuationConfig(**base)).value
    variations = {}
    for key, val in (("N", 2.0), ("kappa1", 6.0), ("eps0", 0.2)):
        cfg = poincare.ContinuationConfig(**{**base, key: val})
        v = poincare.continued_total(body, target, 1.0, cfg).value
        variations[f"{key}={val}"] = abs(v - ref)
    ok &= max(variations.values()) <= 1e-4
    return {"passed": ok, "rows": rows, "variations": variations}


def monodromy() -> dict:
    z0 = 0.5 + 0.8j
    shifts = []
    for base in (z0, 1.5 + 0.6j):
        ctx = branch.BranchContext.start(3, base)
        after = branch.continue_along_path(ctx, branch.loop_around(base, 1.0, 0.5 * abs(base - 1)))
        shifts.append(after.value - ctx.value)
    const = abs(shifts[0] - shifts[1])
    ok3 = abs(abs(shifts[0]) - 2 * math.pi) <= 1e-10 and abs(shifts[0].real) <= 1e-10 and const <= 1e-10
    ctx2 = branch.BranchContext.start(2, z0)
    double = branch.continue_along_path(ctx2, branch.loop_around(z0, 1.0, 0.4, turns=2))
    single = branch.continue_along_path(ctx2, branch.loop_around(z0, 1.0, 0.4, turns=1))
    ok2 = abs(double.value - ctx2.value) <= 1e-10 and abs(single.value - ctx2.value) > 1e-3
    trivial = []
    for d in (2, 3):
        ctx = branch.BranchContext.start(d, z0)
        loop = branch.continue_along_path(ctx, branch.loop_around(z0, 3.0 + 1.0j, 0.5))
        trivial.append(abs(loop.value - ctx.value))
    ok_t = max(trivial) <= 1e-10
    return {"passed": ok3 and ok2 and ok_t, "shift_d3": shifts, "shift_spread": const,
            "double_loop_d2": abs(double.value - ctx2.value), "trivial": trivial}


def norm_calculus() -> dict:
    reports = {d: norms.inequality_suite(d, order=10) for d in (2, 3)}
    return {"passed": all(r.passed for r in reports.values()),
            "summary": {d: r.summary() for d, r in reports.items()},
            "fitted": {d: r.fitted for d, r in reports.items()}}


CRITERIA = [
    (1, "ball oracle identity", ball_oracle, 30),
    (2, "counting asymptotics", counting, 10),
    (3, "pole structure", pole_structure, 60),
    (4, "coarea identity", coarea_identity, 20),
    (5, "closed forms", closed_forms, 5),
    (6, "Plemelj jump", plemelj, 10),
    (7, "endpoint exponents", endpoint_exponents, 20),
    (8, "second-sheet cross-validation", second_sheet, 30),
    (9, "singularity locations", singularities, 60),
    (10, "branch exponent", branch_exponent, 30),
    (11, "Morse normal form", morse, 5),
    (12, "windowed-count identity", windowed, 30),
    (13, "decomposition consistency", decomposition, 120),
    (14, "monodromy", monodromy, 5),
    (15, "norm-calculus consistency", norm_calculus, 20),
]


def run(number: int) -> Criterion:
    num, name, fn, budget = next(c for c in CRITERIA if c[0] == number)
    t = time.perf_counter()
    try:
        detail = fn()
        passed = bool(detail.pop("passed"))
    except Exception as exc:  # a crashed check is a failed check, with the reason kept
        detail, passed = {"error": f"{type(exc).__name__}: {exc}"}, False
    return Criterion(num, name, passed, detail, time.perf_counter() - t, budget)


def run_all(numbers=None, echo=None) -> list:
    out = []
    for num, *_ in CRITERIA:
        if numbers and num not in numbers:
            continue
        res = run(num)
        if echo:
            echo(res.line())
        out.append(res)
    return out
