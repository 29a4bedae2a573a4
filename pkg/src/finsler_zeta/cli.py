"""Command-line interface: configuration loading, commands, and data export.

Exit codes: 0 success, 1 validation error, 2 numeric failure, 3 acceptance
failure.  Every command writes its results into the output directory; CSV
files carry one header row and floats in shortest round-trip form, metadata
goes to JSON.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .errors import NumericError, ValidationError
from .geometry import ConvexTarget, SupportBody, body_volume, minkowski_volume_poly

log = logging.getLogger("finsler_zeta")

CONFIG_KEYS = ("dim", "family", "parameters", "target", "N", "kappa1", "eps0", "ximax", "cuts")
FAMILY_PARAMETERS = {"ball": ("radius",), "ellipsoid": ("matrix", "axes"), "trig2d": ("c0", "harmonics")}
EXIT_OK, EXIT_VALIDATION, EXIT_NUMERIC, EXIT_ACCEPTANCE = 0, 1, 2, 3


class ConfigError(ValidationError):
    """Malformed or invalid configuration file."""


# ---------------------------------------------------------------------------
# configuration


def _build_body(dim, family, params) -> SupportBody:
    if family not in FAMILY_PARAMETERS:
        raise ConfigError(f"unknown family {family!r}; accepted: {', '.join(FAMILY_PARAMETERS)}")
    params = dict(params or {})
    extra = set(params) - set(FAMILY_PARAMETERS[family])
    if extra:
        raise ConfigError(f"unknown parameters {sorted(extra)} for family {family!r}; "
                          f"accepted: {', '.join(FAMILY_PARAMETERS[family])}")
    if family == "ball":
        body = SupportBody.ball(dim, params.get("radius", 1.0))
    elif family == "ellipsoid":
        if "matrix" in params:
            body = SupportBody.ellipsoid(params["matrix"])
        elif "axes" in params:
            body = SupportBody.ellipsoid(np.diag(np.asarray(params["axes"], dtype=float)))
        else:
            raise ConfigError("ellipsoid needs 'matrix' or 'axes'")
    else:
        body = SupportBody.trig2d(params.get("c0", 1.0), params.get("harmonics", ()))
    if body.dim != dim:
        raise ConfigError(f"dim = {dim} but the {family} parameters describe dimension {body.dim}")
    return body


def _build_target(dim, spec) -> ConvexTarget:
    if spec is None:
        raise ConfigError("missing 'target'")
    if isinstance(spec, (list, tuple)):
        spec = {"point": spec}
    if not isinstance(spec, dict):
        raise ConfigError("target must be a point [x1, ..., xd] or a mapping")
    if "point" in spec:
        extra = set(spec) - {"point"}
        if extra:
            raise ConfigError(f"unknown target keys {sorted(extra)}; accepted: point")
        x0 = np.asarray(spec["point"], dtype=float)
        if x0.shape != (dim,):
            raise ConfigError(f"target point must have {dim} coordinates")
        return ConvexTarget.at_point(x0)
    extra = set(spec) - {"family", "parameters", "center"}
    if extra:
        raise ConfigError(f"unknown target keys {sorted(extra)}; accepted: point, family, parameters, center")
    inner = _build_body(dim, spec.get("family"), spec.get("parameters"))
    return ConvexTarget.from_body(inner, spec.get("center"))


def load_config(path):
    """Read a YAML (or JSON) mapping; syntax errors are reported with the line number."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    try:
        data = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        raise ConfigError(f"cannot parse {path}{where}: {getattr(exc, 'problem', exc)}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return data


def parse_config(path):
    """(body, target, ContinuationConfig) from a config file, with defaults filled."""
    return config_from_mapping(load_config(path))


def config_from_mapping(data):
    from .poincare import ContinuationConfig, default_eps0

    unknown = [k for k in data if k not in CONFIG_KEYS]
    if unknown:
        raise ConfigError(f"unknown keys {unknown}; accepted keys: {', '.join(CONFIG_KEYS)}")
    for key in ("dim", "family", "target"):
        if key not in data:
            raise ConfigError(f"missing required key {key!r}")
    dim = data["dim"]
    if not isinstance(dim, int) or dim < 2:
        raise ConfigError("dim must be an integer >= 2")
    body = _build_body(dim, data["family"], data.get("parameters"))
    target = _build_target(dim, data["target"])
    cuts = data.get("cuts", "horizontal-left")
    if cuts != "horizontal-left":
        raise ConfigError("only cuts: horizontal-left is implemented")
    eps0 = data.get("eps0")
    cfg = ContinuationConfig(N=float(data.get("N", 3)), kappa1=float(data.get("kappa1", 3)),
                             eps0=float(eps0) if eps0 is not None else default_eps0(body),
                             xi_max=float(data.get("ximax", 60)), cuts=cuts)
    if cfg.N < 1 or cfg.kappa1 <= 0 or cfg.eps0 <= 0 or cfg.xi_max <= cfg.N:
        raise ConfigError("need N >= 1, kappa1 > 0, eps0 > 0 and ximax > N")
    return body, target, cfg


# ---------------------------------------------------------------------------
# output helpers


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return str(path)


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (complex, np.complexfloating)):
        return [float(np.real(x)), float(np.imag(x))]
    if isinstance(x, (float, np.floating)):
        return float(x)
    return x


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return str(path)


def _complex_arg(text):
    try:
        return complex(text.replace(" ", "").replace("i", "j"))
    except ValueError as exc:
        raise ValidationError(f"cannot read complex number {text!r}") from exc


# ---------------------------------------------------------------------------
# commands


def cmd_body(args, body, target, cfg, out):
    from .lattice import norm_equivalence
    from .geometry import geometric_constants

    m, big_m = norm_equivalence(body)
    c0, ok, _ = geometric_constants(body)
    report = {"body": body.describe(), "target": target.describe(), "convexity_margin": body.convexity_margin(),
              "volume": body_volume(body), "norm_equivalence": [m, big_m], "morse_constant": c0,
              "morse_bounds_hold": ok, "mixed_volumes": minkowski_volume_poly(target, body)}
    return [write_json(out / "body.json", report)]


def cmd_count(args, body, target, cfg, out):
    from .lattice import count

    lead = body_volume(body) / (2 * math.pi) ** body.dim
    ts = np.linspace(args.tmax / args.points, args.tmax, args.points)
    rows = []
    for t in ts:
        n = count(body, target, float(t))
        rows.append((float(t), n, n / (lead * t ** body.dim)))
    files = [write_csv(out / "count.csv", ["T", "N", "ratio"], rows)]
    if getattr(args, "plot", False):
        from . import plotting
        files.append(plotting.count_figure(rows, out / "count.png"))
    return files


def cmd_spectrum(args, body, target, cfg, out):
    from .lattice import spectrum

    tab = spectrum(body, args.lam_max)
    header = [f"xi{i + 1}" for i in range(body.dim)] + ["value", "sign"]
    rows = [list(xi) + [v, sg] for xi, v, sg in tab.rows()]
    return [write_csv(out / "spectrum.csv", header, rows)]


def cmd_zeta(args, body, target, cfg, out):
    from . import poincare

    if args.action == "eval":
        s = _complex_arg(args.s)
        ev = poincare.direct(body, target, s) if s.real > 0 else poincare.continued_total(body, target, s, cfg)
        return [write_json(out / "evaluation.json", {"s": s, **ev.to_json()})]
    if args.action == "continue":
        s = _complex_arg(args.s)
        ev = poincare.continued_total(body, target, s, cfg)
        return [write_json(out / "continuation.json", {"s": s, **ev.to_json()})]
    peaks, grid = poincare.scan_singularities(body, target, args.eps, (args.tau_min, args.tau_max),
                                              args.step, cfg)
    files = [write_csv(out / "scan.csv", ["re_s", "im_s", "abs_p", "arg_p", "region"], grid)]
    files.append(write_json(out / "peaks.json", {"eps": args.eps, "peaks": [p.__dict__ for p in peaks]}))
    if getattr(args, "plot", False):
        from . import plotting
        from .lattice import spectrum
        vals = [v for v, _ in spectrum(body, args.tau_max).distinct() if v >= args.tau_min]
        files.append(plotting.scan_figure(grid, vals, peaks, out / "scan.png"))
    return files


def cmd_residue(args, body, target, cfg, out):
    from . import poincare

    d = body.dim
    vols = minkowski_volume_poly(target, body)
    coef = poincare.pole_coefficients(body, target)
    # entry k of pole_coefficients multiplies s^{-(k+1)} and pairs with the t^{k+1} coefficient
    predicted = [math.factorial(l) * vols[l] / (2 * math.pi) ** d for l in range(1, d + 1)]
    samples = []
    for s in args.s_values:
        ev = poincare.direct(body, target, s)
        samples.append({"s": s, "direct": ev.value, "pole_part": poincare.pole_part(body, target, s),
                        "s^d P": s ** d * ev.value})
    report = {"mixed_volumes": vols, "pole_coefficients": coef, "predicted": predicted,
              "max_difference": float(np.max(np.abs(np.asarray(coef) - predicted))), "samples": samples}
    return [write_json(out / "residue.json", report)]


def _demo_function(name, body):
    from . import coarea

    if name == "cos":
        return coarea.CircleFunction.trig([(1, 1.0, 0.0)], "cos")
    if name == "height":
        return coarea.SphereFunction.height()
    if name == "body":
        axis = np.zeros(body.dim)
        axis[0] = 1.0
        if body.dim == 2:
            return coarea.CircleFunction.projection(body, axis)
        return coarea.SphereFunction(body, axis)
    raise ValidationError(f"unknown function {name!r}; accepted: cos, height, body")


def cmd_coarea(args, body, target, cfg, out):
    from . import coarea

    fn = _demo_function(args.function, body)
    ld = coarea.density_fit(fn)
    taus = np.linspace(fn.fmin, fn.fmax, args.points + 2)[1:-1]
    rows = [(float(t), float(np.real(coarea.density(fn, None, t))), float(np.real(ld(t)))) for t in taus]
    inner = taus[(taus > fn.fmin + ld.delta) & (taus < fn.fmax - ld.delta)]
    jumps = [abs(coarea.plemelj_jump(ld, t) + 2j * math.pi * coarea.density(fn, None, t)) for t in inner[::4]]
    exps = {e: coarea.critical_exponent(fn, None, e)[0] for e in ("min", "max")}
    files = [write_csv(out / "density.csv", ["tau", "density", "model"], rows),
             write_json(out / "coarea.json", {"function": fn.name, "critical_values": [fn.fmin, fn.fmax],
                                              "predicted_exponent": (fn.dim - 3) / 2, "fitted_exponents": exps,
                                              "plemelj_max_error": max(jumps, default=0.0),
                                              "model": ld.to_json()})]
    if getattr(args, "plot", False):
        from . import plotting
        files.append(plotting.density_figure([r[0] for r in rows], [r[1] for r in rows], out / "density.png"))
    return files


def cmd_resolvent(args, body, target, cfg, out):
    from . import coarea, resolvent

    fn = _demo_function(args.function, body)
    pr = resolvent.Pairing(fn)
    span = fn.fmax - fn.fmin
    rows = []
    for x in np.linspace(fn.fmin + 0.2 * span, fn.fmax - 0.2 * span, 5):
        for y in (0.02, 0.1, 0.2):
            z = complex(x, y)
            a, b = pr.continued(z), coarea.contour_integral(fn, None, z)
            rows.append((z.real, z.imag, a.real, a.imag, abs(a - b)))
    exponent, resid = resolvent.edge_exponent(fn)
    files = [write_csv(out / "resolvent.csv", ["re_z", "im_z", "re_value", "im_value", "contour_difference"], rows),
             write_json(out / "resolvent.json", {"function": fn.name, "edge_fit": exponent, "edge_fit_residual": resid,
                                                 "edge_fit_meaning": "power" if fn.dim == 2 else "log coefficient"})]
    return files


def cmd_branch(args, body, target, cfg, out):
    from . import branch

    rows = []
    for d in (2, 3, 4, 5):
        for x in np.linspace(-2.5, 2.5, 11):
            for y in (0.25, 1.0):
                z = complex(x, y)
                v = complex(branch.F_closed(d, z))
                rows.append((d, z.real, z.imag, v.real, v.imag))
    base = 0.5 + 0.8j
    demo = {}
    for d, turns in ((2, 1), (2, 2), (3, 1)):
        ctx = branch.BranchContext.start(d, base)
        end = branch.continue_along_path(ctx, branch.loop_around(base, 1.0, 0.4, turns=turns))
        demo[f"d={d} turns={turns}"] = {"start": ctx.value, "end": end.value, "shift": end.value - ctx.value,
                                        "windings": end.windings}
    return [write_csv(out / "branch.csv", ["d", "re_zeta", "im_zeta", "re_F", "im_F"], rows),
            write_json(out / "monodromy.json", demo)]


def cmd_verify(args, body, target, cfg, out):
    from . import acceptance

    nums = [int(x) for x in args.criteria.split(",")] if args.criteria else None
    results = acceptance.run_all(nums, echo=print)
    path = write_json(out / "verify.json", {"passed": all(r.passed for r in results),
                                            "criteria": [r.to_json() for r in results]})
    if not all(r.passed for r in results):
        raise _AcceptanceFailure(path)
    return [path]


def cmd_report(args, body, target, cfg, out):
    """Scan, count and (for balls) branch-exponent figures in one go."""
    from . import plotting, poincare
    from .lattice import spectrum

    args.plot = True
    files = cmd_count(argparse.Namespace(tmax=args.tmax, points=40, plot=True), body, target, cfg, out)
    scan_args = argparse.Namespace(action="scan", eps=args.eps, tau_min=args.tau_min, tau_max=args.tau_max,
                                   step=0.005, plot=True)
    files += cmd_zeta(scan_args, body, target, cfg, out)
    if body.family == "ball" and target.is_point and body.radius == 1.0:
        fit = poincare.branch_exponent_fit(poincare.oracle_evaluator(body.dim, target.anchor), 1j)
        files.append(plotting.exponent_figure(fit.radii, fit.values, fit.exponent, out / "branch_exponent.png"))
    return files


class _AcceptanceFailure(Exception):
    pass


COMMANDS = {"body": cmd_body, "count": cmd_count, "spectrum": cmd_spectrum, "zeta": cmd_zeta,
            "residue": cmd_residue, "coarea": cmd_coarea, "resolvent": cmd_resolvent, "branch": cmd_branch,
            "verify": cmd_verify, "report": cmd_report}


class _Parser(argparse.ArgumentParser):
    """Usage errors are validation errors (exit code 1), not argparse's 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


def build_parser():
    p = _Parser(prog="finsler-zeta", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, needs_config=True, actions=None, **kw):
        sp = sub.add_parser(name, **kw)
        if actions:
            sp.add_argument("action", choices=actions)
        if needs_config:
            sp.add_argument("config", help="YAML/JSON configuration file")
        else:
            sp.add_argument("config", nargs="?", help="configuration file (unused)")
        sp.add_argument("-o", "--output", default=".", help="output directory")
        sp.add_argument("--threads", type=int, default=None, help="cap on BLAS/FFT worker threads")
        sp.add_argument("--seed", type=int, default=0)
        return sp

    add("body", help="geometry report")
    sp = add("count", help="lattice counting table")
    sp.add_argument("--tmax", type=float, default=200.0)
    sp.add_argument("--points", type=int, default=50)
    sp.add_argument("--plot", action="store_true")
    sp = add("spectrum", help="table of h_K(+-xi)")
    sp.add_argument("--lam-max", type=float, default=5.0)
    sp = add("zeta", actions=("eval", "scan", "continue"), help="evaluate, scan or continue the series")
    sp.add_argument("--s", default="1")
    sp.add_argument("--eps", type=float, default=0.05)
    sp.add_argument("--tau-min", type=float, default=0.5)
    sp.add_argument("--tau-max", type=float, default=2.2)
    sp.add_argument("--step", type=float, default=0.005)
    sp.add_argument("--plot", action="store_true")
    sp = add("residue", help="pole part versus mixed volumes")
    sp.add_argument("--s-values", type=float, nargs="+", default=[0.05, 0.1, 0.2])
    sp = add("coarea", needs_config=False, help="level-density demonstrations")
    sp.add_argument("--function", default="cos")
    sp.add_argument("--points", type=int, default=41)
    sp.add_argument("--plot", action="store_true")
    sp = add("resolvent", needs_config=False, help="continued pairing and edge fit")
    sp.add_argument("--function", default="cos")
    add("branch", needs_config=False, help="model functions and monodromy")
    sp = add("verify", needs_config=False, help="run the acceptance suite")
    sp.add_argument("--criteria", default=None, help="comma-separated subset, e.g. 1,5,9")
    sp = add("report", help="figures: count ratio, scan, branch exponent")
    sp.add_argument("--tmax", type=float, default=100.0)
    sp.add_argument("--eps", type=float, default=0.05)
    sp.add_argument("--tau-min", type=float, default=0.5)
    sp.add_argument("--tau-max", type=float, default=2.2)
    return p


def _thread_limit(n):
    n = n or (int(os.environ["MP_THREADS"]) if os.environ.get("MP_THREADS") else None)
    if not n:
        return None
    from threadpoolctl import threadpool_limits
    return threadpool_limits(limits=n)


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    out = Path(args.output)
    limiter = None
    try:
        limiter = _thread_limit(args.threads)
        if args.config:
            body, target, cfg = parse_config(args.config)
        else:
            body = target = cfg = None
        if body is None and args.command in ("coarea", "resolvent") and getattr(args, "function", "") == "body":
            raise ConfigError("--function body needs a config file")
        out.mkdir(parents=True, exist_ok=True)
        files = COMMANDS[args.command](args, body, target, cfg, out)
        for f in files:
            print(f)
        return EXIT_OK
    except _AcceptanceFailure as exc:
        print(f"acceptance failure, see {exc}", file=sys.stderr)
        return EXIT_ACCEPTANCE
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericError as exc:
        diag = getattr(exc, "diagnostics", {})
        print(f"numeric failure: {exc}" + (f" {diag}" if diag else ""), file=sys.stderr)
        return EXIT_NUMERIC
    finally:
        if limiter is not None:
            limiter.restore_original_limits()


def main(argv=None):
    sys.exit(run(argv))
