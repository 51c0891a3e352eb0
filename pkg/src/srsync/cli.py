"""Command-line front end.

Rates given on the command line are in units of gamma_c; ``--gamma-c``
rescales every emitted rate (w, delta, Gamma, Delta, omega) to absolute
units. Scalar results are JSON on stdout, arrays and grids are CSV.
Exit codes: 0 success, 1 invalid input, 2 solver failure; failures print a
JSON error object on stderr.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from contextlib import contextmanager

import numpy as np

from .cumulant import DEFAULT_TOL, steady_state_info
from .errors import ConvergenceError, ParameterError
from .model import CavityParams, ModelParams, regime_check
from .oracle import expectation, oracle_gamma_delta
from .spectrum import gamma_delta, spectrum_profile
from .sweep import (CRITERIA, DEFAULT_CRITERION, Axis, GridSpec, beta_fit,
                    phase_diagram, run_points, scaling_fit)

SCHEMA_VERSION = 1

CSV_SCHEMAS = {
    "fig2": (("delta", float), ("sz", float), ("gamma", float), ("delta_mod", float)),
    "phase-diagram": (("w", float), ("delta", float), ("n", int), ("sz", float),
                      ("gamma", float), ("delta_mod", float), ("synchronized", int)),
    "spectrum": (("omega", float), ("intensity", float)),
    "scaling": (("n", int), ("w_n", float), ("w_c", float), ("offset_rel", float),
                ("gamma_at_wn", float)),
    "oracle-compare": (("n", int), ("w", float), ("delta", float), ("sz_oracle", float),
                       ("sz_cumulant", float), ("gamma_oracle", float),
                       ("gamma_cumulant", float), ("delta_oracle", float),
                       ("delta_cumulant", float)),
}


class UsageError(ParameterError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def read_csv(text: str, kind: str) -> dict[str, np.ndarray]:
    """Parse CSV emitted by ``kind`` into typed columns; the header must
    match the schema exactly."""
    schema = CSV_SCHEMAS[kind]
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != tuple(name for name, _ in schema):
        raise ValueError(f"header does not match the {kind} schema: {rows[:1]}")
    cols = {}
    for j, (name, typ) in enumerate(schema):
        cols[name] = np.array([typ(r[j]) for r in rows[1:]], dtype=typ)
    return cols


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def _csv_text(kind: str, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([name for name, _ in CSV_SCHEMAS[kind]])
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    return buf.getvalue()


@contextmanager
def _sink(path):
    if path in (None, "-"):
        yield sys.stdout
    else:
        with open(path, "w", newline="") as fh:
            yield fh


def _emit_json(obj, path=None):
    with _sink(path) as fh:
        json.dump({"schema_version": SCHEMA_VERSION, **obj}, fh, indent=2, allow_nan=True)
        fh.write("\n")


def _emit_csv(kind, rows, path=None):
    with _sink(path) as fh:
        fh.write(_csv_text(kind, rows))


def _positive_int(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return value


def _finite(text):
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not math.isfinite(value):
        raise argparse.ArgumentTypeError(f"expected a finite number, got {text!r}")
    return value


def _axis(text):
    parts = text.split(":")
    if len(parts) not in (4, 5):
        raise argparse.ArgumentTypeError("axis format is name:min:max:points[:log]")
    try:
        return Axis(parts[0], float(parts[1]), float(parts[2]), int(parts[3]),
                    "log" if len(parts) == 5 and parts[4] == "log" else "linear")
    except (ValueError, ParameterError) as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _model_flags(p, n=True, w=True, delta=True):
    if n:
        p.add_argument("--n", type=_positive_int, required=True, help="atoms per ensemble")
    if w:
        p.add_argument("--w", type=_finite, required=True, help="pump rate")
    if delta:
        p.add_argument("--delta", type=_finite, default=0.0, help="detuning")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--gamma-c", type=_finite, default=1.0,
                        help="absolute collective decay rate applied to output rates")
    common.add_argument("--tol", type=_finite, default=DEFAULT_TOL,
                        help="steady-state residual tolerance")
    common.add_argument("--workers", type=_positive_int, default=None,
                        help="process count for sweeps (SRSYNC_WORKERS overrides)")
    common.add_argument("--output", default=None, help="output path (default stdout)")
    common.add_argument("--seed", type=int, default=None,
                        help="reserved; all solvers are deterministic")

    parser = _Parser(prog="srsync", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("steady", parents=[common], help="single-point steady state")
    _model_flags(p)

    p = sub.add_parser("spectrum", parents=[common], help="emission spectrum samples")
    _model_flags(p)
    p.add_argument("--omega-min", type=_finite)
    p.add_argument("--omega-max", type=_finite)
    p.add_argument("--points", type=_positive_int, default=401)

    p = sub.add_parser("fig2", parents=[common], help="Delta against detuning")
    _model_flags(p, w=False, delta=False)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--w", type=_finite)
    group.add_argument("--w-rule", choices=["half-n-gamma"])
    p.add_argument("--delta-min", type=_finite, default=0.0)
    p.add_argument("--delta-max", type=_finite, required=True)
    p.add_argument("--points", type=_positive_int, default=200)

    p = sub.add_parser("phase-diagram", parents=[common], help="two-axis sweep")
    _model_flags(p)
    p.add_argument("--x", type=_axis, required=True, help="name:min:max:points[:log]")
    p.add_argument("--y", type=_axis, required=True, help="name:min:max:points[:log]")

    p = sub.add_parser("scaling", parents=[common], help="finite-size scaling of w_N")
    p.add_argument("--n-values", type=_positive_int, nargs="+",
                   default=[100, 1000, 10_000, 100_000, 1_000_000])
    p.add_argument("--criterion", choices=CRITERIA, default=DEFAULT_CRITERION)
    p.add_argument("--bracket", type=_finite, nargs=2, default=(0.8, 2.0),
                   metavar=("LO", "HI"), help="search interval in units of delta")
    p.add_argument("--rtol", type=_finite, default=1e-6)
    p.add_argument("--fit-output", default="scaling_fit.json",
                   help="path of the fitted-exponent JSON")

    p = sub.add_parser("beta", parents=[common], help="critical exponent of Delta")
    _model_flags(p, w=False)
    p.add_argument("--window", type=_finite, nargs=2, default=(0.8, 0.99),
                   metavar=("LO", "HI"), help="pump window in units of w_c")
    p.add_argument("--points", type=_positive_int, default=20)
    p.add_argument("--reference", choices=["thermodynamic", "finite-n"],
                   default="thermodynamic")

    p = sub.add_parser("oracle-compare", parents=[common], help="exact vs cumulant, small N")
    p.add_argument("--n-values", type=_positive_int, nargs="+", default=[1, 2, 3])
    p.add_argument("--w-ratio", type=_finite, default=0.5, help="w / (N gamma_c)")
    p.add_argument("--delta-ratio", type=_finite, default=0.25, help="delta / (N gamma_c)")

    p = sub.add_parser("regime-check", parents=[common], help="validity of the atom-only model")
    _model_flags(p)
    p.add_argument("--omega", type=_finite, required=True, help="atom-cavity coupling")
    p.add_argument("--kappa", type=_finite, required=True, help="cavity linewidth")
    p.add_argument("--gamma-s", type=_finite, default=0.0)
    p.add_argument("--t2-inv", type=_finite, default=0.0)
    p.add_argument("--margin", type=_finite, default=10.0)
    return parser


def _check_scale(args):
    if args.gamma_c <= 0:
        raise ParameterError(f"gamma_c must be > 0, got {args.gamma_c}")
    if args.tol <= 0:
        raise ParameterError(f"tol must be > 0, got {args.tol}")


def _cmd_steady(args):
    params = ModelParams(args.n, args.w, delta=args.delta)
    info = steady_state_info(params, args.tol)
    spec = gamma_delta(params, info.state.sz)
    g, s = args.gamma_c, info.state
    _emit_json({
        "n": params.n, "w": params.w * g, "delta": params.delta * g, "gamma_c": g,
        "sz": s.sz, "intra": [s.intra.real, s.intra.imag],
        "cross": [s.cross.real, s.cross.imag],
        "gamma": spec.gamma * g, "delta_mod": spec.delta_mod * g,
        "synchronized": spec.synchronized, "unstable": spec.unstable,
        "residual": info.residual, "stability": info.stability * g,
        "flags": info.flags,
    }, args.output)


def _cmd_spectrum(args):
    params = ModelParams(args.n, args.w, delta=args.delta)
    if args.points < 2:
        raise ParameterError("spectrum needs at least 2 points")
    info = steady_state_info(params, args.tol)
    spec = gamma_delta(params, info.state.sz)
    reach = spec.delta_mod / 2 + 5 * spec.gamma
    lo = -reach if args.omega_min is None else args.omega_min
    hi = reach if args.omega_max is None else args.omega_max
    if not lo < hi:
        raise ParameterError("omega-min must be below omega-max")
    omega, intensity = spectrum_profile(spec, np.linspace(lo, hi, args.points))
    _emit_csv("spectrum", zip(omega * args.gamma_c, intensity), args.output)


def _cmd_fig2(args):
    w = 0.5 * args.n if args.w_rule == "half-n-gamma" else args.w
    params = ModelParams(args.n, w)
    if not args.delta_min < args.delta_max or args.points < 2:
        raise ParameterError("need delta-min < delta-max and at least 2 points")
    deltas = np.linspace(args.delta_min, args.delta_max, args.points)
    records = run_points([params.with_(delta=d) for d in deltas], args.workers, args.tol)
    _raise_failures(records)
    g = args.gamma_c
    _emit_csv("fig2", ((r.params.delta * g, r.sz, r.gamma * g, r.delta_mod * g)
                       for r in records), args.output)


def _raise_failures(records):
    bad = [r for r in records if not r.ok]
    if bad:
        p = bad[0].params
        raise ConvergenceError(f"{len(bad)} point(s) failed; first at n={p.n}, "
                               f"w={p.w:.6g}, delta={p.delta:.6g}: {bad[0].error}")


def _cmd_phase_diagram(args):
    base = ModelParams(args.n, args.w, delta=args.delta)
    grid = GridSpec((args.x, args.y), base)
    result = phase_diagram(grid, args.workers)
    _raise_failures(result.records)
    g = args.gamma_c
    _emit_csv("phase-diagram", ((r.params.w * g, r.params.delta * g, r.params.n, r.sz,
                                 r.gamma * g, r.delta_mod * g, r.synchronized)
                                for r in result.records), args.output)


def _cmd_scaling(args):
    lo, hi = args.bracket
    if not 0 < lo < hi:
        raise ParameterError("bracket must satisfy 0 < LO < HI")
    offset, gamma, rows = scaling_fit(args.n_values, args.criterion, bracket=(lo, hi),
                                      rtol=args.rtol, workers=args.workers)
    g = args.gamma_c
    _emit_csv("scaling", ((r.n, r.w_n * g, r.w_c * g, r.offset_rel, r.gamma_at_wn * g)
                          for r in rows), args.output)
    _emit_json({"criterion": args.criterion, "offset": offset.as_dict(),
                "gamma_peak": gamma.as_dict()}, args.fit_output)


def _cmd_beta(args):
    lo, hi = args.window
    if not 0 < lo < hi < 1:
        raise ParameterError("window must satisfy 0 < LO < HI < 1")
    params = ModelParams(args.n, abs(args.delta), delta=args.delta)
    fit = beta_fit(params, window=(lo, hi), points=args.points, reference=args.reference)
    out = fit.as_dict()
    for key in ("w_c", "w_n"):
        out["diagnostics"][key] *= args.gamma_c
    _emit_json({"n": params.n, "delta": params.delta * args.gamma_c, **out}, args.output)


def _cmd_oracle_compare(args):
    points = [ModelParams(n, args.w_ratio * n, delta=args.delta_ratio * n)
              for n in args.n_values]
    rows = []
    g = args.gamma_c
    for params in points:
        rho, exact = oracle_gamma_delta(params)
        sz_exact = expectation(rho, "sz_per_atom").real
        sz_cum = steady_state_info(params, args.tol).state.sz
        approx = gamma_delta(params, sz_cum)
        rows.append((params.n, params.w * g, params.delta * g, sz_exact, sz_cum,
                     exact.gamma * g, approx.gamma * g, exact.delta_mod * g,
                     approx.delta_mod * g))
    _emit_csv("oracle-compare", rows, args.output)


def _cmd_regime_check(args):
    model = ModelParams(args.n, args.w, delta=args.delta)
    cavity = CavityParams(args.omega, args.kappa, args.gamma_s, args.t2_inv)
    _emit_json(regime_check(model, cavity, args.margin).as_dict(), args.output)


COMMANDS = {
    "steady": _cmd_steady, "spectrum": _cmd_spectrum, "fig2": _cmd_fig2,
    "phase-diagram": _cmd_phase_diagram, "scaling": _cmd_scaling, "beta": _cmd_beta,
    "oracle-compare": _cmd_oracle_compare, "regime-check": _cmd_regime_check,
}


def _report(kind, exc):
    err = {"schema_version": SCHEMA_VERSION, "error": kind,
           "type": type(exc).__name__, "message": str(exc)}
    print(json.dumps(err), file=sys.stderr)


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        _check_scale(args)
        COMMANDS[args.command](args)
    except (ParameterError, OSError) as exc:
        _report("validation", exc)
        return 1
    except ConvergenceError as exc:
        _report("convergence", exc)
        return 2
    return 0


def main():
    sys.exit(run())
