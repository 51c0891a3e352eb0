"""Parameter scans, critical-pump location and power-law fits."""
from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .cumulant import DEFAULT_TOL, steady_state_info
from .errors import BracketError, ConvergenceError, ParameterError
from .model import ModelParams
from .spectrum import gamma_delta

AXIS_NAMES = ("w", "delta", "n")
CRITERIA = ("delta-onset", "gamma-peak")
DEFAULT_CRITERION = "gamma-peak"
WORKERS_ENV = "SRSYNC_WORKERS"


@dataclass(frozen=True)
class Axis:
    name: str
    lo: float
    hi: float
    points: int
    spacing: str = "linear"

    def __post_init__(self):
        if self.name not in AXIS_NAMES:
            raise ParameterError(f"axis must be one of {AXIS_NAMES}, got {self.name!r}")
        if self.points < 2:
            raise ParameterError("an axis needs at least 2 points")
        if not self.lo < self.hi:
            raise ParameterError(f"axis {self.name}: min must be < max")
        if self.spacing not in ("linear", "log"):
            raise ParameterError("spacing must be 'linear' or 'log'")
        if self.spacing == "log" and self.lo <= 0:
            raise ParameterError("log spacing requires positive bounds")

    def values(self) -> np.ndarray:
        make = np.geomspace if self.spacing == "log" else np.linspace
        vals = make(self.lo, self.hi, self.points)
        if self.name == "n":
            vals = np.rint(vals)
        return vals


@dataclass(frozen=True)
class GridSpec:
    axes: tuple[Axis, ...]
    base: ModelParams

    def __post_init__(self):
        if not 1 <= len(self.axes) <= 2:
            raise ParameterError("grid needs one or two axes")
        if len({a.name for a in self.axes}) != len(self.axes):
            raise ParameterError("axes must be distinct")

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(a.points for a in self.axes)

    def coords(self) -> list[np.ndarray]:
        return [a.values() for a in self.axes]

    def points(self) -> list[tuple[tuple[int, ...], ModelParams]]:
        coords = self.coords()
        out = []
        for index in np.ndindex(*self.shape):
            changes = {a.name: c[i] for a, c, i in zip(self.axes, coords, index)}
            if "n" in changes:
                changes["n"] = int(changes["n"])
            out.append((tuple(int(i) for i in index), self.base.with_(**changes)))
        return out


@dataclass(frozen=True)
class PointRecord:
    params: ModelParams
    sz: float = math.nan
    gamma: float = math.nan
    delta_mod: float = math.nan
    synchronized: bool = False
    unstable: bool = False
    residual: float = math.nan
    stability: float = math.nan
    flags: tuple[str, ...] = ()
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass
class SweepResult:
    axes: tuple[str, ...]
    coords: list[np.ndarray]
    records: list[PointRecord]

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(len(c) for c in self.coords)

    def field(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records]).reshape(self.shape)

    @property
    def failures(self) -> list[PointRecord]:
        return [r for r in self.records if not r.ok]


def solve_point(params: ModelParams, tol: float = DEFAULT_TOL) -> PointRecord:
    """Steady state and (Gamma, Delta) at one parameter point; failures are
    captured in the record instead of raised."""
    try:
        info = steady_state_info(params, tol)
    except (ConvergenceError, ParameterError, FloatingPointError) as exc:
        return PointRecord(params, error=f"{type(exc).__name__}: {exc}")
    spec = gamma_delta(params, info.state.sz)
    return PointRecord(params, info.state.sz, spec.gamma, spec.delta_mod,
                       spec.synchronized, spec.unstable, info.residual,
                       info.stability, tuple(info.flags))


def resolve_workers(requested: int | None = None) -> int:
    env = os.environ.get(WORKERS_ENV)
    if env:
        try:
            requested = int(env)
        except ValueError:
            raise ParameterError(f"{WORKERS_ENV} must be an integer, got {env!r}") from None
    if requested is None:
        requested = os.cpu_count() or 1
    if requested < 1:
        raise ParameterError("worker count must be >= 1")
    return requested


def run_points(params_list, workers: int | None = None,
               tol: float = DEFAULT_TOL) -> list[PointRecord]:
    """Solve independent points; output order always follows the input."""
    params_list = list(params_list)
    workers = resolve_workers(workers)
    tols = [tol] * len(params_list)
    if workers == 1 or len(params_list) < 2:
        return list(map(solve_point, params_list, tols))
    chunk = max(1, len(params_list) // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(solve_point, params_list, tols, chunksize=chunk))


def delta_vs_detuning(params: ModelParams, delta_grid, workers: int | None = None) -> SweepResult:
    """Precession frequency Delta as a function of the detuning."""
    deltas = np.asarray(delta_grid, dtype=float)
    records = run_points([params.with_(delta=d) for d in deltas], workers)
    return SweepResult(("delta",), [deltas], records)


def phase_diagram(grid: GridSpec, workers: int | None = None) -> SweepResult:
    pts = grid.points()
    records = run_points([p for _, p in pts], workers)
    return SweepResult(tuple(a.name for a in grid.axes), grid.coords(), records)


def _slices(result: SweepResult, along: str):
    if along not in result.axes:
        raise ParameterError(f"{along!r} is not an axis of this sweep")
    k = result.axes.index(along)
    idx = np.arange(len(result.records)).reshape(result.shape)
    idx = np.moveaxis(idx, k, -1).reshape(-1, result.shape[k])
    other = [c for j, c in enumerate(result.coords) if j != k]
    labels = other[0] if other else [None]
    for label, row in zip(labels, idx):
        yield label, result.coords[k], [result.records[i] for i in row]


def synchronized_boundary(result: SweepResult, along: str = "w") -> list[tuple[float, float | None]]:
    """Per slice, the first grid value along ``along`` from which every later
    point is synchronized (the Delta = 0 contour); None if there is none."""
    out = []
    for label, xs, recs in _slices(result, along):
        sync = [r.ok and r.synchronized for r in recs]
        edge = None
        for i in range(len(sync) - 1, -1, -1):
            if not sync[i]:
                break
            edge = xs[i]
        out.append((label, edge))
    return out


def gamma_ridge(result: SweepResult, along: str = "w") -> list[tuple[float, float, float]]:
    """Per slice, location and value of the largest linewidth."""
    out = []
    for label, xs, recs in _slices(result, along):
        g = np.array([r.gamma if r.ok else -np.inf for r in recs])
        i = int(np.argmax(g))
        out.append((label, float(xs[i]), float(g[i])))
    return out


def _golden_max(f, a, b, rtol, max_iter=200):
    invphi = (math.sqrt(5) - 1) / 2
    c, d = b - invphi * (b - a), a + invphi * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if b - a <= rtol * abs(b + a) / 2:
            break
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    return (c, fc) if fc >= fd else (d, fd)


def _record_or_raise(params):
    rec = solve_point(params)
    if not rec.ok:
        raise ConvergenceError(f"steady state failed at w={params.w:.6g}: {rec.error}")
    return rec


def critical_pump(params: ModelParams, w_bracket, criterion: str = DEFAULT_CRITERION, *,
                  rtol: float = 1e-4, scan_points: int = 41) -> float:
    """Finite-N critical pump inside ``w_bracket``.

    ``delta-onset``: smallest pump at which Delta vanishes, by bisection on
    the synchronized flag after a coarse scan. ``gamma-peak``: location of
    the linewidth maximum, by golden-section search around the best scan point.
    """
    if criterion not in CRITERIA:
        raise ParameterError(f"criterion must be one of {CRITERIA}")
    lo, hi = map(float, w_bracket)
    if not 0 < lo < hi:
        raise ParameterError("bracket must satisfy 0 < lo < hi")
    ws = np.linspace(lo, hi, scan_points)
    recs = [_record_or_raise(params.with_(w=w)) for w in ws]
    scan = [(float(w), r.gamma, r.delta_mod, r.synchronized) for w, r in zip(ws, recs)]
    if criterion == "delta-onset":
        sync = [r.synchronized for r in recs]
        if sync[0] or not sync[-1]:
            raise BracketError("bracket does not contain the synchronization onset", scan=scan)
        first = next(i for i, s in enumerate(sync) if s)
        a, b = ws[first - 1], ws[first]
        while b - a > rtol * b:
            m = 0.5 * (a + b)
            if _record_or_raise(params.with_(w=m)).synchronized:
                b = m
            else:
                a = m
        return float(b)
    g = np.array([r.gamma for r in recs])
    i = int(np.argmax(g))
    if i == 0 or i == len(ws) - 1:
        raise BracketError("no interior linewidth maximum in bracket", scan=scan)
    w_peak, _ = _golden_max(lambda w: _record_or_raise(params.with_(w=w)).gamma,
                            ws[i - 1], ws[i + 1], rtol)
    return float(w_peak)


@dataclass
class ScalingFit:
    exponent: float
    prefactor: float
    r_squared: float
    points: list[tuple[float, float]]
    diagnostics: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {"exponent": self.exponent, "prefactor": self.prefactor,
                "r_squared": self.r_squared, "points": [list(p) for p in self.points],
                **({"diagnostics": self.diagnostics} if self.diagnostics else {})}


def fit_power_law(xs, ys, min_points: int = 3) -> ScalingFit:
    """Least-squares line through (log x, log y): y ~ prefactor * x**exponent."""
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if len(x) != len(y):
        raise ParameterError("x and y differ in length")
    if len(x) < min_points:
        raise ParameterError(f"need at least {min_points} points, got {len(x)}")
    if np.any(x <= 0) or np.any(y <= 0):
        raise ParameterError("power-law fit needs positive data")
    lx, ly = np.log(x), np.log(y)
    if np.ptp(lx) == 0:
        raise ParameterError("degenerate regression: all x equal")
    slope, intercept = np.polyfit(lx, ly, 1)
    ss_res = float(np.sum((ly - (slope * lx + intercept)) ** 2))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - ss_res / ss_tot
    return ScalingFit(float(slope), float(math.exp(intercept)), float(min(1.0, max(0.0, r2))),
                      [(float(a), float(b)) for a, b in zip(x, y)])


@dataclass
class ScalingRow:
    n: int
    w_n: float
    w_c: float
    offset_rel: float
    gamma_at_wn: float


def half_coupling_detuning(n: int, gamma_c: float = 1.0) -> float:
    """Detuning rule used for the finite-size study: delta = N gamma_c / 2."""
    return 0.5 * n * gamma_c


def _scaling_row(args) -> ScalingRow:
    n, gamma_c, criterion, bracket, rtol = args
    delta = half_coupling_detuning(n, gamma_c)
    params = ModelParams(n, w=delta, gamma_c=gamma_c, delta=delta)
    lo, hi = bracket
    w_n = critical_pump(params, (lo * delta, hi * delta), criterion, rtol=rtol)
    rec = _record_or_raise(params.with_(w=w_n))
    return ScalingRow(n, w_n, delta, (w_n - delta) / delta, rec.gamma)


def scaling_fit(n_values, criterion: str = DEFAULT_CRITERION, *, gamma_c: float = 1.0,
                bracket=(0.8, 2.0), rtol: float = 1e-6, min_points: int = 3,
                workers: int | None = None):
    """Finite-size scaling at delta = N gamma_c / 2.

    ``bracket`` is in units of delta. Returns ``(offset_fit, gamma_fit, rows)``
    where the fits are power laws in N of (w_N - w_c)/w_c and Gamma(w_N)/gamma_c.
    """
    n_values = [int(n) for n in n_values]
    if len(n_values) < min_points:
        raise ParameterError(f"need at least {min_points} values of N")
    jobs = [(n, gamma_c, criterion, tuple(bracket), rtol) for n in n_values]
    workers = resolve_workers(workers)
    if workers == 1:
        rows = list(map(_scaling_row, jobs))
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_scaling_row, jobs))
    ns = [r.n for r in rows]
    offset = fit_power_law(ns, [r.offset_rel for r in rows], min_points)
    gamma = fit_power_law(ns, [r.gamma_at_wn / gamma_c for r in rows], min_points)
    for fit in (offset, gamma):
        fit.diagnostics["criterion"] = criterion
    return offset, gamma, rows


def beta_fit(params: ModelParams, w_grid=None, *, reference: str = "thermodynamic",
             window=(0.8, 0.99), points: int = 20, bracket=None,
             sensitivity_windows=((0.7, 0.99), (0.8, 0.95), (0.9, 0.995))) -> ScalingFit:
    """Critical exponent of Delta ~ (w_c - w)**beta below the transition.

    ``reference="thermodynamic"`` measures distances from w_c = |delta|;
    ``"finite-n"`` uses the detected delta-onset pump w_N instead. In both
    cases w_N is located and every grid point must lie strictly below it and
    below the reference. Diagnostics carry the exponent on other windows.
    """
    delta = abs(params.delta)
    if delta == 0:
        raise ParameterError("beta fit needs a nonzero detuning")
    if reference not in ("thermodynamic", "finite-n"):
        raise ParameterError("reference must be 'thermodynamic' or 'finite-n'")
    if bracket is None:
        bracket = (0.5 * delta, min(3.0 * delta, 0.95 * params.n * params.gamma_c))
    w_n = critical_pump(params, bracket, "delta-onset", rtol=1e-10)
    w_c = delta if reference == "thermodynamic" else w_n

    def fit_on(ws):
        ws = np.asarray(ws, dtype=float)
        if np.any(ws >= min(w_c, w_n)):
            raise ParameterError("w grid must lie strictly below the critical pump")
        recs = [_record_or_raise(params.with_(w=w)) for w in ws]
        return fit_power_law(w_c - ws, [r.delta_mod for r in recs])

    grid = np.linspace(window[0], window[1], points) * w_c if w_grid is None else w_grid
    result = fit_on(grid)
    drift = {}
    for lo, hi in sensitivity_windows:
        drift[f"{lo:g}-{hi:g}"] = fit_on(np.linspace(lo, hi, points) * w_c).exponent
    exps = list(drift.values()) + [result.exponent]
    result.diagnostics = {"w_c": w_c, "w_n": w_n, "reference": reference,
                          "window": list(window), "window_exponents": drift,
                          "exponent_drift": max(exps) - min(exps)}
    return result
