"""Second-order cumulant equations for two pumped, collectively decaying
ensembles, their time integration and their steady state.

The closed variable set is the per-atom inversion ``sz``, the coherence
between two atoms of the same ensemble ``intra`` and the coherence between
an atom of ensemble A and one of ensemble B ``cross``. Third-order
cumulants are dropped and every two-atom ``sigma_z sigma_z`` correlation is
replaced by ``sz**2``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceError
from .model import ModelParams
from .ode import DormandPrince

DEFAULT_SEED = (0.0, 1e-3, 1e-3)
DEFAULT_TOL = 1e-12


@dataclass(frozen=True)
class CumulantState:
    sz: float
    intra: complex
    cross: complex

    def to_vector(self) -> np.ndarray:
        return np.array([self.sz, self.intra.real, self.intra.imag,
                         self.cross.real, self.cross.imag])

    @classmethod
    def from_vector(cls, y) -> "CumulantState":
        y = [float(v) for v in y]
        if len(y) == 4:  # real-intra reduction used by the Newton solver
            return cls(y[0], complex(y[1], 0.0), complex(y[2], y[3]))
        return cls(y[0], complex(y[1], y[2]), complex(y[3], y[4]))

    def conjugate(self) -> "CumulantState":
        return CumulantState(self.sz, self.intra.conjugate(), self.cross.conjugate())

    def norm(self) -> float:
        return math.sqrt(self.sz**2 + abs(self.intra)**2 + abs(self.cross)**2)

    def diagnostics(self, tol: float = 1e-9) -> list[str]:
        """Physicality violations; an empty list means none were found."""
        issues = []
        if not -1 - tol <= self.sz <= 1 + tol:
            issues.append(f"sz={self.sz:.6g} outside [-1, 1]")
        bound = (1 + self.sz) / 2 + tol
        if abs(self.intra) > bound:
            issues.append(f"|intra|={abs(self.intra):.6g} exceeds (1+sz)/2")
        if abs(self.cross) > bound:
            issues.append(f"|cross|={abs(self.cross):.6g} exceeds (1+sz)/2")
        return issues


@dataclass
class Trajectory:
    times: np.ndarray
    states: list[CumulantState]
    breakdown: list[str] = field(default_factory=list)

    def __post_init__(self):
        if len(self.times) != len(self.states):
            raise ValueError("times and states differ in length")

    @property
    def final(self) -> CumulantState:
        return self.states[-1]

    def sz(self) -> np.ndarray:
        return np.array([s.sz for s in self.states])


def _rhs5(y, n, w, gc, delta):
    s, pr, pi, xr, xi = y
    q = 0.5 * gc * (s * s + s)
    decay = w + gc
    ds = -gc * (s + 1) - w * (s - 1) - 2 * gc * (n - 1) * pr - 2 * gc * n * xr
    dpr = -decay * pr + q + gc * (n - 2) * s * pr + gc * n * s * xr
    dpi = -decay * pi + gc * (n - 2) * s * pi
    a = gc * (n - 1) * s
    dxr = -decay * xr - delta * xi + q + a * (xr + pr)
    dxi = -decay * xi + delta * xr + a * (xi + pi)
    return ds, dpr, dpi, dxr, dxi


def cumulant_rhs(state: CumulantState, params: ModelParams) -> CumulantState:
    """Time derivative of ``(sz, intra, cross)``."""
    d = _rhs5(state.to_vector(), params.n, params.w, params.gamma_c, params.delta)
    return CumulantState.from_vector(d)


def residual4(y, params: ModelParams) -> np.ndarray:
    """Right-hand side on the real-intra unknowns ``(sz, intra, Re cross, Im cross)``."""
    s, p, xr, xi = y
    d = _rhs5((s, p, 0.0, xr, xi), params.n, params.w, params.gamma_c, params.delta)
    return np.array([d[0], d[1], d[3], d[4]])


def jacobian4(y, params: ModelParams) -> np.ndarray:
    """Analytic Jacobian of :func:`residual4`."""
    s, p, xr, xi = y
    n, w, gc, delta = params.n, params.w, params.gamma_c, params.delta
    decay = w + gc
    dq = 0.5 * gc * (2 * s + 1)
    a = gc * (n - 1) * s
    return np.array([
        [-gc - w, -2 * gc * (n - 1), -2 * gc * n, 0.0],
        [dq + gc * (n - 2) * p + gc * n * xr, -decay + gc * (n - 2) * s, gc * n * s, 0.0],
        [dq + gc * (n - 1) * (xr + p), a, -decay + a, -delta],
        [gc * (n - 1) * xi, 0.0, delta, -decay + a],
    ])


def stability_exponent(y, params: ModelParams) -> float:
    """Largest real part of the linearisation at ``y``, including the
    decoupled imaginary-intra direction."""
    ev = np.linalg.eigvals(jacobian4(y, params)).real.max()
    im_intra = -(params.w + params.gamma_c) + params.gamma_c * (params.n - 2) * y[0]
    return float(max(ev, im_intra))


def _scaled_residual(y, params):
    return float(np.linalg.norm(residual4(y, params))) / params.rate_scale


def integrate(initial: CumulantState, params: ModelParams, t_end: float,
              tol: float = 1e-9, *, t_eval=None, max_steps=2_000_000) -> Trajectory:
    """March the cumulant equations to ``t_end`` (units of 1/gamma_c)."""
    if tol <= 0 or t_end <= 0:
        raise ValueError("tol and t_end must be positive")
    n, w, gc, delta = params.n, params.w, params.gamma_c, params.delta

    def f(_t, y):
        return np.array(_rhs5(y.tolist(), n, w, gc, delta))

    stepper = DormandPrince(f, 0.0, initial.to_vector(), rtol=tol, atol=tol,
                            max_steps=max_steps)
    times, states = [0.0], [initial]
    if t_eval is None:
        while stepper.t < t_end:
            stepper.step(t_end)
            times.append(stepper.t)
            states.append(CumulantState.from_vector(stepper.y))
    else:
        times, states = [], []
        for t in np.asarray(t_eval, dtype=float):
            stepper.advance(t)
            times.append(t)
            states.append(CumulantState.from_vector(stepper.y))
    return Trajectory(np.array(times), states, states[-1].diagnostics())


def thermodynamic_sz(params: ModelParams) -> float:
    """Leading order in 1/N inversion for large ensembles."""
    if params.w <= 0:
        raise ValueError("thermodynamic inversion requires w > 0")
    w, d, ngc = params.w, abs(params.delta), params.n * params.gamma_c
    if d == 0:
        sz = w / (2 * ngc)
    elif d < w:
        sz = (w * w + d * d) / (2 * w * ngc)
    else:
        sz = w / ngc
    if sz >= 1:
        raise ValueError(f"outside validity: leading-order inversion {sz:.4g} >= 1")
    return sz


@dataclass
class SteadyStateInfo:
    state: CumulantState
    residual: float
    march_time: float
    march_steps: int
    newton_iterations: int
    stability: float
    flags: list[str] = field(default_factory=list)

    @property
    def vector4(self) -> np.ndarray:
        s = self.state
        return np.array([s.sz, s.intra.real, s.cross.real, s.cross.imag])


def newton(y0, params: ModelParams, tol: float = DEFAULT_TOL, max_iter: int = 60):
    """Damped Newton on the four real unknowns, polished to rounding level.

    Iterates until the scaled residual stops decreasing, then requires it to
    be at most ``tol``. Returns ``(y, iterations)``.
    """
    y = np.array(y0, dtype=float)
    r = _scaled_residual(y, params)
    for it in range(1, max_iter + 1):
        try:
            dy = np.linalg.solve(jacobian4(y, params), -residual4(y, params))
        except np.linalg.LinAlgError as exc:
            raise ConvergenceError(f"singular Jacobian: {exc}", last=y) from exc
        if not np.all(np.isfinite(dy)):
            raise ConvergenceError("non-finite Newton step", last=y)
        lam = 1.0
        while lam > 1e-4:
            trial = y + lam * dy
            r_trial = _scaled_residual(trial, params)
            if np.isfinite(r_trial) and r_trial < r:
                break
            lam *= 0.5
        else:
            # no descent left: rounding floor reached
            break
        # quadratic phase has stalled once the residual stops halving
        stalled = r_trial > 0.5 * r and r <= tol
        y, r = trial, r_trial
        if stalled or r == 0.0:
            break
    if r <= tol:
        return y, it
    raise ConvergenceError(f"Newton did not converge (residual {r:.3g})", last=y)


def steady_state_info(params: ModelParams, tol: float = DEFAULT_TOL, *,
                      seed: CumulantState | None = None, chunk: float = 10.0,
                      max_chunks: int = 40, march_tol: float = 1e-7,
                      max_steps: int = 2_000_000) -> SteadyStateInfo:
    """Steady state by time-marching towards stationarity, then Newton.

    The march runs in chunks of ``chunk / (w + gamma_c)``. After every chunk a
    Newton refinement is attempted; it is accepted only if it converges to a
    linearly stable root. ``tol`` bounds ``|rhs| / rate_scale``.
    """
    if params.w == 0:
        state = CumulantState(-1.0, 0j, 0j)
        y = np.array([-1.0, 0.0, 0.0, 0.0])
        return SteadyStateInfo(state, _scaled_residual(y, params), 0.0, 0, 0,
                               stability_exponent(y, params))
    n, w, gc, delta = params.n, params.w, params.gamma_c, params.delta
    seed = seed or CumulantState(DEFAULT_SEED[0], complex(DEFAULT_SEED[1]),
                                 complex(DEFAULT_SEED[2]))

    def f(_t, y):
        return np.array(_rhs5(y.tolist(), n, w, gc, delta))

    stepper = DormandPrince(f, 0.0, seed.to_vector(), rtol=march_tol,
                            atol=march_tol, max_steps=max_steps)
    horizon = chunk / (w + gc)
    last_error = None
    for k in range(1, max_chunks + 1):
        stepper.advance(k * horizon)
        y5 = stepper.y
        try:
            y, iters = newton([y5[0], y5[1], y5[3], y5[4]], params, tol)
        except ConvergenceError as exc:
            last_error = exc
            continue
        stab = stability_exponent(y, params)
        if stab >= 0:
            last_error = ConvergenceError(
                f"Newton reached an unstable root (exponent {stab:.3g})", last=y)
            continue
        state = CumulantState.from_vector(y)
        return SteadyStateInfo(state, _scaled_residual(y, params), stepper.t,
                               stepper.nsteps, iters, stab, state.diagnostics())
    raise ConvergenceError(
        f"no stable steady state after marching to t={stepper.t:.4g}: {last_error}",
        last=CumulantState.from_vector(stepper.y), time=stepper.t)


def steady_state(params: ModelParams, tol: float = DEFAULT_TOL, **kwargs) -> CumulantState:
    return steady_state_info(params, tol, **kwargs).state


def distinct_roots(params: ModelParams, seeds, tol: float = DEFAULT_TOL,
                   stable_only: bool = True) -> list[np.ndarray]:
    """Newton roots reached from several seeds, deduplicated. Used to report
    root multiplicity; the production path is :func:`steady_state_info`."""
    roots = []
    for seed in seeds:
        try:
            y, _ = newton(seed, params, tol)
        except ConvergenceError:
            continue
        if stable_only and stability_exponent(y, params) >= 0:
            continue
        if not any(np.allclose(y, r, rtol=1e-6, atol=1e-9) for r in roots):
            roots.append(y)
    return roots
