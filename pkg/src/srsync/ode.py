"""Explicit adaptive Dormand-Prince 5(4) integrator.

Works on real or complex numpy vectors. The 5th-order solution is
propagated (local extrapolation); the embedded 4th-order solution gives
the local error estimate that drives the step size.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, StepSizeUnderflow

# difference between 5th and 4th order weights
_E = (71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40)

_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 5.0


@dataclass
class OdeResult:
    t: np.ndarray
    y: np.ndarray
    nfev: int
    nsteps: int
    nrejected: int


class DormandPrince:
    """Stateful stepper; call :meth:`advance` repeatedly to march forward.

    Every accepted step keeps the scaled local error within
    ``|err_i| <= atol + rtol * max(|y_i|, |y_new_i|)``.
    """

    def __init__(self, fun, t0, y0, *, rtol=1e-8, atol=1e-8, h0=None,
                 max_steps=1_000_000):
        self.fun = fun
        self.t = float(t0)
        self.y = np.array(y0, copy=True)
        self.rtol = rtol
        self.atol = atol
        self.max_steps = max_steps
        self.nfev = 0
        self.nsteps = 0
        self.nrejected = 0
        self.f = self._eval(self.t, self.y)
        self.h = h0 if h0 is not None else self._initial_step()

    def _eval(self, t, y):
        self.nfev += 1
        return self.fun(t, y)

    def _norm(self, err, y, y_new):
        scale = self.atol + self.rtol * np.maximum(np.abs(y), np.abs(y_new))
        return float(np.max(np.abs(err) / scale))

    def _initial_step(self):
        # Hairer, Norsett & Wanner, Solving ODEs I, sec. II.4
        scale = self.atol + self.rtol * np.abs(self.y)
        d0 = float(np.max(np.abs(self.y) / scale))
        d1 = float(np.max(np.abs(self.f) / scale))
        h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
        y1 = self.y + h0 * self.f
        f1 = self._eval(self.t + h0, y1)
        d2 = float(np.max(np.abs(f1 - self.f) / scale)) / h0
        if max(d1, d2) <= 1e-15:
            h1 = max(1e-6, h0 * 1e-3)
        else:
            h1 = (0.01 / max(d1, d2)) ** (1 / 5)
        return min(100 * h0, h1)

    def _h_min(self):
        return 16 * np.finfo(float).eps * max(abs(self.t), abs(self.h), 1e-300)

    def step(self, t_limit=np.inf):
        """Take one accepted step, never passing ``t_limit``."""
        while True:
            if self.nsteps + self.nrejected >= self.max_steps:
                raise ConvergenceError(
                    f"step budget of {self.max_steps} exhausted at t={self.t:.6g}",
                    last=self.y, time=self.t)
            h = min(self.h, t_limit - self.t)
            last = h < self.h
            if h < self._h_min() and not last:
                raise StepSizeUnderflow(
                    f"step size underflow (h={h:.3g}) at t={self.t:.6g}; problem is stiff",
                    last=self.y, time=self.t)
            t, y, f, k1 = self.t, self.y, self._eval, self.f
            k2 = f(t + h / 5, y + h * (k1 / 5))
            k3 = f(t + 3 * h / 10, y + h * (3 / 40 * k1 + 9 / 40 * k2))
            k4 = f(t + 4 * h / 5, y + h * (44 / 45 * k1 - 56 / 15 * k2 + 32 / 9 * k3))
            k5 = f(t + 8 * h / 9, y + h * (19372 / 6561 * k1 - 25360 / 2187 * k2
                                           + 64448 / 6561 * k3 - 212 / 729 * k4))
            k6 = f(t + h, y + h * (9017 / 3168 * k1 - 355 / 33 * k2 + 46732 / 5247 * k3
                                   + 49 / 176 * k4 - 5103 / 18656 * k5))
            y_new = y + h * (35 / 384 * k1 + 500 / 1113 * k3 + 125 / 192 * k4
                             - 2187 / 6784 * k5 + 11 / 84 * k6)
            # stage 7 is evaluated at the propagated solution (FSAL)
            k7 = f(t + h, y_new)
            err = h * (_E[0] * k1 + _E[2] * k3 + _E[3] * k4 + _E[4] * k5
                       + _E[5] * k6 + _E[6] * k7)
            err_norm = self._norm(err, y, y_new)
            if err_norm <= 1.0:
                factor = _MAX_FACTOR if err_norm == 0 else min(
                    _MAX_FACTOR, _SAFETY * err_norm ** -0.2)
                self.t = t_limit if last else t + h
                self.y = y_new
                self.f = k7
                self.nsteps += 1
                if not last:
                    self.h = h * factor
                return
            self.nrejected += 1
            self.h = h * max(_MIN_FACTOR, _SAFETY * err_norm ** -0.2)

    def advance(self, t_target):
        while self.t < t_target:
            self.step(t_target)


def solve(fun, t_span, y0, *, t_eval=None, rtol=1e-8, atol=1e-8,
          max_steps=1_000_000) -> OdeResult:
    """Integrate ``dy/dt = fun(t, y)`` and sample at ``t_eval``
    (default: every accepted step)."""
    t0, t1 = map(float, t_span)
    stepper = DormandPrince(fun, t0, y0, rtol=rtol, atol=atol, max_steps=max_steps)
    ts, ys = [t0], [stepper.y.copy()]
    if t_eval is None:
        while stepper.t < t1:
            stepper.step(t1)
            ts.append(stepper.t)
            ys.append(stepper.y.copy())
    else:
        t_eval = np.asarray(t_eval, dtype=float)
        if np.any(np.diff(t_eval) <= 0) or t_eval[0] < t0 or t_eval[-1] > t1:
            raise ValueError("t_eval must be strictly increasing inside t_span")
        ts, ys = [], []
        for t in t_eval:
            stepper.advance(t)
            ts.append(t)
            ys.append(stepper.y.copy())
    return OdeResult(np.array(ts), np.array(ys), stepper.nfev, stepper.nsteps,
                     stepper.nrejected)
