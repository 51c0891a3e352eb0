"""Linewidth and relative precession frequency of the emitted light.

The first-order correlations between an atom of one ensemble and atoms of
the other evolve under the 2x2 regression generator ``G = [[X, Y], [Y, X*]] / 2``
with ``X = gamma_c (N-1) sz - gamma_c - w + i delta`` and ``Y = N gamma_c sz``.
The slowest-decaying eigenvalue is written ``-(Gamma + i Delta) / 2``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError
from .model import ModelParams

SYNC_RTOL = 1e-6


@dataclass(frozen=True)
class RegressionMatrix:
    x: complex
    y: float

    def generator(self) -> np.ndarray:
        return 0.5 * np.array([[self.x, self.y], [self.y, self.x.conjugate()]])


@dataclass(frozen=True)
class SpectrumResult:
    gamma: float
    delta_mod: float
    synchronized: bool
    eigenvalues: tuple[complex, complex] = (0j, 0j)
    unstable: bool = False
    fit: dict | None = field(default=None, compare=False)

    def as_dict(self) -> dict:
        out = {"gamma": self.gamma, "delta_mod": self.delta_mod,
               "synchronized": self.synchronized, "unstable": self.unstable}
        if self.fit is not None:
            out["fit"] = self.fit
        return out


def sync_tolerance(params: ModelParams) -> float:
    return SYNC_RTOL * max(params.gamma_c, abs(params.delta))


def regression_matrix(params: ModelParams, sz: float) -> RegressionMatrix:
    gc = params.gamma_c
    x = complex(gc * (params.n - 1) * sz - gc - params.w, params.delta)
    return RegressionMatrix(x, params.n * gc * sz)


def gamma_delta(params: ModelParams, sz: float) -> SpectrumResult:
    """Gamma and Delta from the dominant regression eigenvalue at inversion ``sz``.

    ``Gamma < 0`` (growing correlations) is returned with ``unstable=True``.
    """
    gc, n, d = params.gamma_c, params.n, params.delta
    a = gc * (n - 1) * sz - gc - params.w
    disc = (n * gc * sz) ** 2 - d * d
    root = math.sqrt(disc) if disc >= 0 else 1j * math.sqrt(-disc)
    # eigenvalues of 2*G; the + branch has the larger real part
    lam_plus, lam_minus = a + root, a - root
    gamma = -lam_plus.real if isinstance(lam_plus, complex) else -lam_plus
    delta_mod = abs(lam_plus.imag) if isinstance(lam_plus, complex) else 0.0
    return SpectrumResult(
        gamma=float(gamma),
        delta_mod=float(delta_mod),
        synchronized=delta_mod < sync_tolerance(params),
        eigenvalues=(complex(lam_plus) / 2, complex(lam_minus) / 2),
        unstable=gamma < 0,
    )


def spectrum_profile(result: SpectrumResult, omega_grid) -> tuple[np.ndarray, np.ndarray]:
    """Two Lorentzians of half-width Gamma/2 at +-Delta/2, unit peak each."""
    if not result.gamma > 0:
        raise ParameterError(f"spectrum needs gamma > 0, got {result.gamma}")
    omega = np.asarray(omega_grid, dtype=float)
    if not np.all(np.isfinite(omega)):
        raise ParameterError("frequency grid must be finite")
    hw = result.gamma / 2
    half = result.delta_mod / 2

    def line(center):
        return 1.0 / (1.0 + ((omega - center) / hw) ** 2)

    return omega, line(half) + line(-half)


def delta_thermo(params: ModelParams) -> float:
    """Large-N precession frequency: sqrt(delta^2 - w^2) above the critical
    detuning, zero otherwise."""
    d = abs(params.delta)
    if d <= params.w:
        return 0.0
    return math.sqrt(d * d - params.w * params.w)
