"""Parameter types, rate conversions and validity-regime checks.

Rates are expressed in units of the collective decay rate ``gamma_c``
throughout the solvers; ``gamma_c`` defaults to 1.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from .errors import ParameterError

DEFAULT_MARGIN = 10.0


@dataclass(frozen=True)
class ModelParams:
    """Two ensembles of ``n`` atoms, pump ``w``, collective decay ``gamma_c``
    and detuning ``delta`` between the ensemble transition frequencies."""

    n: int
    w: float
    gamma_c: float = 1.0
    delta: float = 0.0

    def __post_init__(self):
        if isinstance(self.n, bool) or int(self.n) != self.n:
            raise ParameterError(f"n must be an integer, got {self.n!r}")
        object.__setattr__(self, "n", int(self.n))
        for name in ("w", "gamma_c", "delta"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise ParameterError(f"{name} must be finite, got {value!r}")
            object.__setattr__(self, name, value)
        if self.n < 1:
            raise ParameterError(f"n must be >= 1, got {self.n}")
        if self.gamma_c <= 0:
            raise ParameterError(f"gamma_c must be > 0, got {self.gamma_c}")
        if self.w < 0:
            raise ParameterError(f"w must be >= 0, got {self.w}")

    @property
    def coupling(self) -> float:
        """Dissipative coupling N*gamma_c."""
        return self.n * self.gamma_c

    @property
    def rate_scale(self) -> float:
        """Largest natural rate; used to make residual tolerances relative."""
        return self.n * self.gamma_c + self.w + abs(self.delta)

    def with_(self, **changes) -> "ModelParams":
        return replace(self, **changes)

    def scaled(self, factor: float) -> "ModelParams":
        """All rates multiplied by ``factor``; N unchanged."""
        return replace(self, w=self.w * factor, gamma_c=self.gamma_c * factor,
                       delta=self.delta * factor)


@dataclass(frozen=True)
class CavityParams:
    omega: float
    kappa: float
    gamma_s: float = 0.0
    t2_inv: float = 0.0

    def __post_init__(self):
        for name in ("omega", "kappa", "gamma_s", "t2_inv"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise ParameterError(f"{name} must be finite, got {value!r}")
            object.__setattr__(self, name, value)
        if self.kappa <= 0:
            raise ParameterError(f"kappa must be > 0, got {self.kappa}")
        if self.omega < 0 or self.gamma_s < 0 or self.t2_inv < 0:
            raise ParameterError("omega, gamma_s and t2_inv must be >= 0")


@dataclass(frozen=True)
class RegimeWarning:
    check: str
    ratio: float
    margin: float
    message: str

    def as_dict(self) -> dict:
        return {"check": self.check, "ratio": self.ratio,
                "margin": self.margin, "message": self.message}


@dataclass(frozen=True)
class RegimeReport:
    warnings: tuple[RegimeWarning, ...] = field(default_factory=tuple)

    @property
    def ok(self) -> bool:
        return not self.warnings

    def as_dict(self) -> dict:
        return {"ok": self.ok, "warnings": [w.as_dict() for w in self.warnings]}


def collective_decay_rate(cavity: CavityParams) -> float:
    """Cavity-mediated collective decay rate Omega**2 / kappa."""
    if cavity.kappa <= 0:
        raise ParameterError(f"kappa must be > 0, got {cavity.kappa}")
    return cavity.omega**2 / cavity.kappa


def _much_greater(check, big, small, margin, what):
    # a zero right-hand side is trivially dominated
    if small == 0:
        return None
    ratio = big / small
    if ratio >= margin:
        return None
    return RegimeWarning(check, ratio, margin,
                         f"{what}: ratio {ratio:.3g} below margin {margin:g}")


def regime_check(model: ModelParams, cavity: CavityParams,
                 margin: float = DEFAULT_MARGIN) -> RegimeReport:
    """Check the inequalities under which the atom-only superradiance
    equation holds. Never raises; every failed inequality becomes a warning."""
    n_gc = model.n * model.gamma_c
    checks = [
        ("delta<<kappa", cavity.kappa, abs(model.delta), "detuning not small against cavity linewidth"),
        ("N*gamma_c>>gamma_s", n_gc, cavity.gamma_s, "collective decay does not dominate spontaneous emission"),
        ("N*gamma_c>>1/T2", n_gc, cavity.t2_inv, "collective decay does not dominate dephasing"),
        ("kappa>>w", cavity.kappa, model.w, "cavity decay not fast against pump"),
        ("kappa>>gamma_s", cavity.kappa, cavity.gamma_s, "cavity decay not fast against spontaneous emission"),
        ("kappa>>1/T2", cavity.kappa, cavity.t2_inv, "cavity decay not fast against dephasing"),
    ]
    warnings = [w for w in (_much_greater(c, b, s, margin, m) for c, b, s, m in checks) if w]
    if model.w < model.gamma_c:
        warnings.append(RegimeWarning(
            "weak-pump", model.w / model.gamma_c, 1.0,
            "w < gamma_c: sigma_z correlations do not factorize (subradiant dark-state regime)"))
    return RegimeReport(tuple(warnings))
