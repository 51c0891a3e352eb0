"""Exact density-matrix simulation of the atom-only superradiance master
equation for a few atoms per ensemble.

Atoms are ordered A1..AN, B1..BN; each qubit uses the basis (|e>, |g>).
Density matrices are vectorised by column stacking, so that
``vec(X rho Y) = (Y^T kron X) vec(rho)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import reduce
from itertools import permutations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConvergenceError, FitError, OracleSizeError, ParameterError
from .model import ModelParams
from .ode import DormandPrince
from .spectrum import SYNC_RTOL, SpectrumResult

MAX_N = 3
MAX_N_MATRIX_FREE = 4

SIGMA_MINUS = sp.csr_matrix(np.array([[0, 0], [1, 0]], dtype=complex))
SIGMA_PLUS = sp.csr_matrix(np.array([[0, 1], [0, 0]], dtype=complex))
SIGMA_Z = sp.csr_matrix(np.diag([1.0, -1.0]).astype(complex))

MODES = ("collective", "independent")
OBSERVABLES = ("sz_per_atom", "intra_coherence", "cross_coherence", "collective_intensity")


def site_operator(op, site: int, n_sites: int) -> sp.csr_matrix:
    """``op`` acting on qubit ``site`` of ``n_sites``."""
    eye = sp.identity(2, dtype=complex, format="csr")
    factors = [op if k == site else eye for k in range(n_sites)]
    return reduce(lambda a, b: sp.kron(a, b, format="csr"), factors)


@dataclass
class SpinOperators:
    n: int
    lower: list = field(default_factory=list)
    raise_: list = field(default_factory=list)
    z: list = field(default_factory=list)

    @classmethod
    def build(cls, n: int) -> "SpinOperators":
        m = 2 * n
        return cls(n,
                   [site_operator(SIGMA_MINUS, j, m) for j in range(m)],
                   [site_operator(SIGMA_PLUS, j, m) for j in range(m)],
                   [site_operator(SIGMA_Z, j, m) for j in range(m)])

    def ensemble(self, which: str) -> range:
        return {"A": range(0, self.n), "B": range(self.n, 2 * self.n),
                "total": range(0, 2 * self.n)}[which]

    def j_minus(self, which: str = "total"):
        return sum(self.lower[j] for j in self.ensemble(which))

    def j_plus(self, which: str = "total"):
        return sum(self.raise_[j] for j in self.ensemble(which))

    def jz(self, which: str):
        return 0.5 * sum(self.z[j] for j in self.ensemble(which))


@dataclass
class DensityMatrix:
    n: int
    data: np.ndarray

    @property
    def dim(self) -> int:
        return self.data.shape[0]

    @classmethod
    def from_vector(cls, n: int, vec) -> "DensityMatrix":
        d = 2 ** (2 * n)
        return cls(n, np.asarray(vec).reshape((d, d), order="F"))

    def vector(self) -> np.ndarray:
        return self.data.reshape(-1, order="F")

    def trace(self) -> complex:
        return complex(np.trace(self.data))

    def hermiticity_error(self) -> float:
        return float(np.max(np.abs(self.data - self.data.conj().T)))

    def min_eigenvalue(self) -> float:
        herm = 0.5 * (self.data + self.data.conj().T)
        return float(np.linalg.eigvalsh(herm)[0])

    def permuted(self, perm) -> "DensityMatrix":
        """Relabel atoms: new qubit k is old qubit ``perm[k]``."""
        m = 2 * self.n
        t = self.data.reshape((2,) * (2 * m))
        axes = list(perm) + [m + p for p in perm]
        d = self.dim
        return DensityMatrix(self.n, t.transpose(axes).reshape(d, d))

    def swap_ensembles(self) -> "DensityMatrix":
        n = self.n
        return self.permuted(list(range(n, 2 * n)) + list(range(n)))


def ground_state(n: int) -> DensityMatrix:
    d = 2 ** (2 * n)
    rho = np.zeros((d, d), dtype=complex)
    rho[-1, -1] = 1.0  # |g...g> is the last basis vector
    return DensityMatrix(n, rho)


def maximally_mixed(n: int) -> DensityMatrix:
    d = 2 ** (2 * n)
    return DensityMatrix(n, np.eye(d, dtype=complex) / d)


def product_state(n: int, single) -> DensityMatrix:
    """Same single-atom state on every atom: ``single`` is either a pair of
    amplitudes or a 2x2 density matrix."""
    single = np.asarray(single, dtype=complex)
    if single.shape == (2,):
        single = np.outer(single, single.conj())
    if single.shape != (2, 2):
        raise ParameterError("single-atom state must be 2 amplitudes or a 2x2 matrix")
    return DensityMatrix(n, reduce(np.kron, [single] * (2 * n)))


def _dissipator(c, rate):
    cdc = (c.conj().T @ c).tocsr()
    eye = sp.identity(c.shape[0], dtype=complex, format="csr")
    return rate * (sp.kron(c.conj(), c) - 0.5 * sp.kron(eye, cdc) - 0.5 * sp.kron(cdc.T, eye))


@dataclass
class Liouvillian:
    params: ModelParams
    mode: str
    ops: SpinOperators
    terms: tuple[tuple[str, float, int], ...]
    hamiltonian: sp.csr_matrix
    jumps: list[tuple[sp.csr_matrix, float]]
    matrix: sp.csr_matrix | None = None

    @property
    def hilbert_dim(self) -> int:
        return 2 ** (2 * self.params.n)

    @property
    def dim(self) -> int:
        return self.hilbert_dim ** 2

    def apply(self, vec) -> np.ndarray:
        if self.matrix is not None:
            return self.matrix @ vec
        d = self.hilbert_dim
        rho = np.asarray(vec).reshape((d, d), order="F")
        return self.apply_operator(rho).reshape(-1, order="F")

    def apply_operator(self, rho: np.ndarray) -> np.ndarray:
        """Matrix-free action on a d x d operator."""
        h = self.hamiltonian
        out = -1j * (h @ rho - (h.T @ rho.T).T)
        for c, rate in self.jumps:
            cd = c.conj().T
            c_rho = c @ rho
            out += rate * ((cd.T @ c_rho.T).T
                           - 0.5 * (cd @ c_rho) - 0.5 * ((c.T @ (cd.T @ rho.T)).T))
        return out

    def adjoint_apply(self, vec) -> np.ndarray:
        """Heisenberg-picture action (adjoint w.r.t. the trace inner product)."""
        if self.matrix is not None:
            return self.matrix.conj().T @ vec
        d = self.hilbert_dim
        x = np.asarray(vec).reshape((d, d), order="F")
        h = self.hamiltonian
        out = 1j * (h @ x - (h.T @ x.T).T)
        for c, rate in self.jumps:
            cd = c.conj().T
            cdc = cd @ c
            out += rate * (cd @ (c.T @ x.T).T - 0.5 * (cdc @ x) - 0.5 * (cdc.T @ x.T).T)
        return out.reshape(-1, order="F")


def build_liouvillian(params: ModelParams, mode: str = "collective", *,
                      max_n: int = MAX_N, allow_matrix_free: bool = False) -> Liouvillian:
    """Generator of the atom-only master equation.

    ``collective`` uses gamma_c D[J-] with J- summed over both ensembles;
    ``independent`` replaces it by gamma_c D[sigma_j-] on every atom.
    N up to ``max_n`` gets an assembled sparse matrix; N = 4 is available
    matrix-free when ``allow_matrix_free`` is set.
    """
    if mode not in MODES:
        raise ParameterError(f"mode must be one of {MODES}, got {mode!r}")
    n = params.n
    limit = MAX_N_MATRIX_FREE if allow_matrix_free else max_n
    if n > limit:
        raise OracleSizeError(
            f"N={n} per ensemble needs a {4 ** (2 * n)}-dimensional Liouville space; "
            f"budget is N <= {limit} (N=4 requires allow_matrix_free)")
    ops = SpinOperators.build(n)
    m = 2 * n
    d = 2 ** m
    terms = []
    hamiltonian = sp.csr_matrix((d, d), dtype=complex)
    if params.delta != 0:
        hamiltonian = (0.5 * params.delta * (ops.jz("A") - ops.jz("B"))).tocsr()
        terms.append(("detuning-commutator", params.delta, 1))
    jumps = []
    if mode == "collective":
        jumps.append((ops.j_minus().tocsr(), params.gamma_c))
        terms.append(("collective-decay", params.gamma_c, 1))
    else:
        jumps.extend((ops.lower[j], params.gamma_c) for j in range(m))
        terms.append(("independent-decay", params.gamma_c, m))
    if params.w > 0:
        jumps.extend((ops.raise_[j], params.w) for j in range(m))
        terms.append(("pump", params.w, m))
    matrix = None
    if n <= max_n:
        eye = sp.identity(d, dtype=complex, format="csr")
        matrix = -1j * (sp.kron(eye, hamiltonian) - sp.kron(hamiltonian.T, eye))
        for c, rate in jumps:
            matrix = matrix + _dissipator(c, rate)
        matrix = sp.csr_matrix(matrix)
        matrix.eliminate_zeros()
    return Liouvillian(params, mode, ops, tuple(terms), hamiltonian, jumps, matrix)


@dataclass
class EvolutionResult:
    times: np.ndarray
    states: list[DensityMatrix]


def evolve(liouvillian: Liouvillian, rho0: DensityMatrix, times, tol: float = 1e-10,
           max_steps: int = 2_000_000) -> EvolutionResult:
    """Propagate ``rho0`` and sample it at ``times`` (starting at 0)."""
    n = liouvillian.params.n
    stepper = DormandPrince(lambda _t, v: liouvillian.apply(v), 0.0, rho0.vector(),
                            rtol=tol, atol=tol, max_steps=max_steps)
    out = []
    for t in np.asarray(times, dtype=float):
        stepper.advance(t)
        out.append(DensityMatrix.from_vector(n, stepper.y.copy()))
    return EvolutionResult(np.asarray(times, dtype=float), out)


def _residual(liouvillian, vec) -> float:
    return float(np.linalg.norm(liouvillian.apply(vec)))


def _null_space_solve(liouvillian) -> np.ndarray | None:
    d = liouvillian.hilbert_dim
    a = liouvillian.matrix.tolil(copy=True)
    trace_row = np.zeros(d * d, dtype=complex)
    trace_row[:: d + 1] = 1.0
    a[0, :] = trace_row
    b = np.zeros(d * d, dtype=complex)
    b[0] = 1.0
    try:
        vec = spla.spsolve(a.tocsc(), b)
    except RuntimeError:
        return None
    return vec if np.all(np.isfinite(vec)) else None


def _clean(n, vec) -> DensityMatrix:
    rho = DensityMatrix.from_vector(n, vec).data
    rho = 0.5 * (rho + rho.conj().T)
    return DensityMatrix(n, rho / np.trace(rho).real)


def oracle_steady_state(liouvillian: Liouvillian, tol: float = 1e-10, *,
                        chunk: float = 5.0, max_chunks: int = 400,
                        refine: bool = True) -> DensityMatrix:
    """Stationary state reached from the maximally mixed state.

    Evolves in chunks of ``chunk / (w + gamma_c)`` until ``|L rho| <= tol``.
    With a pump (unique steady state) and an assembled matrix, a null-space
    solve is attempted after the first chunk and kept if it meets ``tol``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    p = liouvillian.params
    n = p.n
    stepper = DormandPrince(lambda _t, v: liouvillian.apply(v), 0.0,
                            maximally_mixed(n).vector(), rtol=tol / 10, atol=tol / 10)
    horizon = chunk / (p.w + p.gamma_c)
    tried_refine = False
    for k in range(1, max_chunks + 1):
        stepper.advance(k * horizon)
        rho = _clean(n, stepper.y)
        if _residual(liouvillian, rho.vector()) <= tol:
            return rho
        if refine and not tried_refine and p.w > 0 and liouvillian.matrix is not None:
            tried_refine = True
            vec = _null_space_solve(liouvillian)
            if vec is not None:
                cand = _clean(n, vec)
                if _residual(liouvillian, cand.vector()) <= tol:
                    return cand
    raise ConvergenceError(
        f"oracle steady state not reached by t={stepper.t:.4g} "
        f"(residual {_residual(liouvillian, stepper.y):.3g})",
        last=DensityMatrix.from_vector(n, stepper.y), time=stepper.t)


def _pairs(ops: SpinOperators, which: str):
    if which == "intra":
        for ens in ("A", "B"):
            idx = list(ops.ensemble(ens))
            yield from ((i, j) for i in idx for j in idx if i != j)
    else:
        yield from ((a, b) for a in ops.ensemble("A") for b in ops.ensemble("B"))


def expectation(rho: DensityMatrix, observable: str, ops: SpinOperators | None = None) -> complex:
    """Oracle counterparts of the cumulant variables.

    ``intra_coherence`` averages <s_i^+ s_j^-> over ordered distinct pairs in
    the same ensemble (NaN for N = 1); ``cross_coherence`` averages
    <s_Ai^+ s_Bj^->; ``collective_intensity`` is <J^+ J^->.
    """
    if observable not in OBSERVABLES:
        raise ParameterError(f"observable must be one of {OBSERVABLES}")
    ops = ops or SpinOperators.build(rho.n)
    data = rho.data

    def ev(op):
        # tr(op rho) without forming the product
        return complex(op.T.multiply(data).sum())

    if observable == "sz_per_atom":
        return complex(np.mean([ev(z) for z in ops.z]).real)
    if observable == "collective_intensity":
        return ev(ops.j_plus() @ ops.j_minus())
    kind = "intra" if observable == "intra_coherence" else "cross"
    pairs = list(_pairs(ops, kind))
    if not pairs:
        return complex("nan")
    return complex(np.mean([ev(ops.raise_[i] @ ops.lower[j]) for i, j in pairs]))


@dataclass
class CorrelationSeries:
    taus: np.ndarray
    values: np.ndarray
    operator: str = "total"


def two_time_correlation(rho_ss: DensityMatrix, liouvillian: Liouvillian, tau_grid,
                         tol: float = 1e-10, operator: str = "total") -> CorrelationSeries:
    """<J^+(tau) J^-(0)> in steady state via the quantum regression theorem.

    ``operator`` selects the collective operator: both ensembles (``total``)
    or one of them (``A``/``B``); the single-ensemble form carries the
    precession phase that cancels in the symmetric total.
    """
    ops = liouvillian.ops
    jm = ops.j_minus(operator)
    jp = ops.j_plus(operator)
    b0 = DensityMatrix(rho_ss.n, jm @ rho_ss.data)
    taus = np.asarray(tau_grid, dtype=float)
    if np.any(np.diff(taus) <= 0) or taus[0] < 0:
        raise ValueError("tau_grid must be non-negative and strictly increasing")
    evo = evolve(liouvillian, b0, taus, tol)
    values = np.array([complex(jp.T.multiply(b.data).sum()) for b in evo.states])
    return CorrelationSeries(taus, values, operator)


def fit_gamma_delta(series: CorrelationSeries, discard: float = 0.2,
                    max_residual: float = 1e-2, min_half_lives: float = 3.0) -> SpectrumResult:
    """Fit ``A exp(-(Gamma + i Delta) tau / 2)`` to a correlation series.

    Gamma comes from a straight-line fit of log|g| after discarding the first
    ``discard`` fraction of the record; Delta from the slope of the unwrapped
    phase over the same window.
    """
    taus, g = np.asarray(series.taus), np.asarray(series.values)
    span = taus[-1] - taus[0]
    window = taus >= taus[0] + discard * span
    if window.sum() < 3:
        raise FitError("fit window holds fewer than 3 samples")
    t, gw = taus[window], g[window]
    mag = np.abs(gw)
    if np.any(mag <= 0):
        raise FitError("correlation vanishes inside the fit window")
    log_coef, log_res = np.polyfit(t, np.log(mag), 1, full=True)[:2]
    phase = np.unwrap(np.angle(gw))
    ph_coef, ph_res = np.polyfit(t, phase, 1, full=True)[:2]
    gamma = -2.0 * log_coef[0]
    delta_mod = abs(2.0 * ph_coef[0])
    residual = float(np.sqrt((np.sum(log_res) + np.sum(ph_res)) / len(t)))
    half_lives = span * gamma / (2 * np.log(2)) if gamma > 0 else 0.0
    diagnostics = {"residual": residual, "window": [float(t[0]), float(t[-1])],
                   "amplitude": float(np.exp(log_coef[1])), "half_lives": float(half_lives)}
    if residual > max_residual:
        raise FitError(f"fit residual {residual:.3g} exceeds {max_residual:g}")
    if half_lives < min_half_lives:
        raise FitError(f"series covers {half_lives:.2f} decay half-lives, "
                       f"need {min_half_lives:g}")
    return SpectrumResult(gamma=float(gamma), delta_mod=float(delta_mod),
                          synchronized=bool(delta_mod < SYNC_RTOL * max(1.0, abs(gamma))),
                          unstable=bool(gamma < 0), fit=diagnostics)


def intra_permutations(n: int):
    """Atom relabelings that permute atoms within each ensemble."""
    for pa in permutations(range(n)):
        for pb in permutations(range(n, 2 * n)):
            yield list(pa) + list(pb)


@dataclass
class CorrelationModes:
    """``g(tau) = sum_k weights[k] * exp(eigenvalues[k] * tau)``, sorted by
    decreasing ``|weight|``."""
    eigenvalues: np.ndarray
    weights: np.ndarray
    operator: str = "total"

    def series(self, taus) -> CorrelationSeries:
        taus = np.asarray(taus, dtype=float)
        values = np.exp(np.outer(taus, self.eigenvalues)) @ self.weights
        return CorrelationSeries(taus, values, self.operator)

    def dominant(self) -> SpectrumResult:
        lam = self.eigenvalues[0]
        gamma, delta_mod = -2.0 * lam.real, 2.0 * abs(lam.imag)
        return SpectrumResult(gamma=float(gamma), delta_mod=float(delta_mod),
                              synchronized=bool(delta_mod < SYNC_RTOL * max(1.0, abs(gamma))),
                              eigenvalues=(complex(lam), complex(self.eigenvalues[1])),
                              unstable=bool(gamma < 0),
                              fit={"weight": [float(self.weights[0].real),
                                              float(self.weights[0].imag)]})


def _lowering_sector(n: int) -> np.ndarray:
    # vectorised entries rho_ij whose ket holds one excitation fewer than the bra
    m = 2 * n
    excited = np.array([m - bin(i).count("1") for i in range(2 ** m)])
    diff = np.subtract.outer(excited, excited)
    return np.flatnonzero((diff == -1).reshape(-1, order="F"))


def correlation_modes(rho_ss: DensityMatrix, liouvillian: Liouvillian,
                      operator: str = "total") -> CorrelationModes:
    """Exact modal decomposition of ``<J^+(tau) J^-(0)>``.

    The generator conserves the excitation difference between ket and bra,
    so ``J^- rho_ss`` evolves inside one block; that block is diagonalised
    densely. Needs the assembled matrix.
    """
    if liouvillian.matrix is None:
        raise OracleSizeError("modal decomposition needs an assembled Liouvillian")
    idx = _lowering_sector(rho_ss.n)
    block = liouvillian.matrix.tocsr()[idx][:, idx].toarray()
    lam, vecs = np.linalg.eig(block)
    ops = liouvillian.ops
    start = (ops.j_minus(operator) @ rho_ss.data).reshape(-1, order="F")[idx]
    readout = ops.j_plus(operator).T.toarray().reshape(-1, order="F")[idx]
    weights = (readout @ vecs) * np.linalg.solve(vecs, start)
    order = np.argsort(-np.abs(weights), kind="stable")
    return CorrelationModes(lam[order], weights[order], operator)


def oracle_gamma_delta(params: ModelParams, mode: str = "collective", *, tol: float = 1e-10,
                       method: str = "modes", horizon: float = 30.0, samples: int = 600,
                       discard: float = 0.7, max_residual: float = 0.05):
    """Exact steady state and (Gamma, Delta) of the single-ensemble correlation.

    ``method="modes"`` takes the mode with the largest weight in the exact
    decomposition. ``method="fit"`` fits the late part of a propagated
    record spanning ``horizon / (w + gamma_c)``, where the slowest mode
    dominates. Returns ``(rho_ss, SpectrumResult)``.
    """
    if method not in ("modes", "fit"):
        raise ParameterError("method must be 'modes' or 'fit'")
    liouvillian = build_liouvillian(params, mode)
    rho = oracle_steady_state(liouvillian, tol)
    if method == "modes":
        return rho, correlation_modes(rho, liouvillian, "A").dominant()
    taus = np.linspace(0.0, horizon / (params.w + params.gamma_c), samples)
    series = two_time_correlation(rho, liouvillian, taus, tol=tol / 100, operator="A")
    return rho, fit_gamma_delta(series, discard, max_residual)
