"""Acceptance gate: one check per criterion, each printing a PASS/FAIL line.

Run under pytest (lines are repeated in the terminal summary) or directly
with ``python3 tests/test_acceptance.py``.
"""
import math
import time

import numpy as np
import pytest

from srsync.cumulant import jacobian4, residual4, steady_state, thermodynamic_sz
from srsync.errors import BracketError
from srsync.model import ModelParams
from srsync.oracle import (CorrelationSeries, build_liouvillian, evolve,
                           expectation, fit_gamma_delta, oracle_gamma_delta,
                           oracle_steady_state, product_state)
from srsync.spectrum import delta_thermo, gamma_delta
from srsync.sweep import (Axis, GridSpec, beta_fit, critical_pump, phase_diagram,
                          run_points, scaling_fit, synchronized_boundary)

# tolerances, one block per criterion
C1_N, C1_RTOL, C1_SECONDS = 10**6, 0.01, 60.0
C2_N, C2_BAND, C2_TAIL_FROM, C2_TAIL_RTOL, C2_AT_5W, C2_SECONDS = (
    10**6, 0.02, 1.05, 0.01, (0.96, 1.00), 120.0)
C3_N, C3_DELTA, C3_RTOL = 10**6, 1e3, 0.05
C4_N, C4_WINDOW, C4_TARGET, C4_ATOL, C4_R2 = 10**6, (0.8, 0.99), 0.50, 0.03, 0.999
C5_NS = (10**2, 10**3, 10**4, 10**5, 10**6)
C5_OFFSET, C5_GAMMA, C5_ATOL, C5_R2, C5_SECONDS = -0.34, 0.66, 0.05, 0.98, 600.0
C6_N, C6_POINTS, C6_PEAK_RATIO, C6_SECONDS = 10**4, 50, 10.0, 600.0
C7_ATOL, C7_FIT_RTOL = 1e-8, 1e-6
C8_NS, C8_W_RATIO, C8_DELTA_RATIO, C8_STEP, C8_SLOPE_FLOOR = (1, 2, 3), 0.5, 0.25, 0.05, 1e-9
C9_PARITY_RTOL, C9_SCALE_RTOL, C9_JAC_RTOL, C9_EIG_DRAWS, C9_EIG_RTOL = (
    1e-9, 1e-8, 1e-6, 1000, 1e-9)


def rel(a, b):
    return abs(a - b) / abs(b)


def criterion_1():
    n = C1_N
    grid = [(w, 0.0) for w in (1e4, 5e4, 1e5, 2e5, 4e5, 6e5, 8e5)]
    grid += [(4e5, f * 4e5) for f in (0.1, 0.3, 0.5, 0.7)]
    grid += [(2e5, f * 2e5) for f in (0.2, 0.6, 0.8)]
    grid += [(1e5, f * 1e5) for f in (1.0, 1.5, 2.0, 3.0)]
    grid += [(3e5, f * 3e5) for f in (1.2, 2.0)]
    start = time.perf_counter()
    worst = 0.0
    for w, d in grid:
        p = ModelParams(n, w, delta=d)
        worst = max(worst, rel(steady_state(p).sz, thermodynamic_sz(p)))
    elapsed = time.perf_counter() - start
    ok = len(grid) == 20 and worst <= C1_RTOL and elapsed <= C1_SECONDS
    return ok, f"max rel err {worst:.2e} <= {C1_RTOL}, {elapsed:.1f}s"


def criterion_2():
    n = C2_N
    w = 0.5 * n
    deltas = np.linspace(0.0, 4 * w, 201)
    start = time.perf_counter()
    recs = run_points([ModelParams(n, w, delta=d) for d in deltas], workers=1)
    elapsed = time.perf_counter() - start
    assert all(r.ok for r in recs)
    below = [r for r in recs if r.params.delta < (1 - C2_BAND) * w]
    sync_ok = all(r.delta_mod == 0 and r.synchronized for r in below)
    tail = [r for r in recs if r.params.delta > C2_TAIL_FROM * w]
    tail_err = max(abs(r.delta_mod - delta_thermo(r.params)) / r.params.delta for r in tail)
    p5 = ModelParams(n, w, delta=5 * w)
    ratio = gamma_delta(p5, steady_state(p5).sz).delta_mod / p5.delta
    lo, hi = C2_AT_5W
    ok = sync_ok and tail_err <= C2_TAIL_RTOL and lo <= ratio <= hi and elapsed <= C2_SECONDS
    return ok, (f"locked below threshold: {sync_ok}, tail err {tail_err:.2e}, "
                f"Delta/delta at 5w = {ratio:.4f}, {elapsed:.1f}s")


def criterion_3():
    p = ModelParams(C3_N, C3_DELTA, delta=C3_DELTA)
    w_n = critical_pump(p, (0.5 * C3_DELTA, 3 * C3_DELTA), "delta-onset", rtol=1e-8)
    off = rel(w_n, C3_DELTA)
    return off <= C3_RTOL, f"w_N = {w_n:.2f}, offset {off:.3%} (limit {C3_RTOL:.0%})"


def criterion_4():
    d = 0.5 * C4_N
    fit = beta_fit(ModelParams(C4_N, d, delta=d), window=C4_WINDOW)
    ok = abs(fit.exponent - C4_TARGET) <= C4_ATOL and fit.r_squared >= C4_R2
    return ok, (f"beta = {fit.exponent:.4f}, r2 = {fit.r_squared:.6f}, "
                f"w_c = {fit.diagnostics['w_c']:.0f}")


def criterion_5():
    start = time.perf_counter()
    offset, gamma, _ = scaling_fit(C5_NS, "gamma-peak", workers=1)
    cross, cross_g, _ = scaling_fit(C5_NS, "delta-onset", workers=1)
    elapsed = time.perf_counter() - start
    ok = (abs(offset.exponent - C5_OFFSET) <= C5_ATOL and offset.r_squared >= C5_R2
          and abs(gamma.exponent - C5_GAMMA) <= C5_ATOL and gamma.r_squared >= C5_R2
          and elapsed <= C5_SECONDS)
    return ok, (f"gamma-peak: offset {offset.exponent:.4f} (r2 {offset.r_squared:.5f}), "
                f"Gamma {gamma.exponent:.4f} (r2 {gamma.r_squared:.5f}); "
                f"delta-onset: {cross.exponent:.4f}, {cross_g.exponent:.4f}; {elapsed:.1f}s")


def _interior_maxima(g):
    return [i for i in range(1, len(g) - 1) if g[i] > g[i - 1] and g[i] >= g[i + 1]]


def criterion_6():
    n = C6_N
    start = time.perf_counter()
    grid = GridSpec((Axis("delta", 0.02 * n, 1.5 * n, C6_POINTS),
                     Axis("w", 0.01 * n, 0.99 * n, C6_POINTS)), ModelParams(n, 1.0))
    res = phase_diagram(grid, workers=1)
    assert not res.failures
    deltas, ws = res.coords
    gam, sync = res.field("gamma"), res.field("synchronized")
    # (a) nothing locks beyond the coupling
    a_ok = not sync[deltas > n].any()
    # (b) one abrupt interior peak, then a drop towards the large-w value
    b_ok = True
    for i in np.flatnonzero(deltas < 0.5 * n):
        g = gam[i]
        peaks = _interior_maxima(g)
        k = int(np.argmax(g))
        asymptote = g[-1]
        dropped = np.any(g[k + 1:-1] < C6_PEAK_RATIO * asymptote)
        b_ok &= len(peaks) == 1 and peaks[0] == k and bool(dropped)
    # (c) contour against a per-slice critical pump search
    cell = ws[1] - ws[0]
    c_ok = True
    for (d, edge), row in zip(synchronized_boundary(res, "w"), sync):
        params = ModelParams(n, 1.0, delta=d)
        try:
            w_n = critical_pump(params, (ws[0], ws[-1]), "delta-onset", rtol=1e-6)
        except BracketError:
            c_ok &= edge is None or bool(row[0])
            continue
        c_ok &= edge is not None and abs(edge - w_n) <= cell
    elapsed = time.perf_counter() - start
    ok = a_ok and b_ok and c_ok and elapsed <= C6_SECONDS
    return ok, f"(a) {a_ok}, (b) {b_ok}, (c) {c_ok}, {elapsed:.1f}s"


def criterion_7():
    w, gc, d = 2.0, 1.0, 0.7
    a_err = 0.0
    pe = w / (w + gc)
    single = np.diag([pe, 1 - pe])
    for n in (1, 2, 3):
        p = ModelParams(n, w, gc, d)
        rho = oracle_steady_state(build_liouvillian(p, "independent"))
        a_err = max(a_err, abs(expectation(rho, "sz_per_atom").real - (w - gc) / (w + gc)),
                    float(np.abs(rho.data - product_state(n, single).data).max()))
    b_err = 0.0
    coherent = np.array([[0.5, 0.3 + 0.2j], [0.3 - 0.2j, 0.5]])
    for n in (1, 2):
        lv = build_liouvillian(ModelParams(n, 1.5, 1.0, 0.8))
        for rho in evolve(lv, product_state(n, coherent), np.linspace(0, 5, 11), 1e-11).states:
            b_err = max(b_err, abs(rho.trace() - 1), rho.hermiticity_error(),
                        max(0.0, -rho.min_eigenvalue()))
    c_err = 0.0
    for gamma, delta in ((1.0, 0.0), (2.5, 0.7), (0.4, 3.0), (7.0, 12.0)):
        taus = np.linspace(0, 20 / gamma, 400)
        g = (0.8 + 0.1j) * np.exp(-(gamma + 1j * delta) * taus / 2)
        fit = fit_gamma_delta(CorrelationSeries(taus, g))
        c_err = max(c_err, rel(fit.gamma, gamma), abs(fit.delta_mod - delta) / max(delta, 1.0))
    ok = a_err <= C7_ATOL and b_err <= C7_ATOL and c_err <= C7_FIT_RTOL
    return ok, f"(a) {a_err:.1e}, (b) {b_err:.1e}, (c) {c_err:.1e}"


def oracle_cumulant_table():
    """Exact and cumulant values on the fixed ray, with dDelta/dw by central
    differences; also stored as regression fixtures."""
    rows = []
    for n in C8_NS:
        p = ModelParams(n, C8_W_RATIO * n, delta=C8_DELTA_RATIO * n)
        h = C8_STEP * n

        def exact_delta(q):
            return oracle_gamma_delta(q)[1].delta_mod

        def cum_delta(q):
            return gamma_delta(q, steady_state(q).sz).delta_mod

        rho, exact = oracle_gamma_delta(p)
        sz_c = steady_state(p).sz
        approx = gamma_delta(p, sz_c)
        up, down = p.with_(w=p.w + h), p.with_(w=p.w - h)
        rows.append({
            "n": n, "sz_oracle": expectation(rho, "sz_per_atom").real, "sz_cumulant": sz_c,
            "gamma_oracle": exact.gamma, "gamma_cumulant": approx.gamma,
            "delta_oracle": exact.delta_mod, "delta_cumulant": approx.delta_mod,
            "slope_oracle": (exact_delta(up) - exact_delta(down)) / (2 * h),
            "slope_cumulant": (cum_delta(up) - cum_delta(down)) / (2 * h),
        })
    return rows


def _sign(slope):
    # slopes below the floor are rounding noise of a locked (Delta = 0) mode
    return 0 if abs(slope) <= C8_SLOPE_FLOOR else int(np.sign(slope))


def criterion_8():
    rows = oracle_cumulant_table()
    devs = []
    for r in rows:
        diff = abs(r["sz_cumulant"] - r["sz_oracle"])
        devs.append(diff / abs(r["sz_oracle"]) if r["sz_oracle"] != 0 else math.inf)
    monotone = all(b < a for a, b in zip(devs, devs[1:]))
    signs = [_sign(r["slope_oracle"]) == _sign(r["slope_cumulant"]) for r in rows]
    ok = monotone and all(signs)
    dev_text = ", ".join(f"{d:.3g}" for d in devs)
    return ok, f"rel sz deviations [{dev_text}], slope signs agree {signs}"


def criterion_9():
    rng = np.random.default_rng(9)
    parity = scale = jac = eig = 0.0
    for _ in range(15):
        n = int(rng.integers(2, 10**5))
        p = ModelParams(n, rng.uniform(0.05, 0.9) * n, delta=rng.uniform(0.0, 1.2) * n)
        a = gamma_delta(p, steady_state(p).sz)
        m = p.with_(delta=-p.delta)
        b = gamma_delta(m, steady_state(m).sz)
        parity = max(parity, abs(steady_state(m).sz - steady_state(p).sz),
                     abs(a.gamma - b.gamma) / p.rate_scale,
                     abs(a.delta_mod - b.delta_mod) / p.rate_scale)
        f = rng.uniform(0.1, 10.0)
        q = p.scaled(f)
        c = gamma_delta(q, steady_state(q).sz)
        scale = max(scale, abs(steady_state(q).sz - steady_state(p).sz),
                    abs(c.gamma - f * a.gamma) / q.rate_scale,
                    abs(c.delta_mod - f * a.delta_mod) / q.rate_scale)
    for _ in range(200):
        p = ModelParams(int(rng.integers(1, 10**6)), rng.uniform(0.1, 1e3),
                        rng.uniform(0.1, 3.0), rng.uniform(-1e3, 1e3))
        y = rng.uniform(-1, 1, 4)
        num = np.empty((4, 4))
        for j in range(4):
            h = 1e-6 * max(1.0, abs(y[j]))
            e = np.zeros(4)
            e[j] = h
            num[:, j] = (residual4(y + e, p) - residual4(y - e, p)) / (2 * h)
        exact = jacobian4(y, p)
        jac = max(jac, np.linalg.norm(exact - num) / np.linalg.norm(exact))
    for _ in range(C9_EIG_DRAWS):
        p = ModelParams(int(rng.integers(1, 10**6)), rng.uniform(0, 1e3),
                        rng.uniform(0.1, 3.0), rng.uniform(-2e3, 2e3))
        sz = rng.uniform(-1, 1)
        res = gamma_delta(p, sz)
        x = complex(p.gamma_c * (p.n - 1) * sz - p.gamma_c - p.w, p.delta)
        y = p.n * p.gamma_c * sz
        lam = np.linalg.eigvals(np.array([[x, y], [y, x.conjugate()]]))
        top = lam[np.argmax(lam.real)]
        eig = max(eig, abs(res.gamma + top.real) / p.rate_scale,
                  abs(res.delta_mod - abs(top.imag)) / p.rate_scale)
    params = [ModelParams(500, w, delta=d) for w in (50.0, 200.0, 400.0) for d in (0.0, 150.0, 600.0)]
    serial = run_points(params, workers=1)
    parallel = run_points(params, workers=2)
    deterministic = serial == parallel
    ok = (parity <= C9_PARITY_RTOL and scale <= C9_SCALE_RTOL and jac <= C9_JAC_RTOL
          and eig <= C9_EIG_RTOL and deterministic)
    return ok, (f"parity {parity:.1e}, scale {scale:.1e}, jacobian {jac:.1e}, "
                f"eigen {eig:.1e}, deterministic {deterministic}")


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5,
            criterion_6, criterion_7, criterion_8, criterion_9]


@pytest.mark.parametrize("check", CRITERIA, ids=[f"criterion_{i}" for i in range(1, 10)])
def test_acceptance(check, record_criterion):
    passed, detail = check()
    label = check.__name__.replace("_", " ")
    assert record_criterion(label, passed, detail), detail


if __name__ == "__main__":
    for check in CRITERIA:
        passed, detail = check()
        print(f"{check.__name__.replace('_', ' ')}: {'PASS' if passed else 'FAIL'} ({detail})")
