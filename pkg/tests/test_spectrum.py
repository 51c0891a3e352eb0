import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from srsync.errors import ParameterError
from srsync.model import ModelParams
from srsync.spectrum import (SpectrumResult, delta_thermo, gamma_delta, regression_matrix,
                             spectrum_profile)
from srsync.sweep import fit_power_law


def test_regression_matrix_examples():
    m = regression_matrix(ModelParams(1, 0.0), 0.3)
    assert m.x == pytest.approx(-1.0) and m.y == pytest.approx(0.3)
    m = regression_matrix(ModelParams(10**4, 50.0, delta=100.0), 5e-3)
    assert m.x == pytest.approx(-1.005 + 100j)
    assert m.y == pytest.approx(50.0)
    assert m.generator().shape == (2, 2)


def test_gamma_delta_synchronized_example():
    res = gamma_delta(ModelParams(10**6, 5e5), 0.25)
    assert res.delta_mod == 0.0 and res.synchronized
    assert res.gamma == pytest.approx(1.25, abs=1e-8)


def test_gamma_delta_unsynchronized_example():
    res = gamma_delta(ModelParams(10**4, 50.0, delta=100.0), 5e-3)
    assert res.delta_mod == pytest.approx(math.sqrt(100**2 - 50**2))
    assert res.gamma == pytest.approx(1.005)
    assert not res.synchronized and not res.unstable


@given(st.floats(0.0, 1.0))
def test_no_detuning_no_precession(sz):
    assert gamma_delta(ModelParams(100, 20.0), sz).delta_mod == 0.0


def test_unstable_flag():
    res = gamma_delta(ModelParams(100, 1.0), 0.9)
    assert res.gamma < 0 and res.unstable


@settings(max_examples=300)
@given(st.integers(1, 10**6), st.floats(0, 1e3), st.floats(0.1, 3.0), st.floats(-2e3, 2e3),
       st.floats(-1, 1))
def test_matches_direct_diagonalization(n, w, gc, delta, sz):
    p = ModelParams(n, w, gc, delta)
    scale = p.rate_scale
    # eigvals loses half the digits at the defective point Y = +-delta
    assume(abs((n * gc * sz) ** 2 - delta**2) > 1e-6 * scale**2)
    res = gamma_delta(p, sz)
    lam = np.linalg.eigvals(regression_matrix(p, sz).generator())
    top = lam[np.argmax(lam.real)]
    assert abs(res.gamma + 2 * top.real) <= 1e-9 * scale
    assert abs(res.delta_mod - 2 * abs(top.imag)) <= 1e-9 * scale
    for ev in res.eigenvalues:
        assert np.min(np.abs(lam - ev)) <= 1e-9 * scale


def test_exceptional_point():
    p = ModelParams(10, 3.0, delta=5.0)
    res = gamma_delta(p, 0.5)
    a = 9 * 0.5 - 1 - 3.0
    assert res.delta_mod == 0.0 and res.gamma == pytest.approx(-a)
    assert res.eigenvalues == (a / 2, a / 2)


def test_square_root_onset():
    # Delta vanishes as sqrt(delta - N gamma_c sz) below the locking point
    p = ModelParams(1000, 300.0, delta=400.0)
    sz_lock = p.delta / p.n
    gaps = np.geomspace(1e-8, 1e-4, 12)
    ds = [gamma_delta(p, sz_lock - g).delta_mod for g in gaps]
    fit = fit_power_law(gaps, ds)
    assert fit.exponent == pytest.approx(0.5, abs=0.05)
    assert gamma_delta(p, sz_lock + 1e-6).delta_mod == 0.0


def test_profile_examples():
    _, merged = spectrum_profile(SpectrumResult(2.0, 0.0, True), [0.0])
    assert merged[0] == pytest.approx(2.0)
    _, split = spectrum_profile(SpectrumResult(2.0, 10.0, False), [5.0])
    assert split[0] == pytest.approx(1 + 1 / 101)


@given(st.floats(0.01, 100), st.floats(0, 100))
def test_profile_symmetric(gamma, delta):
    omega = np.linspace(-300, 300, 61)
    _, s = spectrum_profile(SpectrumResult(gamma, delta, False), omega)
    np.testing.assert_allclose(s, s[::-1], rtol=1e-12)


def test_profile_rejects():
    with pytest.raises(ParameterError):
        spectrum_profile(SpectrumResult(0.0, 1.0, False), [0.0])
    with pytest.raises(ParameterError):
        spectrum_profile(SpectrumResult(1.0, 1.0, False), [np.nan])


@pytest.mark.parametrize("w,delta,expected", [(100, 100, 0.0), (50, 100, 86.6025), (7, 0, 0.0)])
def test_delta_thermo(w, delta, expected):
    assert delta_thermo(ModelParams(10**4, w, delta=delta)) == pytest.approx(expected, abs=1e-4)


def test_as_dict():
    d = SpectrumResult(1.0, 2.0, False).as_dict()
    assert d == {"gamma": 1.0, "delta_mod": 2.0, "synchronized": False, "unstable": False}
