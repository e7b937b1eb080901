import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad
from sklearn.base import clone

from damped_blowup.estimates import (
    DecayRateRegressor, DomainTooSmallError, conjugate, decay_exponent, fit_decay, log_refined_bound,
    psi_power_integral, sweep, weighted_psi_power_integral,
)
from damped_blowup.radial import Dimension, RadialGrid, strauss_exponent
from damped_blowup.testfunctions import build_test_functions

SQ2 = math.sqrt(2.0)


@pytest.fixture(scope="module")
def tf1():
    return build_test_functions(Dimension(1), RadialGrid.from_spacing(0.0, 40.0, 2e-3))


@pytest.fixture(scope="module")
def tf3():
    return build_test_functions(Dimension(3, 1.0), RadialGrid.from_spacing(1.0, 41.0, 2e-3))


def test_exponent_arithmetic():
    assert conjugate(2.0) == 2.0
    assert decay_exponent(1, 2.0) == 0.0
    assert decay_exponent(3, 2.0) == 0.0
    p = strauss_exponent(2)
    assert decay_exponent(2, p) == pytest.approx(1 - p / (p - 1) / 2)
    assert log_refined_bound(3.0) == (0.25, -0.5)
    with pytest.raises(ValueError):
        conjugate(1.0)


@pytest.mark.parametrize("p,t", [(2.0, 0.0), (2.0, 5.0), (3.0, 12.3), (1.5, 20.0)])
def test_half_line_integral_against_quad(tf1, p, t):
    pc = p / (p - 1)
    R = 2.0

    def f(x):
        return (SQ2 * math.sinh(x / SQ2) * math.exp(-t)) ** pc

    exact, _ = quad(f, 0.0, t + R, epsabs=0, epsrel=1e-12, limit=200)
    assert psi_power_integral(tf1, p, t, R) == pytest.approx(exact, rel=1e-5)


@pytest.mark.parametrize("p,t", [(2.0, 3.0), (1.8, 10.0)])
def test_weighted_n3_against_quad(tf3, p, t):
    pc = p / (p - 1)
    R = 3.0

    def f(r):
        phi1 = SQ2 * math.sinh((r - 1) / SQ2) / r
        phi0 = 1 - 1 / r
        return 4 * math.pi * r * r * phi0 ** (-1 / (p - 1)) * (phi1 * math.exp(-t)) ** pc

    exact, _ = quad(f, 1.0, t + R, epsabs=0, epsrel=1e-11, limit=400)
    assert weighted_psi_power_integral(tf3, p, t, R) == pytest.approx(exact, rel=1e-4)


def test_log_mode_consistent(tf3):
    v = psi_power_integral(tf3, 2.0, 7.0, 3.0)
    assert psi_power_integral(tf3, 2.0, 7.0, 3.0, log=True) == pytest.approx(math.log(v), rel=1e-12)


def test_domain_too_small(tf1):
    with pytest.raises(DomainTooSmallError):
        psi_power_integral(tf1, 2.0, 39.0, 2.0)
    with pytest.raises(ValueError):
        psi_power_integral(tf1, 2.0, -1.0, 2.0)


def test_refinement_changes_little():
    dim = Dimension(3, 1.0)
    coarse = build_test_functions(dim, RadialGrid.from_spacing(1.0, 31.0, 1e-2))
    fine = build_test_functions(dim, RadialGrid.from_spacing(1.0, 31.0, 5e-3))
    a = weighted_psi_power_integral(coarse, 2.0, 20.0, 3.0)
    b = weighted_psi_power_integral(fine, 2.0, 20.0, 3.0)
    assert a == pytest.approx(b, rel=1e-3)


@given(st.floats(min_value=-4, max_value=4), st.floats(min_value=-3, max_value=3),
       st.floats(min_value=0, max_value=5))
@settings(max_examples=40, deadline=None)
def test_regressor_recovers_power_law(expo, logc, R):
    t = np.geomspace(1, 1000, 20)
    y = math.exp(logc) * (t + R) ** expo
    reg = DecayRateRegressor(R=R).fit(t, y)
    assert reg.exponent_ == pytest.approx(expo, abs=1e-8)
    np.testing.assert_allclose(reg.predict(t), y, rtol=1e-7)


def test_regressor_log_correction_and_sklearn_protocol():
    t = np.geomspace(10, 100, 10)
    y = 3.0 * (t + 2) ** -0.7 * np.log(t + 2) ** -0.5
    reg = DecayRateRegressor(R=2.0, log_correction=-0.5)
    assert clone(reg).get_params() == {"R": 2.0, "log_correction": -0.5}
    reg.fit(t, y)
    assert reg.exponent_ == pytest.approx(-0.7, abs=1e-10)
    assert reg.score(t, y) == pytest.approx(1.0)


def test_fit_decay_exact_power_law():
    ts = np.geomspace(10, 100, 12)
    fit = fit_decay(np.column_stack([ts, 5 * (ts + 1) ** -1.5]), R=1.0)
    assert fit.fitted_exponent == pytest.approx(-1.5, abs=1e-10)
    assert fit.max_ratio == pytest.approx(5.0, rel=1e-10)
    assert fit.ratio_nonincreasing()


def test_fit_decay_bounded_ratio_for_target():
    ts = np.geomspace(10, 100, 12)
    fit = fit_decay(np.column_stack([ts, (ts + 1) ** -2.0]), R=1.0, target_exponent=-1.0)
    assert fit.max_ratio == pytest.approx(11.0 ** -1)
    assert fit.ratio_nonincreasing()
    rising = fit_decay(np.column_stack([ts, (ts + 1) ** -0.5]), R=1.0, target_exponent=-1.0)
    assert not rising.ratio_nonincreasing()


@pytest.mark.parametrize("ts,msg", [
    (np.geomspace(10, 100, 5), "at least 8"),
    (np.geomspace(0.5, 100, 10), ">= 1"),
    (np.geomspace(10, 50, 10), "decade"),
])
def test_fit_decay_rejects_bad_samples(ts, msg):
    with pytest.raises(ValueError, match=msg):
        fit_decay(np.column_stack([ts, np.ones_like(ts)]), R=1.0)


def test_sweep_shapes(tf3):
    ts = np.array([1.0, 2.0, 3.0])
    plain, weighted = sweep(tf3, 2.0, 3.0, ts)
    assert plain.shape == weighted.shape == (3,)
    assert np.all(plain > 0) and np.all(weighted > plain)
