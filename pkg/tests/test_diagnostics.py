import math
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from sklearn.base import clone

from damped_blowup import diagnostics as D
from damped_blowup.ode import OdeBlowupSpec, integrate
from damped_blowup.radial import Dimension, RadialGrid, RadialProblem, radial_quadrature, strauss_exponent
from damped_blowup.solver import SolverConfig, run
from damped_blowup.testfunctions import build_test_functions


@pytest.fixture(scope="module")
def tf3():
    return build_test_functions(Dimension(3, 1.0), RadialGrid.from_spacing(1.0, 20.0, 5e-3))


def _trace(times, F0, nonlin=None, sup=None):
    n = len(times)
    z = np.zeros(n)
    return D.FunctionalTrace(times, F0, z, np.ones(n) if sup is None else sup, z,
                             z if nonlin is None else nonlin, z, z)


def test_functionals_of_zero(tf3):
    row = D.compute_functionals(SimpleNamespace(t=1.0, u=np.zeros(tf3.grid.m)), tf3, 2.0, 3.0)
    for key in ("F0", "F1", "sup_norm", "l2_norm", "nonlin_weighted", "tail_ratio"):
        assert row[key] == 0.0


def test_functionals_self_consistent(tf3):
    u = tf3.phi0.copy()
    row = D.compute_functionals(SimpleNamespace(t=0.0, u=u), tf3, 2.0, 3.0)
    direct = radial_quadrature(tf3.grid, tf3.phi0**2, 3)
    assert row["F0"] == pytest.approx(direct, rel=1e-12)
    assert row["nonlin_weighted"] == pytest.approx(radial_quadrature(tf3.grid, tf3.phi0**3, 3), rel=1e-12)


def test_functionals_reject_grid_mismatch(tf3):
    with pytest.raises(ValueError):
        D.compute_functionals(SimpleNamespace(t=0.0, u=np.zeros(5)), tf3, 2.0, 3.0)


def test_f1_at_time_zero(run7):
    problem, tf, trace, _ = run7
    i0, _ = D.data_integrals(problem, tf)
    assert trace.F1[0] == pytest.approx(problem.eps * i0, rel=1e-12)
    assert D.f1_lower_bound(problem, tf, 0.0) == pytest.approx(problem.eps * i0, rel=1e-14)


def test_f1_bound_limits(tf3):
    prob = RadialProblem.with_bump(3, 2.0, 0.7, 3.0)
    i0, i1 = D.data_integrals(prob, tf3)
    far = D.f1_lower_bound(prob, tf3, 200.0)
    assert far == pytest.approx(0.7 / 3 * i0 + 2 * 0.7 / 3 * i1, rel=1e-12)
    with pytest.raises(ValueError):
        D.f1_lower_bound(prob, tf3, -1.0)


@given(st.floats(min_value=0.0, max_value=10.0), st.floats(min_value=0.0, max_value=10.0),
       st.floats(min_value=0.01, max_value=5.0))
@settings(max_examples=50, deadline=None)
def test_f1_bound_monotone_when_velocity_dominates(i0, i1, eps):
    prob = SimpleNamespace(eps=eps)
    t = np.linspace(0, 10, 101)
    b = D.f1_lower_bound(prob, None, t, (i0, i1))
    # b = eps (i0/3 + 2 i1/3 + 2/3 (i0 - i1) e^{-3t/2}), so the sign of i1 - i0 decides
    slack = 1e-12 * (1 + abs(b[:-1]))
    if i1 >= i0:
        assert np.all(np.diff(b) >= -slack)
    else:
        assert np.all(np.diff(b) <= slack)
    assert np.all(b >= eps / 3 * i0 - 1e-12 * (1 + i0))


def test_f1_certificate_holds(run7):
    problem, tf, trace, _ = run7
    cert = D.f1_certificate(problem, tf, trace)
    assert cert.c0 > 0 and cert.passed
    assert cert.c0 == pytest.approx(cert.int_phi1_u0 / 3)


def test_identity_exact_on_quadratic():
    t = np.linspace(0, 1, 11)
    chk = D.check_f0_identity(_trace(t, t**2, nonlin=np.full(11, 2.0)))
    assert chk.relative == pytest.approx(0.0, abs=1e-12)
    zero = D.check_f0_identity(_trace(t, np.zeros(11)))
    assert zero.relative == 0.0


def test_identity_rejects_bad_cadence():
    with pytest.raises(ValueError, match="cadence"):
        D.check_f0_identity(_trace(np.array([0, 1, 2, 4, 5.0]), np.zeros(5)))
    with pytest.raises(ValueError):
        D.check_f0_identity(_trace(np.arange(4.0), np.zeros(4)))


def test_identity_on_reference_run(run7):
    trace = run7[2]
    assert D.check_f0_identity(trace.window(stop=0.9 * trace.times[-1])).relative < 0.02


def test_identity_converges_away_from_initial_layer():
    prob = RadialProblem.with_bump(3, 2.0, 1.0, 3.0, r0=1.0)
    res = []
    for h, dout in ((4e-3, 0.1), (2e-3, 0.05), (1e-3, 0.025)):
        trace, _ = run(prob, SolverConfig(h=h, output_interval=dout), t_end=2.0)
        res.append(D.check_f0_identity(trace.window(start=0.5)).relative)
    assert math.log2(res[0] / res[1]) >= 1.8
    assert math.log2(res[1] / res[2]) >= 1.8


def test_theoretical_constants():
    assert D.theoretical_k(3, 2.0) == pytest.approx(3 / (4 * math.pi))
    assert D.theoretical_k(3, 2.0) == pytest.approx(0.23873, abs=1e-5)
    assert D.theoretical_k(1, 3.0) == 4.0
    assert D.theoretical_k(2, 2.0, r0=1.0) == pytest.approx(1 / math.pi)
    with pytest.raises(ValueError):
        D.theoretical_k(2, 2.0, r0=0.5)


def test_growth_targets():
    assert D.growth_exponent(3, 2.0) == 2.0
    assert D.growth_exponent(1, 5.0) == 2.0
    assert D.growth_exponent(2, strauss_exponent(2)) == pytest.approx(1.2192, abs=1e-4)
    assert D.blowup_exponent_q(3, 2.0) == 3.0
    assert D.blowup_exponent_q(2, 3.0) == 4.0


def test_inequality_on_reference_run(run7):
    trace = run7[2]
    chk = D.check_differential_inequality(trace, 3, 2.0, 3.0)
    assert chk.violations == 0
    assert chk.k_fit >= chk.k_theory
    assert np.all(chk.ratios > 0.5 * chk.k_theory)


def test_inequality_rejects_nonpositive_f0():
    t = np.linspace(0, 1, 6)
    with pytest.raises(ValueError):
        D.check_differential_inequality(_trace(t, np.linspace(-1, 1, 6)), 3, 2.0, 3.0)


@given(st.floats(min_value=0.1, max_value=10.0), st.sampled_from([(1, 2.0), (3, 2.0), (3, 1.5)]))
@settings(max_examples=20, deadline=None)
def test_lower_bound_fit_exact_power(delta, case):
    n, p = case
    a = D.growth_exponent(n, p)
    t = np.linspace(0, 50, 101)
    fit = D.check_f0_lower_bound(_trace(t, delta * (t + 3) ** a), n, p, 3.0)
    assert fit.exponent_fit == pytest.approx(a, abs=1e-9)
    assert fit.delta_fit == pytest.approx(delta, rel=1e-9)
    assert fit.target == a


def test_critical_k0_windows_increase():
    p = strauss_exponent(2)
    t = np.linspace(0, 100, 201)
    F0 = np.log(t + 3) * (t + 3) ** (3 - p / 2)
    early, late = D.critical_k0_windows(_trace(t, F0), p, 3.0)
    assert late > early


def test_regressor_exact_model():
    t = np.linspace(0, 4.9, 50)
    y = (5 - t) ** -1.0
    reg = D.BlowupTimeRegressor(p=3.0).fit(t, y)
    assert reg.blowup_time_ == pytest.approx(5.0, abs=1e-9)
    np.testing.assert_allclose(reg.predict(t[-8:]), y[-8:], rtol=1e-9)
    assert clone(reg).get_params() == {"p": 3.0, "window": 8, "z": 1.96}


@pytest.mark.parametrize("seed", range(20))
def test_regressor_with_noise(seed):
    rng = np.random.default_rng(seed)
    t = np.linspace(0, 4.9, 50)
    y = (5 - t) ** -1.0 * (1 + 0.01 * rng.standard_normal(50))
    reg = D.BlowupTimeRegressor(p=3.0, window=8).fit(t, y)
    assert reg.blowup_time_ == pytest.approx(5.0, abs=0.05)
    assert reg.halfwidth_ > 0


def test_regressor_rejects_decay():
    t = np.linspace(0, 5, 20)
    with pytest.raises(ValueError, match="non-monotone"):
        D.extrapolate_blowup_time(_trace(t, np.zeros(20), sup=np.exp(-t)), 2.0)


def test_extrapolation_agrees_with_ode_on_ode_trace():
    spec = OdeBlowupSpec(p=3.0, a=1.0, q=0.0)
    rep = integrate(spec, 1.0, 1 / math.sqrt(2))
    t = np.linspace(0, 1.4, 15)
    F = 1 / (1 - t / math.sqrt(2))
    est = D.extrapolate_blowup_time(_trace(t, F, sup=F), 3.0)
    assert est.t_blowup == pytest.approx(rep.t_blowup_est, abs=1e-6)


def test_trace_invariants(tmp_path):
    with pytest.raises(ValueError):
        _trace(np.array([0.0, 1.0]), np.zeros(3))
    with pytest.raises(ValueError):
        _trace(np.array([0.0, 0.0]), np.zeros(2))
    path = tmp_path / "t.csv"
    path.write_text("# config: {}\n" + ",".join(D.COLUMNS) + "\n" + ",".join(["1.5"] * 8) + "\n")
    tr = D.FunctionalTrace.read_csv(path)
    assert len(tr) == 1 and tr.F0[0] == 1.5


def test_ode_minorant_from_reference(run7):
    spec = D.ode_minorant(run7[2], 3, 2.0, 3.0)
    assert (spec.a, spec.q) == (2.0, 3.0)
    assert spec.k > 0 and spec.delta > 0
