import math

import numpy as np
import pytest

from damped_blowup.radial import Dimension, RadialGrid, RadialProblem
from damped_blowup.solver import (
    SolverConfig, discrete_energy, initial_state, run, simulation_grid, step,
)


def _bump3(eps=1.0, p=2.0):
    return RadialProblem.with_bump(3, p, eps, 3.0, r0=1.0)


def test_config_validation():
    assert SolverConfig(h=1e-2).base_dt == 1e-2
    assert SolverConfig(h=1e-2, cfl_safety=0.5).base_dt == 5e-3
    for kw in (dict(h=0), dict(dt=-1), dict(dt_min=0), dict(cfl_safety=1.5), dict(growth_limit=1.0),
               dict(dt=1e-12, dt_min=1e-9), dict(output_interval=1e-4)):
        with pytest.raises(ValueError):
            SolverConfig(**kw)


def test_zero_data_is_a_fixed_point():
    trace, rep = run(_bump3(eps=0.0), SolverConfig(h=1e-2), t_end=2.0)
    assert not rep.blew_up and rep.outcome == "horizon-reached"
    assert np.all(trace.sup_norm == 0) and np.all(trace.F0 == 0) and np.all(trace.F1 == 0)


def test_step_keeps_boundary_zero_and_outer_zero():
    prob = _bump3()
    cfg = SolverConfig(h=1e-2)
    grid = simulation_grid(prob, cfg, 5.0)
    s = initial_state(prob, grid)
    for _ in range(20):
        s = step(s, cfg, prob, grid)
    assert s.u[0] == 0.0 and s.v[0] == 0.0
    assert s.u[-1] == 0.0 and s.t == pytest.approx(0.2)
    assert np.all(np.isfinite(s.u))


def test_output_cadence_is_uniform():
    trace, _ = run(_bump3(eps=0.1), SolverConfig(h=1e-2, output_interval=0.1), t_end=1.0)
    np.testing.assert_allclose(np.diff(trace.times), 0.1, rtol=1e-12)
    assert trace.times[-1] == pytest.approx(1.0)


def test_linear_energy_is_nonincreasing():
    def mode(r):
        return np.where(r < 8, np.sin(3 * np.pi * r / 8) ** 2 * (1 - (r / 8) ** 2) ** 4, 0.0)

    prob = RadialProblem(Dimension(1), 2.0, 1.0, mode, mode, 8.0)
    cfg = SolverConfig(h=1e-2, nonlinearity=False, output_interval=0.1)
    grid = simulation_grid(prob, cfg, 10.0)
    energy = []
    run(prob, cfg, 10.0, grid=grid, on_output=lambda s: energy.append(discrete_energy(s, 1, grid)))
    energy = np.array(energy)
    assert len(energy) == 101
    assert np.all(np.diff(energy) <= 1e-9 * energy[:-1])
    assert energy[-1] < 0.1 * energy[0]


@pytest.mark.parametrize("p", [2.0, 3.0])
def test_small_amplitude_matches_linearisation(p):
    # the nonlinear correction over t in [0, 1] scales like eps^p
    gaps = []
    for eps in (2e-2, 1e-2):
        prob = _bump3(eps=eps, p=p)
        finals = []
        for nonlinear in (True, False):
            cfg = SolverConfig(h=4e-3, nonlinearity=nonlinear)
            grid = simulation_grid(prob, cfg, 1.0)
            s = initial_state(prob, grid)
            for _ in range(250):
                s = step(s, cfg, prob, grid)
            finals.append(s.u)
        gaps.append(np.max(np.abs(finals[0] - finals[1])))
    assert math.log2(gaps[0] / gaps[1]) == pytest.approx(p, abs=0.1)


def test_f0_grid_convergence_is_second_order():
    prob = _bump3()
    values = []
    for h, dout in ((4e-3, 0.1), (2e-3, 0.05), (1e-3, 0.025)):
        trace, _ = run(prob, SolverConfig(h=h, output_interval=dout), t_end=1.0)
        values.append(trace.F0[-1])
    order = math.log2((values[0] - values[1]) / (values[1] - values[2]))
    assert order >= 1.8


def test_window_truncation_is_invisible():
    prob = _bump3()
    a, _ = run(prob, SolverConfig(h=4e-3, tail_margin=12.0), t_end=3.0)
    b, _ = run(prob, SolverConfig(h=4e-3, tail_margin=20.0), t_end=3.0)
    np.testing.assert_allclose(a.F0, b.F0, rtol=1e-12)


def test_run_preconditions():
    prob = _bump3()
    cfg = SolverConfig(h=1e-2)
    with pytest.raises(ValueError, match="rmax"):
        run(prob, cfg, 5.0, grid=RadialGrid.from_spacing(1.0, 6.0, 1e-2))
    with pytest.raises(ValueError, match="threshold"):
        run(prob, SolverConfig(h=1e-2, blowup_threshold=0.5), 1.0)
    with pytest.raises(ValueError):
        run(prob, cfg, 0.0)


def test_dt_floor_counts_as_blowup():
    # a growth limit too tight to ever be met forces halving down to dt_min
    prob = _bump3(eps=2.0)
    trace, rep = run(prob, SolverConfig(h=1e-2, growth_limit=1.0001, dt_min=1e-3), t_end=10.0)
    assert rep.blew_up and rep.outcome == "blow-up (dt floor)"


def test_reference_run_blows_up(run7):
    _, _, trace, rep = run7
    assert rep.blew_up and rep.outcome == "blow-up (threshold)"
    assert rep.sup_max > 1e6
    assert 8.0 < rep.t_blowup_est < 10.0
    assert rep.t_blowup_est >= trace.times[-1]
    assert rep.detection == "sup-norm"
