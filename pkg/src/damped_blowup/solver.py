"""Method-of-lines solver for ``u_tt - Lap u - Lap u_t = |u|^p`` on radial
exterior domains with zero Dirichlet data.

As a first-order system ``u_t = v``, ``v_t = Lap u + Lap v + |u|^p``. Both
Laplacians are treated by the trapezoidal rule and the source explicitly at
the midpoint predictor ``u + dt/2 v``. Eliminating ``u`` at the new level
leaves one tridiagonal system per step::

    (I - c L) v' = v + dt L u + c L v + dt |u + dt/2 v|^p,   c = dt/2 + dt^2/4
    u' = u + dt/2 (v + v')

Only an active window around the data is updated. The damping term smooths
the data instantly, so ``u`` is not compactly supported for ``t > 0``, but the
tail beyond ``t + R`` is Gaussian in the distance. The window edge sits
``1 + tail_margin * sqrt(t)`` past ``t + R``, where the tail is below double
precision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_banded

from .diagnostics import BlowupTimeRegressor, FunctionalTrace, compute_functionals
from .radial import RadialGrid, RadialProblem, laplacian_bands, radial_quadrature, sphere_area
from .testfunctions import TestFunctionSet, build_test_functions

DETECTION = "sup-norm"


@dataclass(frozen=True)
class SolverConfig:
    h: float = 2e-3
    # None means cfl_safety * h
    dt: float | None = None
    cfl_safety: float = 1.0
    output_interval: float = 0.05
    blowup_threshold: float = 1e6
    dt_min: float = 1e-9
    growth_limit: float = 1.05
    tail_margin: float = 12.0
    nonlinearity: bool = True
    fit_window: int = 8

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError("h must be positive")
        if not 0 < self.cfl_safety <= 1:
            raise ValueError("cfl_safety must lie in (0, 1]")
        if self.dt is not None and not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.dt_min > 0:
            raise ValueError("dt_min must be positive")
        if not self.base_dt >= self.dt_min:
            raise ValueError("dt must not be below dt_min")
        if not self.growth_limit > 1:
            raise ValueError("growth_limit must exceed 1")
        if not self.output_interval >= self.base_dt:
            raise ValueError("output_interval must be at least one step")
        if not self.blowup_threshold > 0:
            raise ValueError("blowup_threshold must be positive")

    @property
    def base_dt(self) -> float:
        return self.cfl_safety * self.h if self.dt is None else self.dt


@dataclass(frozen=True)
class SolutionState:
    t: float
    u: np.ndarray
    v: np.ndarray


@dataclass(frozen=True)
class SimulationReport:
    blew_up: bool
    outcome: str
    t_end: float
    t_blowup_est: float | None
    t_blowup_halfwidth: float | None
    sup_max: float
    steps: int
    rejected_steps: int
    support_tail_max: float
    support_ok: bool
    detection: str = DETECTION

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def margin(t: float, h: float, tail_margin: float) -> float:
    """Distance kept beyond ``t + R`` so the truncated tail is negligible."""
    return 2.0 * h + 1.0 + tail_margin * math.sqrt(max(t, 0.0))


def simulation_grid(problem: RadialProblem, cfg: SolverConfig, t_end: float) -> RadialGrid:
    rmax = problem.R + t_end + margin(t_end, cfg.h, cfg.tail_margin)
    return RadialGrid.from_spacing(problem.dim.r0, rmax, cfg.h)


def initial_state(problem: RadialProblem, grid: RadialGrid) -> SolutionState:
    u = problem.eps * problem.u0(grid.r)
    v = problem.eps * problem.u1(grid.r)
    u[0] = v[0] = 0.0
    return SolutionState(0.0, u, v)


@dataclass
class _Operator:
    """Banded pieces of the radial Laplacian, computed once per grid."""

    grid: RadialGrid
    n: int
    lower: np.ndarray = field(init=False)
    upper: np.ndarray = field(init=False)
    diag: float = field(init=False)

    def __post_init__(self):
        self.lower, self.upper, self.diag = laplacian_bands(self.n, self.grid)

    def apply(self, x, stop):
        out = np.zeros(stop)
        out[1:-1] = (self.lower[1:stop - 1] * x[:stop - 2] + self.diag * x[1:stop - 1]
                     + self.upper[1:stop - 1] * x[2:stop])
        return out

    def solve(self, c, rhs, stop):
        # rows 0 and stop-1 are identity rows (Dirichlet)
        ab = np.zeros((3, stop))
        ab[1, :] = 1.0
        ab[1, 1:-1] -= c * self.diag
        ab[0, 2:] = -c * self.upper[1:stop - 1]
        ab[2, :-2] = -c * self.lower[1:stop - 1]
        rhs = rhs.copy()
        rhs[0] = rhs[-1] = 0.0
        return solve_banded((1, 1), ab, rhs, check_finite=False)


def _advance(op: _Operator, state: SolutionState, dt: float, p: float, stop: int, nonlinear: bool):
    u, v = state.u, state.v
    c = 0.5 * dt + 0.25 * dt * dt
    us, vs = u[:stop], v[:stop]
    rhs = vs + dt * op.apply(us, stop) + c * op.apply(vs, stop)
    if nonlinear:
        rhs += dt * np.abs(us + 0.5 * dt * vs) ** p
    v_new = np.zeros_like(v)
    v_new[:stop] = op.solve(c, rhs, stop)
    u_new = np.zeros_like(u)
    u_new[:stop] = us + 0.5 * dt * (vs + v_new[:stop])
    u_new[0] = v_new[0] = 0.0
    return SolutionState(state.t + dt, u_new, v_new)


def _window_stop(grid: RadialGrid, R: float, t: float, cfg: SolverConfig) -> int:
    edge = R + t + margin(t, cfg.h, cfg.tail_margin)
    return min(grid.index_at(min(edge, grid.rmax)) + 1, grid.m)


def step(state: SolutionState, cfg: SolverConfig, problem: RadialProblem,
         grid: RadialGrid | None = None, dt: float | None = None) -> SolutionState:
    """One step of size ``dt`` (default ``cfg.base_dt``) on the active window."""
    if grid is None:
        grid = RadialGrid.from_spacing(problem.dim.r0, problem.dim.r0 + (state.u.size - 1) * cfg.h, cfg.h)
    dt = cfg.base_dt if dt is None else dt
    stop = _window_stop(grid, problem.R, state.t + dt, cfg)
    return _advance(_Operator(grid, problem.dim.n), state, dt, problem.p, stop, cfg.nonlinearity)


def discrete_energy(state: SolutionState, n: int, grid: RadialGrid) -> float:
    """``1/2 int v^2 + 1/2 int u_r^2`` with ``u_r`` taken on cell midpoints."""
    kinetic = 0.5 * radial_quadrature(grid, state.v**2, n)
    du = np.diff(state.u) / grid.h
    mid = grid.r[:-1] + 0.5 * grid.h
    weight = mid ** (n - 1) if n > 1 else np.ones_like(mid)
    return kinetic + 0.5 * sphere_area(n) * grid.h * float(np.sum(weight * du**2))


def run(problem: RadialProblem, cfg: SolverConfig, t_end: float,
        probes: TestFunctionSet | None = None, *, grid: RadialGrid | None = None,
        on_output=None) -> tuple[FunctionalTrace, SimulationReport]:
    """Integrate to ``t_end`` or blow-up, sampling functionals every ``output_interval``.

    Steps are rejected and halved when the sup norm grows by more than
    ``growth_limit`` in one step. Blow-up is declared once the sup norm passes
    ``blowup_threshold`` or when a step would need ``dt < dt_min``.
    ``on_output(state)`` is called at each output time (used by audits).
    """
    if not t_end > 0:
        raise ValueError("t_end must be positive")
    if grid is None:
        grid = probes.grid if probes is not None else simulation_grid(problem, cfg, t_end)
    need = problem.R + t_end + 2 * cfg.h
    if grid.rmax < need * (1 - 1e-12):
        raise ValueError(f"grid rmax {grid.rmax:g} is below R + t_end + 2h = {need:g}")
    if probes is None:
        probes = build_test_functions(problem.dim, grid)
    elif probes.grid is not grid and probes.grid != grid:
        raise ValueError("probes must live on the simulation grid")

    state = initial_state(problem, grid)
    sup0 = float(np.max(np.abs(state.u)))
    if cfg.blowup_threshold <= sup0:
        raise ValueError("blowup_threshold must exceed the initial sup norm")
    op = _Operator(grid, problem.dim.n)
    p, R = problem.p, problem.R
    rows = [compute_functionals(state, probes, p, R)]
    if on_output:
        on_output(state)

    dt_base = cfg.base_dt
    dt = dt_base
    k_out = 1
    steps = rejected = 0
    sup = sup0
    history_t, history_sup = [0.0], [sup0]
    outcome = "horizon-reached"
    n_out = int(math.floor(t_end / cfg.output_interval + 1e-9))
    while k_out <= n_out:
        target = k_out * cfg.output_interval
        dt_try = min(dt, target - state.t)
        landing = dt_try >= target - state.t - 1e-12
        stop = _window_stop(grid, R, state.t + dt_try, cfg)
        new = _advance(op, state, dt_try, p, stop, cfg.nonlinearity)
        new_sup = float(np.max(np.abs(new.u)))
        grew = new_sup / sup if sup > 0 else 1.0
        if not math.isfinite(new_sup) or grew > cfg.growth_limit:
            rejected += 1
            dt = 0.5 * dt_try
            if dt < cfg.dt_min:
                outcome = "blow-up (dt floor)"
                break
            continue
        if landing:
            new = SolutionState(target, new.u, new.v)
        state, sup = new, new_sup
        steps += 1
        history_t.append(state.t)
        history_sup.append(sup)
        if landing:
            rows.append(compute_functionals(state, probes, p, R))
            if on_output:
                on_output(state)
            k_out += 1
        if sup > cfg.blowup_threshold:
            outcome = "blow-up (threshold)"
            break
        if grew < math.sqrt(cfg.growth_limit) and dt < dt_base:
            dt = min(2.0 * dt, dt_base)

    trace = FunctionalTrace.from_rows(rows)
    blew_up = outcome != "horizon-reached"
    est = half = None
    if blew_up:
        try:
            # the dense step history resolves the final approach far better than the output rows
            reg = BlowupTimeRegressor(p=p, window=cfg.fit_window).fit(history_t, history_sup)
            est, half = reg.blowup_time_, reg.halfwidth_
        except ValueError:
            pass
    tail = float(np.max(trace.tail_ratio))
    report = SimulationReport(blew_up, outcome, float(state.t), est, half, max(history_sup),
                              steps, rejected, tail, tail <= 1e-10)
    return trace, report

