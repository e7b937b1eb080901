"""Blow-up of the comparison ODE ``F'' = k w(t) F^p``.

``w(t) = (t+R)^-q`` (plain) or ``[ln(t+R)]^(-q/2) (t+R)^-q`` (log variants).
These are the equality cases of the differential inequalities behind the
Sideris-type blow-up lemmas: any solution of the inequality with the same
data dominates the equality solution.

Integration runs in two phases. Phase one steps in ``t`` until ``F`` has
doubled. Phase two switches the independent variable to ``s = ln F`` with
state ``(t, ln F')``. ``F`` is increasing there (``F'' > 0`` and ``F' >= 0``
initially), and near blow-up ``t`` approaches ``T`` while ``s`` runs off to
infinity. Stepping in ``s`` therefore resolves the singularity without
needing ``T - t`` above the floating-point resolution of ``t``.
"""

from __future__ import annotations

import dataclasses
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from enum import Enum
from itertools import product

import numpy as np
from scipy.integrate import DOP853
from scipy.optimize import brentq

RTOL = {"default": 1e-9, "tight": 1e-12}
BLOWUP_THRESHOLD = 1e12
CONVERGENCE = 1e-6
DEFAULT_HORIZON = 1e6
_S_CAP = math.log(1e300)


class Variant(str, Enum):
    PLAIN = "plain"
    LOG_SUBCRITICAL = "log_subcritical"
    LOG_CRITICAL = "log_critical"


class Regime(str, Enum):
    SUPERCRITICAL = "supercritical"
    CRITICAL = "critical"
    SUBCRITICAL = "subcritical"


class Outcome(str, Enum):
    BLOWUP = "blow-up"
    HORIZON = "horizon-reached"
    INCONCLUSIVE = "numerical-inconclusive"


def _gap(p, a, q):
    return (p - 1.0) * a - (q - 2.0), max(abs((p - 1.0) * a), abs(q - 2.0), 1.0)


def _is_critical(p, a, q, rtol=1e-12):
    gap, scale = _gap(p, a, q)
    return abs(gap) <= rtol * scale


@dataclass(frozen=True)
class OdeBlowupSpec:
    """Parameters of ``F'' >= k w(t) F^p`` together with ``F >= delta (t+R)^a``.

    ``log_critical`` replaces ``(k, delta)`` by ``(K1, K0)`` and starts at ``T0``.
    """

    p: float
    a: float
    q: float
    k: float = 1.0
    delta: float = 1.0
    R: float = 1.0
    variant: Variant = Variant.PLAIN
    K0: float | None = None
    K1: float | None = None
    T0: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        if not self.p > 1:
            raise ValueError(f"p must exceed 1, got {self.p}")
        if not self.a >= 1:
            raise ValueError(f"a must be >= 1, got {self.a}")
        for name in ("k", "delta", "R"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.variant is Variant.LOG_CRITICAL:
            for name in ("K0", "K1", "T0"):
                v = getattr(self, name)
                if v is None or not v > 0:
                    raise ValueError(f"log_critical needs a positive {name}, got {v}")
            if not _is_critical(self.p, self.a, self.q):
                raise ValueError("log_critical requires (p-1)a = q-2")
        if self.variant is not Variant.PLAIN and not self.start + self.R > 1:
            raise ValueError("log weights need t + R > 1 from the start time on")

    @property
    def coefficient(self) -> float:
        return self.K1 if self.variant is Variant.LOG_CRITICAL else self.k

    @property
    def start(self) -> float:
        return self.T0 if self.variant is Variant.LOG_CRITICAL else 0.0

    @property
    def envelope_coefficient(self) -> float:
        return self.K0 if self.variant is Variant.LOG_CRITICAL else self.delta

    def weight(self, t: float) -> float:
        x = t + self.R
        w = x ** (-self.q)
        if self.variant is not Variant.PLAIN:
            w *= math.log(x) ** (-self.q / 2.0)
        return w

    def envelope(self, t: float) -> tuple[float, float]:
        """Lower-bound envelope ``c (t+R)^a`` and its derivative at ``t``."""
        c = self.envelope_coefficient
        x = t + self.R
        return c * x**self.a, self.a * c * x ** (self.a - 1.0)


def sideris_condition(spec: OdeBlowupSpec) -> Regime:
    """Sign of ``(p-1) a - (q-2)``, zero detected to relative 1e-12."""
    gap, scale = _gap(spec.p, spec.a, spec.q)
    if abs(gap) <= 1e-12 * scale:
        return Regime.CRITICAL
    return Regime.SUPERCRITICAL if gap > 0 else Regime.SUBCRITICAL


@dataclass(frozen=True)
class BlowupReport:
    blew_up: bool
    outcome: Outcome
    t_end: float
    t_blowup_est: float | None
    f_max: float
    steps: int

    def __post_init__(self):
        object.__setattr__(self, "t_end", float(self.t_end))
        object.__setattr__(self, "f_max", float(self.f_max))
        if self.t_blowup_est is not None:
            object.__setattr__(self, "t_blowup_est", float(self.t_blowup_est))

    def as_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["outcome"] = self.outcome.value
        return d


def integrate(spec: OdeBlowupSpec, f0: float, f0prime: float, t_max: float = DEFAULT_HORIZON, *,
              profile: str = "default", rtol: float | None = None,
              threshold: float = BLOWUP_THRESHOLD, convergence: float = CONVERGENCE) -> BlowupReport:
    """Integrate ``F'' = coefficient * w(t) * F^p`` from ``spec.start``.

    Blow-up is declared once ``F > threshold`` and the local blow-up time
    estimate ``t + 2F / ((p-1) F')`` agrees to ``convergence`` (relative) over
    three consecutive steps. That estimate is exact for the self-similar
    profile ``F = c (T-t)^(-2/(p-1))``.
    """
    t0 = spec.start
    env, _ = spec.envelope(t0)
    if f0 < env * (1 - 1e-12):
        raise ValueError(f"F(start)={f0:g} is below the lower-bound envelope {env:g}")
    if f0prime < 0:
        raise ValueError("F'(start) must be nonnegative")
    if not t_max > t0:
        raise ValueError("horizon must exceed the start time")
    rtol = RTOL[profile] if rtol is None else rtol
    p, c = spec.p, spec.coefficient
    steps = 0

    def rhs_t(t, y):
        return [y[1], c * spec.weight(t) * abs(y[0]) ** p]

    scale = max(abs(f0), abs(f0prime), 1e-300)
    solver = DOP853(rhs_t, t0, [f0, f0prime], t_max, rtol=rtol, atol=rtol * 1e-3 * scale)
    while solver.status == "running" and not (solver.y[0] >= 2.0 * f0 and solver.y[1] > 0):
        solver.step()
        steps += 1
    if solver.status == "failed":
        return BlowupReport(False, Outcome.INCONCLUSIVE, solver.t, None, solver.y[0], steps)
    if solver.status == "finished" and not solver.y[0] >= 2.0 * f0:
        return BlowupReport(False, Outcome.HORIZON, solver.t, None, solver.y[0], steps)

    t1, (F1, dF1) = solver.t, solver.y
    if t1 >= t_max:
        return BlowupReport(False, Outcome.HORIZON, t1, None, F1, steps)

    def rhs_s(s, y):
        t, ell = y
        return [math.exp(s - ell), c * spec.weight(t) * math.exp((p + 1.0) * s - 2.0 * ell)]

    s_start = math.log(F1)
    y_start = [t1, math.log(dF1)]
    solver = DOP853(rhs_s, s_start, y_start, _S_CAP, rtol=rtol,
                    atol=rtol * 1e-3 * np.maximum(np.abs(y_start), 1.0))
    estimates = []
    log_threshold = math.log(threshold)
    while solver.status == "running":
        s_prev = solver.t
        solver.step()
        steps += 1
        s = solver.t
        t, ell = solver.y
        if t >= t_max:
            dense = solver.dense_output()
            s_hit = brentq(lambda x: dense(x)[0] - t_max, s_prev, s, xtol=1e-12)
            return BlowupReport(False, Outcome.HORIZON, t_max, None, math.exp(s_hit), steps)
        if s > log_threshold:
            estimates.append(t + 2.0 / (p - 1.0) * math.exp(s - ell))
            if len(estimates) >= 3:
                last = estimates[-3:]
                if max(last) - min(last) <= convergence * abs(last[-1]):
                    return BlowupReport(True, Outcome.BLOWUP, t, last[-1], math.exp(s), steps)
    return BlowupReport(False, Outcome.INCONCLUSIVE, solver.y[0], None, math.exp(solver.t), steps)


def integrate_from_envelope(spec: OdeBlowupSpec, t_max: float = DEFAULT_HORIZON, **kw) -> BlowupReport:
    """Start on the envelope: ``F = c (t0+R)^a``, ``F' = a c (t0+R)^(a-1)``."""
    f, df = spec.envelope(spec.start)
    return integrate(spec, f, df, t_max, **kw)


@dataclass(frozen=True)
class ThresholdScan:
    k0s: tuple
    reports: tuple

    @property
    def threshold(self) -> float | None:
        """Smallest ``K0`` on the grid whose solution blew up."""
        for k0, rep in zip(self.k0s, self.reports):
            if rep.blew_up:
                return k0
        return None

    @property
    def monotone(self) -> bool:
        """True when every ``K0`` above the threshold also blew up."""
        flags = [rep.blew_up for rep in self.reports]
        if True not in flags:
            return True
        first = flags.index(True)
        return all(flags[first:])


def _scan_one(args):
    spec, t_max, kw = args
    return integrate_from_envelope(spec, t_max, **kw)


def _map(fn, items, jobs):
    if jobs > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def critical_threshold_scan(spec: OdeBlowupSpec, k0_grid, t_max: float = DEFAULT_HORIZON,
                            jobs: int = 1, **kw) -> ThresholdScan:
    """Integrate the critical logarithmic case for each ``K0`` in an increasing grid."""
    if spec.variant is not Variant.LOG_CRITICAL:
        raise ValueError("threshold scans need the log_critical variant")
    k0s = [float(k) for k in k0_grid]
    if any(b <= a for a, b in zip(k0s, k0s[1:])):
        raise ValueError("K0 values must be increasing")
    items = [(dataclasses.replace(spec, K0=k0), t_max, kw) for k0 in k0s]
    return ThresholdScan(tuple(k0s), tuple(_map(_scan_one, items, jobs)))


@dataclass(frozen=True)
class GridCell:
    a: float
    q: float
    p: float
    regime: Regime
    report: BlowupReport


@dataclass(frozen=True)
class GridScan:
    cells: tuple

    @property
    def supercritical_failures(self) -> list:
        return [c for c in self.cells if c.regime is Regime.SUPERCRITICAL and not c.report.blew_up]

    @property
    def inconclusive(self) -> list:
        return [c for c in self.cells if c.report.outcome is Outcome.INCONCLUSIVE]

    def rows(self):
        for c in self.cells:
            yield {
                "a": c.a, "q": c.q, "p": c.p,
                "classification": c.regime.value,
                "blew_up": c.report.blew_up,
                "outcome": c.report.outcome.value,
                "t_blowup_est": c.report.t_blowup_est,
                "steps": c.report.steps,
            }


def classify_grid(a_range, q_range, p_range, k: float = 1.0, delta: float = 1.0, R: float = 1.0,
                  horizon: float = DEFAULT_HORIZON, variant: Variant = Variant.PLAIN,
                  jobs: int = 1, **kw) -> GridScan:
    """Run every ``(a, q, p)`` triple from the envelope data; cells come back in grid order."""
    specs = [OdeBlowupSpec(p=p, a=a, q=q, k=k, delta=delta, R=R, variant=variant)
             for a, q, p in product(a_range, q_range, p_range)]
    reports = _map(_scan_one, [(s, horizon, kw) for s in specs], jobs)
    return GridScan(tuple(GridCell(s.a, s.q, s.p, sideris_condition(s), r) for s, r in zip(specs, reports)))


def threshold_drift(spec: OdeBlowupSpec, k0_grid, R_values, T0_values, t_max: float = DEFAULT_HORIZON,
                    jobs: int = 1, **kw) -> dict:
    """Empirical ``K0`` threshold for every ``(R, T0)`` pair.

    The critical-case lemma claims a threshold independent of ``R`` and
    ``T0``. A finite grid can only report how much the measured threshold
    moves, not prove independence.
    """
    out = {}
    for R, T0 in product(R_values, T0_values):
        scan = critical_threshold_scan(dataclasses.replace(spec, R=R, T0=T0), k0_grid, t_max, jobs=jobs, **kw)
        out[(R, T0)] = scan.threshold
    return out
