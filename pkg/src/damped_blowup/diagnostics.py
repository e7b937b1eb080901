"""Test-function functionals of a simulated solution and the checks the
blow-up argument makes on them.

``F0(t) = int u phi0 dx`` and ``F1(t) = int u psi1(., t) dx``. The argument
uses four facts about them:

* ``F1`` stays above an explicit positive lower bound built from the data;
* ``F0'' = int |u|^p phi0 dx`` (``phi0`` is harmonic and vanishes on the
  boundary);
* Hoelder's inequality turns that identity into
  ``F0'' >= k weight(t) F0^p``;
* ``F0`` eventually dominates ``delta (t+R)^a``.

Each check below measures one of these on a ``FunctionalTrace``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, fields
from typing import NamedTuple

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_increasing, check_series, check_uniform
from .ode import OdeBlowupSpec, Variant
from .radial import RadialProblem, ball_volume, radial_quadrature
from .testfunctions import TestFunctionSet, psi1_at

COLUMNS = ("t", "F0", "F1", "sup_norm", "l2_norm", "nonlin_weighted", "tail_ratio", "psi1_mass")


@dataclass(frozen=True)
class FunctionalTrace:
    times: np.ndarray
    F0: np.ndarray
    F1: np.ndarray
    sup_norm: np.ndarray
    l2_norm: np.ndarray
    nonlin_weighted: np.ndarray
    # max |u| beyond t + R + 2h relative to sup |u|
    tail_ratio: np.ndarray
    # int_{|x| <= t+R} psi1 dx, the scale of the F1 quadrature error
    psi1_mass: np.ndarray

    def __post_init__(self):
        arrays = [np.asarray(getattr(self, f.name), dtype=float) for f in fields(self)]
        n = arrays[0].size
        if any(a.size != n for a in arrays):
            raise ValueError("all trace series must share one length")
        if n > 1:
            check_increasing(arrays[0], "trace times")
        for f, a in zip(fields(self), arrays):
            object.__setattr__(self, f.name, a)

    def __len__(self):
        return self.times.size

    @classmethod
    def from_rows(cls, rows) -> "FunctionalTrace":
        cols = {c: [] for c in COLUMNS}
        for row in rows:
            for c in COLUMNS:
                cols[c].append(row[c])
        return cls(cols.pop("t"), **{k: np.asarray(v, dtype=float) for k, v in cols.items()})

    def rows(self):
        for i in range(len(self)):
            yield {
                "t": self.times[i], "F0": self.F0[i], "F1": self.F1[i],
                "sup_norm": self.sup_norm[i], "l2_norm": self.l2_norm[i],
                "nonlin_weighted": self.nonlin_weighted[i],
                "tail_ratio": self.tail_ratio[i], "psi1_mass": self.psi1_mass[i],
            }

    def window(self, start: float | None = None, stop: float | None = None) -> "FunctionalTrace":
        mask = np.ones(len(self), dtype=bool)
        if start is not None:
            mask &= self.times >= start - 1e-12
        if stop is not None:
            mask &= self.times <= stop + 1e-12
        return FunctionalTrace(*(getattr(self, f.name)[mask] for f in fields(self)))

    @classmethod
    def read_csv(cls, path) -> "FunctionalTrace":
        with open(path, newline="") as fh:
            lines = [ln for ln in fh if not ln.startswith("#")]
        reader = csv.DictReader(lines)
        missing = set(COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"trace file lacks columns {sorted(missing)}")
        return cls.from_rows({k: float(v) for k, v in row.items()} for row in reader)


def _nonzero_product(u, w):
    out = np.zeros_like(u)
    nz = u != 0
    out[nz] = u[nz] * w[nz]
    return out


def compute_functionals(state, tf: TestFunctionSet, p: float, R: float) -> dict:
    """One trace row for ``state`` (anything with ``t``, ``u`` on ``tf.grid``).

    Integrals run over the whole grid. The strongly damped equation smooths
    its data instantly, so ``u`` is not exactly zero past ``t + R``; cutting
    the integrals there would break the identity for ``F0''``.
    """
    grid, n = tf.grid, tf.n
    u = np.asarray(state.u, dtype=float)
    if u.shape != (grid.m,):
        raise ValueError("state and test functions must share the grid")
    t = float(state.t)
    psi = psi1_at(tf, t)
    sup = float(np.max(np.abs(u)))
    edge = t + R + 2 * grid.h
    beyond = np.abs(u[grid.r >= edge - 1e-12 * grid.h])
    tail = float(beyond.max() / sup) if sup > 0 and beyond.size else 0.0
    inside = np.where(grid.r <= t + R, psi, 0.0)
    return {
        "t": t,
        "F0": radial_quadrature(grid, u * tf.phi0, n),
        "F1": radial_quadrature(grid, _nonzero_product(u, psi), n),
        "sup_norm": sup,
        "l2_norm": math.sqrt(radial_quadrature(grid, u * u, n)),
        "nonlin_weighted": radial_quadrature(grid, np.abs(u) ** p * tf.phi0, n),
        "tail_ratio": tail,
        "psi1_mass": radial_quadrature(grid, inside, n),
    }


# ---------------------------------------------------------------- lower bound on F1

@dataclass(frozen=True)
class F1Certificate:
    c0: float
    int_phi1_u0: float
    int_phi1_u1: float
    margin: float
    margins: np.ndarray
    tolerances: np.ndarray

    @property
    def passed(self) -> bool:
        return bool(np.all(self.margins >= -self.tolerances))


def data_integrals(problem: RadialProblem, tf: TestFunctionSet) -> tuple[float, float]:
    r = tf.grid.r
    u0 = problem.u0(r)
    u1 = problem.u1(r)
    return (radial_quadrature(tf.grid, tf.phi1 * u0, tf.n),
            radial_quadrature(tf.grid, tf.phi1 * u1, tf.n))


def f1_lower_bound(problem: RadialProblem, tf: TestFunctionSet, t, integrals=None):
    """``eps (1/3 (1-e) + e) I0 + 2 eps/3 (1-e) I1`` with ``e = exp(-3t/2)``.

    ``I0``, ``I1`` are ``int phi1 u0`` and ``int phi1 u1``. The bound is valid
    for every ``t >= 0``.
    """
    i0, i1 = data_integrals(problem, tf) if integrals is None else integrals
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t must be nonnegative")
    e = np.exp(-1.5 * t)
    eps = problem.eps
    out = (eps / 3.0 * (1.0 - e) + eps * e) * i0 + 2.0 * eps / 3.0 * (1.0 - e) * i1
    return float(out) if out.ndim == 0 else out


def f1_certificate(problem: RadialProblem, tf: TestFunctionSet, trace: FunctionalTrace,
                   rel_tol: float = 1e-6) -> F1Certificate:
    """Compare ``F1`` to its lower bound at every trace time.

    ``c0 = I0 / 3`` works for all ``t``: the ``I0`` coefficient never drops
    below ``eps/3`` and the ``I1`` coefficient is nonnegative. The allowed
    quadrature slack at each row is ``rel_tol * sup|u| * int_{|x|<=t+R} psi1``.
    """
    i0, i1 = data_integrals(problem, tf)
    bound = f1_lower_bound(problem, tf, trace.times, (i0, i1))
    margins = trace.F1 - bound
    tol = rel_tol * trace.sup_norm * trace.psi1_mass
    return F1Certificate(i0 / 3.0, i0, i1, float(margins.min()), margins, tol)


# ------------------------------------------------------------ second-derivative identity

class IdentityCheck(NamedTuple):
    times: np.ndarray
    residuals: np.ndarray
    relative: float


def check_f0_identity(trace: FunctionalTrace) -> IdentityCheck:
    """Central second difference of ``F0`` minus ``int |u|^p phi0``.

    ``relative`` is the largest absolute residual over the largest
    ``nonlin_weighted`` value in the window.
    """
    if len(trace) < 5:
        raise ValueError("need at least 5 trace rows")
    dt = check_uniform(trace.times)
    d2 = (trace.F0[2:] - 2.0 * trace.F0[1:-1] + trace.F0[:-2]) / (dt * dt)
    res = d2 - trace.nonlin_weighted[1:-1]
    scale = float(np.max(np.abs(trace.nonlin_weighted)))
    rel = float(np.max(np.abs(res)) / scale) if scale > 0 else float(np.max(np.abs(res)))
    return IdentityCheck(trace.times[1:-1], res, rel)


# ------------------------------------------------------------- differential inequality

def inequality_weight(n: int, p: float, R: float, t):
    """Time weight multiplying ``k F0^p`` in the dimension-specific inequality."""
    x = np.asarray(t, dtype=float) + R
    if n >= 3:
        return x ** (-n * (p - 1.0))
    if n == 1:
        return x ** (-2.0 * (p - 1.0))
    if np.any(x <= 1):
        raise ValueError("the two-dimensional weight needs t + R > 1")
    return np.log(x) ** (-(p - 1.0)) * x ** (-2.0 * (p - 1.0))


def theoretical_k(n: int, p: float, r0: float | None = None) -> float:
    """Explicit constant from bounding ``int_{B(t+R)} phi0``.

    n >= 3: ``phi0 < 1`` gives ``Vol(B^n)^-(p-1)``.
    n == 1: ``phi0 = x`` gives ``((t+R)^2/2)^-(p-1)``, so ``2^(p-1)``.
    n == 2: ``ln(r/r0) <= ln r`` for ``r0 >= 1`` gives ``pi^-(p-1)``.
    """
    if n >= 3:
        return ball_volume(n) ** (-(p - 1.0))
    if n == 1:
        return 2.0 ** (p - 1.0)
    if r0 is not None and r0 < 1:
        raise ValueError("the two-dimensional constant assumes r0 >= 1")
    return math.pi ** (-(p - 1.0))


class InequalityCheck(NamedTuple):
    k_fit: float
    k_theory: float
    violations: int
    ratios: np.ndarray


def check_differential_inequality(trace: FunctionalTrace, n: int, p: float, R: float,
                                  r0: float | None = None, rel_tol: float = 1e-6) -> InequalityCheck:
    """Measured ``int |u|^p phi0 / (weight(t) F0^p)``; its minimum is ``k_fit``.

    A violation is a row where the theoretical constant exceeds the measured
    ratio by more than ``rel_tol``.
    """
    if np.any(trace.F0 <= 0):
        raise ValueError("the inequality is only checked where F0 > 0")
    ratios = trace.nonlin_weighted / (inequality_weight(n, p, R, trace.times) * trace.F0**p)
    k = theoretical_k(n, p, r0)
    violations = int(np.sum(k > ratios * (1.0 + rel_tol)))
    return InequalityCheck(float(ratios.min()), k, violations, ratios)


# -------------------------------------------------------------- growth of F0

def growth_exponent(n: int, p: float) -> float:
    """Power ``a`` in the eventual lower bound ``F0 >= delta (t+R)^a``."""
    if n == 1:
        return 2.0
    if n == 2:
        return 3.0 - p / 2.0
    return n + 1.0 - (n - 1.0) * p / 2.0


def blowup_exponent_q(n: int, p: float) -> float:
    """Power ``q`` of the time weight handed to the ODE lemma."""
    return n * (p - 1.0) if n >= 3 else 2.0 * (p - 1.0)


class LowerBoundFit(NamedTuple):
    delta_fit: float
    exponent_fit: float
    target: float


def check_f0_lower_bound(trace: FunctionalTrace, n: int, p: float, R: float,
                         start: float | None = None) -> LowerBoundFit:
    """Log-log slope of ``F0`` against ``t + R`` and ``min F0 / (t+R)^a``.

    The window starts at ``start`` (default: half the last trace time), so that
    the bound is only asked to hold for large ``t``.
    """
    if start is None:
        start = 0.5 * trace.times[-1]
    w = trace.window(start=start)
    if len(w) < 2:
        raise ValueError("window holds fewer than two rows")
    if np.any(w.F0 <= 0):
        raise ValueError("the lower bound is only fitted where F0 > 0")
    a = growth_exponent(n, p)
    x = w.times + R
    slope, _ = np.polyfit(np.log(x), np.log(w.F0), 1)
    return LowerBoundFit(float(np.min(w.F0 / x**a)), float(slope), a)


def critical_k0_windows(trace: FunctionalTrace, p: float, R: float) -> tuple[float, float]:
    """``min F0/(t+R)^(3-p/2)`` over ``[T/2, T]`` and ``[3T/4, T]``.

    In the critical two-dimensional case the coefficient must grow, so the
    second value should exceed the first.
    """
    T = trace.times[-1]
    a = 3.0 - p / 2.0
    out = []
    for frac in (0.5, 0.75):
        w = trace.window(start=frac * T)
        out.append(float(np.min(w.F0 / (w.times + R) ** a)))
    return out[0], out[1]


def ode_minorant(trace: FunctionalTrace, n: int, p: float, R: float, r0: float | None = None,
                 start: float | None = None) -> OdeBlowupSpec:
    """ODE blow-up spec carrying the measured ``k_fit`` and ``delta_fit``.

    ``delta_fit`` comes from ``check_f0_lower_bound`` over the same late
    window, so the ODE starts from the envelope the growth bound provides.
    """
    a = growth_exponent(n, p)
    q = blowup_exponent_q(n, p)
    k_fit = check_differential_inequality(trace, n, p, R, r0).k_fit
    delta = check_f0_lower_bound(trace, n, p, R, start=start).delta_fit
    variant = Variant.LOG_SUBCRITICAL if n == 2 else Variant.PLAIN
    return OdeBlowupSpec(p=p, a=a, q=q, k=k_fit, delta=delta, R=R, variant=variant)


# ------------------------------------------------------------ blow-up time

class BlowupTimeRegressor(RegressorMixin, BaseEstimator):
    """Blow-up time from the tail of a growing series.

    For ``y ~ c (T - t)^(-2/(p-1))`` the transform ``y^(-(p-1)/2)`` is linear
    in ``t`` and vanishes at ``T``. ``fit`` regresses it over the last
    ``window`` samples. The confidence half-width comes from the fit
    covariance via the delta method.
    """

    def __init__(self, p: float = 2.0, window: int = 8, z: float = 1.96):
        self.p = p
        self.window = window
        self.z = z

    def fit(self, X, y):
        t, y = check_series(X, y, min_length=self.window)
        t, y = t[-self.window:], y[-self.window:]
        check_increasing(t, "times")
        if np.any(np.diff(y) <= 0) or np.any(y <= 0):
            raise ValueError("non-monotone tail: the series is not growing over the fit window")
        g = y ** (-(self.p - 1.0) / 2.0)
        tc = t - t[-1]
        coef, cov = np.polyfit(tc, g, 1, cov="unscaled")
        slope, intercept = coef
        if not slope < 0:
            raise ValueError("non-monotone tail: transformed series is not decreasing")
        resid = g - (slope * tc + intercept)
        dof = max(len(g) - 2, 1)
        sigma2 = float(resid @ resid) / dof
        root = -intercept / slope
        jac = np.array([intercept / slope**2, -1.0 / slope])
        var = sigma2 * float(jac @ cov @ jac)
        self.slope_ = float(slope)
        self.intercept_ = float(intercept)
        self.t_ref_ = float(t[-1])
        self.blowup_time_ = float(t[-1] + root)
        self.halfwidth_ = float(self.z * math.sqrt(max(var, 0.0)))
        return self

    def predict(self, X):
        check_is_fitted(self, "blowup_time_")
        t = np.asarray(X, dtype=float).ravel() - self.t_ref_
        g = self.slope_ * t + self.intercept_
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(g > 0, g ** (-2.0 / (self.p - 1.0)), np.inf)


class BlowupEstimate(NamedTuple):
    t_blowup: float
    halfwidth: float


def extrapolate_blowup_time(trace: FunctionalTrace, p: float, window: int = 8) -> BlowupEstimate:
    """Root of the linear fit of ``sup_norm^(-(p-1)/2)`` over the final rows."""
    reg = BlowupTimeRegressor(p=p, window=window).fit(trace.times, trace.sup_norm)
    return BlowupEstimate(reg.blowup_time_, reg.halfwidth_)
