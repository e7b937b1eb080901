"""Weighted space integrals of the test functions over ``r0 <= r <= t + R``
and power-law fitting of their decay in ``t + R``.

Both integrals are accumulated in log space: ``phi1`` grows like
``exp(r/sqrt(2))`` and overflows long before the integrand
``(phi1 exp(-t))^p'`` does.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_increasing, check_positive, check_series
from .radial import sphere_area
from .testfunctions import TestFunctionSet


class DomainTooSmallError(ValueError):
    """The grid does not reach the truncation radius ``t + R``."""


def conjugate(p: float) -> float:
    if not p > 1:
        raise ValueError(f"p must exceed 1, got {p}")
    return p / (p - 1.0)


def decay_exponent(n: int, p: float) -> float:
    """Exponent ``n - 1 - (n-1) p'/2`` of the polynomial bound on both integrals."""
    return (n - 1) * (1.0 - conjugate(p) / 2.0)


def log_refined_bound(p: float) -> tuple[float, float]:
    """``(power, log power)`` of the sharper two-dimensional bound on the weighted integral."""
    return 1.0 - conjugate(p) / 2.0, -1.0 / (p - 1.0)


def _log_measure(tf: TestFunctionSet, r) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    if tf.n == 1:
        return np.zeros_like(r)
    return math.log(sphere_area(tf.n)) + (tf.n - 1) * np.log(r)


def _truncation(tf: TestFunctionSet, t: float, R: float) -> tuple[float, int]:
    if t < 0:
        raise ValueError(f"t must be nonnegative, got {t}")
    edge = t + R
    if edge > tf.grid.rmax * (1 + 1e-12):
        raise DomainTooSmallError(
            f"t + R = {edge:g} exceeds the grid's rmax = {tf.grid.rmax:g}"
        )
    return edge, tf.grid.index_at(edge)


def _log_integral(tf, t, R, log_integrand, midpoint_first_cell):
    edge, j = _truncation(tf, t, R)
    r = tf.grid.r
    h = tf.grid.h
    start = 1 if midpoint_first_cell else 0
    x = np.append(r[start:j], edge)
    lf = np.append(log_integrand(np.arange(start, j)), log_integrand(None, edge))
    dx = np.diff(x)
    with np.errstate(divide="ignore"):
        ldx = np.log(dx / 2.0)
    terms = [ldx + lf[:-1], ldx + lf[1:]]
    if midpoint_first_cell:
        terms.append(np.array([math.log(h) + log_integrand(None, r[0] + 0.5 * h)]))
    return float(logsumexp(np.concatenate(terms)))


def psi_power_integral(tf: TestFunctionSet, p: float, t: float, R: float, log: bool = False) -> float:
    """``int_{r0 <= |x| <= t+R} psi1(x, t)^p' dx`` with ``p' = p/(p-1)``.

    The cell containing ``t + R`` is integrated up to ``t + R`` exactly, with
    the endpoint value taken from the ``phi1`` interpolant.
    """
    pc = conjugate(p)

    def log_f(idx, at=None):
        if at is None:
            return pc * (tf.log_phi1[idx] - t) + _log_measure(tf, tf.grid.r[idx])
        return float(pc * (tf.log_phi1_at(at) - t) + _log_measure(tf, at))

    with np.errstate(divide="ignore"):
        out = _log_integral(tf, t, R, log_f, midpoint_first_cell=False)
    return out if log else math.exp(out)


def weighted_psi_power_integral(tf: TestFunctionSet, p: float, t: float, R: float, log: bool = False) -> float:
    """``int_{r0 <= |x| <= t+R} phi0^(-1/(p-1)) psi1^p' dx``.

    ``phi0^(-1/(p-1))`` is infinite on the boundary while ``psi1^p'`` vanishes
    there; the product tends to 0 but cannot be evaluated at ``r0``. The first
    cell is therefore integrated by the midpoint rule and the rest by the
    trapezoid rule. Dropping the first cell instead changes the result by
    ``O(h^2)`` relative, well below every tolerance used here.
    """
    pc = conjugate(p)
    wexp = -1.0 / (p - 1.0)

    def log_f(idx, at=None):
        if at is None:
            r = tf.grid.r[idx]
            lphi0 = np.log(tf.phi0[idx])
            lphi1 = tf.log_phi1[idx]
        else:
            r = at
            lphi0 = math.log(float(tf.phi0_at(at)))
            lphi1 = float(tf.log_phi1_at(at))
        return wexp * lphi0 + pc * (lphi1 - t) + _log_measure(tf, r)

    out = _log_integral(tf, t, R, log_f, midpoint_first_cell=True)
    return out if log else math.exp(out)


class DecayRateRegressor(RegressorMixin, BaseEstimator):
    """Least-squares power law ``value ~ C (t+R)^a (ln(t+R))^c`` with ``c`` fixed.

    ``fit`` takes sample times ``t`` and positive values. The fitted exponent is
    the slope of ``ln(value) - c ln ln(t+R)`` against ``ln(t+R)``.

    Parameters
    ----------
    R : float
        Shift added to the sample times.
    log_correction : float
        Known power ``c`` of the logarithmic factor, removed before fitting.
    """

    def __init__(self, R: float = 0.0, log_correction: float = 0.0):
        self.R = R
        self.log_correction = log_correction

    def _features(self, t):
        s = np.asarray(t, dtype=float).ravel() + self.R
        if np.any(s <= 0) or (self.log_correction and np.any(s <= 1)):
            raise ValueError("t + R must exceed 1 when a log correction is used (0 otherwise)")
        lls = np.log(np.log(s)) if self.log_correction else np.zeros_like(s)
        return np.log(s), lls

    def fit(self, X, y):
        t, y = check_series(X, y, min_length=2)
        check_positive(y, "values")
        ls, lls = self._features(t)
        target = np.log(y) - self.log_correction * lls
        slope, intercept = np.polyfit(ls, target, 1)
        self.exponent_ = float(slope)
        self.log_constant_ = float(intercept)
        return self

    def predict(self, X):
        check_is_fitted(self, "exponent_")
        ls, lls = self._features(X)
        return np.exp(self.log_constant_ + self.exponent_ * ls + self.log_correction * lls)


@dataclass(frozen=True)
class EstimateFit:
    ts: np.ndarray
    values: np.ndarray
    fitted_exponent: float
    fitted_constant: float
    max_ratio: float
    ratios: np.ndarray
    bound_exponent: float
    log_correction: float

    def ratio_nonincreasing(self, rtol: float = 1e-9) -> bool:
        """True when ``value/bound`` never increases over the final decade of ``ts``."""
        tail = self.ratios[self.ts >= self.ts[-1] / 10.0]
        return bool(np.all(np.diff(tail) <= rtol * np.abs(tail[:-1])))


def fit_decay(samples, R: float, log_correction: float | None = None,
              target_exponent: float | None = None) -> EstimateFit:
    """Fit the decay rate of ``(t, value)`` samples against ``t + R``.

    ``max_ratio`` is the supremum of ``value / bound`` with
    ``bound = (t+R)^e (ln(t+R))^c``; ``e`` is ``target_exponent`` when given,
    else the fitted exponent. ``fitted_constant`` reports that supremum.

    Raises
    ------
    ValueError
        with fewer than 8 samples, times below 1, or times spanning less than
        a decade (the slope is ill-conditioned there).
    """
    arr = np.asarray(samples, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError("samples must be a sequence of (t, value) pairs")
    ts, values = check_series(arr[:, 0], arr[:, 1])
    if ts.size < 8:
        raise ValueError(f"need at least 8 samples, got {ts.size}")
    check_increasing(ts, "sample times")
    if ts[0] < 1:
        raise ValueError("sample times must be >= 1")
    if ts[-1] < 10.0 * ts[0] * (1 - 1e-12):
        raise ValueError("sample times must span at least one decade")
    check_positive(values, "values")

    c = 0.0 if log_correction is None else float(log_correction)
    reg = DecayRateRegressor(R=R, log_correction=c).fit(ts, values)
    e = reg.exponent_ if target_exponent is None else float(target_exponent)
    s = ts + R
    bound = s**e * (np.log(s) ** c if c else 1.0)
    ratios = values / bound
    max_ratio = float(np.max(ratios))
    return EstimateFit(ts, values, reg.exponent_, max_ratio, max_ratio, ratios, e, c)


def sweep(tf: TestFunctionSet, p: float, R: float, ts) -> tuple[np.ndarray, np.ndarray]:
    """Both integrals evaluated at every time in ``ts``."""
    ts = np.asarray(ts, dtype=float)
    plain = np.array([psi_power_integral(tf, p, t, R) for t in ts])
    weighted = np.array([weighted_psi_power_integral(tf, p, t, R) for t in ts])
    return plain, weighted
