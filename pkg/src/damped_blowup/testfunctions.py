"""Harmonic test function ``phi0``, the eigenfunction ``phi1`` with
``Lap phi1 = phi1/2``, and the space-time weight ``psi1 = phi1 * exp(-t)``.

``phi0`` is explicit in the radial geometries::

    n >= 3 : 1 - (r0/r)^(n-2)
    n == 2 : ln(r/r0)
    n == 1 : x

``phi1`` solves the radial ODE ``phi'' + (n-1)/r phi' = phi/2`` outward from
``phi(r0) = 0, phi'(r0) = 1``. It grows like ``r^(-(n-1)/2) exp(r/sqrt(2))``,
so it is integrated as ``z = phi1 * exp(-r/sqrt(2))``, which stays bounded,
and ``log(phi1)`` is kept next to the raw samples.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicHermiteSpline

from .radial import Dimension, RadialGrid, discrete_laplacian

RATE = 1.0 / math.sqrt(2.0)
# Above this magnitude the raw samples are replaced by inf; log_phi1 stays exact.
OVERFLOW = 1e300


@dataclass(frozen=True)
class TestFunctionSet:
    __test__ = False  # keep pytest from collecting this class

    grid: RadialGrid
    n: int
    phi0: np.ndarray
    phi1: np.ndarray
    log_phi1: np.ndarray
    _w: CubicHermiteSpline = field(repr=False, compare=False)

    def phi1_at(self, r) -> np.ndarray:
        """``phi1`` at arbitrary radii inside the grid (Hermite interpolant)."""
        r = np.asarray(r, dtype=float)
        return self._w(r) * (r - self.grid.r0) * np.exp(RATE * r)

    def log_phi1_at(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        with np.errstate(divide="ignore"):
            return np.log(self._w(r)) + np.log(r - self.grid.r0) + RATE * r

    def phi0_at(self, r) -> np.ndarray:
        return phi0_closed_form(self.n, self.grid.r0, r)


def phi0_closed_form(n: int, r0: float, r):
    r = np.asarray(r, dtype=float)
    if n >= 3:
        return 1.0 - (r0 / r) ** (n - 2)
    if n == 2:
        return np.log(r / r0)
    return r.copy()


def _check_boundary(dim: Dimension, grid: RadialGrid):
    if not math.isclose(grid.r0, dim.r0, rel_tol=0, abs_tol=1e-12):
        raise ValueError(
            f"grid must start on the boundary r0={dim.r0}, first node is {grid.r0}"
        )


def build_phi0(dim: Dimension, grid: RadialGrid) -> np.ndarray:
    _check_boundary(dim, grid)
    phi0 = phi0_closed_form(dim.n, dim.r0, grid.r)
    phi0[0] = 0.0
    return phi0


def _phi1_spline(dim: Dimension, rmax: float, rtol: float, max_step: float) -> CubicHermiteSpline:
    """Interpolant of ``w = phi1 exp(-r/sqrt(2)) / (r - r0)``.

    ``z = phi1 exp(-r/sqrt(2))`` vanishes linearly at the boundary, so its
    Hermite interpolation error is large relative to ``z`` there; dividing by
    ``r - r0`` leaves a function bounded away from zero.
    """
    n, r0 = dim.n, dim.r0

    # phi = z exp(RATE r):  z'' = -sqrt(2) z' - (n-1)/r (z' + RATE z)
    def rhs(r, y):
        z, dz = y
        d2 = -math.sqrt(2.0) * dz
        if n > 1:
            d2 -= (n - 1) / r * (dz + RATE * z)
        return [dz, d2]

    dz0 = math.exp(-RATE * r0)
    sol = solve_ivp(
        rhs,
        (r0, rmax),
        [0.0, dz0],
        method="RK45",
        rtol=rtol,
        atol=rtol * 1e-6 * dz0,
        max_step=max_step,
    )
    if not sol.success:
        raise RuntimeError(f"phi1 integration failed: {sol.message}")
    s = sol.t - r0
    z, dz = sol.y
    w = np.empty_like(s)
    dw = np.empty_like(s)
    w[0] = dz0
    # w'(r0) = z''(r0)/2 from the Taylor expansion of z at the boundary
    dw[0] = -0.5 * (math.sqrt(2.0) + ((n - 1) / r0 if n > 1 else 0.0)) * dz0
    w[1:] = z[1:] / s[1:]
    dw[1:] = (dz[1:] - w[1:]) / s[1:]
    return CubicHermiteSpline(sol.t, w, dw)


def build_phi1(dim: Dimension, grid: RadialGrid, rtol: float = 1e-12, max_step: float = 0.02):
    """Samples of ``phi1`` and ``log(phi1)`` on ``grid`` plus the interpolant of ``w``.

    ``max_step`` caps the stepper's spacing so the cubic Hermite interpolation
    error stays below the integration tolerance.

    Raises
    ------
    RuntimeError
        if any interior sample is not strictly positive. The outward IVP
        solution is increasing, so this signals a stepping defect.
    """
    _check_boundary(dim, grid)
    spline = _phi1_spline(dim, grid.rmax, rtol, max_step)
    r = grid.r
    w = spline(r)
    if np.any(w <= 0):
        bad = int(np.argmax(w <= 0))
        raise RuntimeError(f"phi1 lost positivity at r={r[bad]:.6g}")
    with np.errstate(divide="ignore"):
        log_phi1 = np.log(w) + np.log(r - dim.r0) + RATE * r
    log_phi1[0] = -np.inf
    with np.errstate(over="ignore"):
        phi1 = w * (r - dim.r0) * np.exp(RATE * r)
    phi1[0] = 0.0
    phi1[log_phi1 > math.log(OVERFLOW)] = np.inf
    return phi1, log_phi1, spline


def build_test_functions(dim: Dimension, grid: RadialGrid, rtol: float = 1e-12) -> TestFunctionSet:
    phi0 = build_phi0(dim, grid)
    phi1, log_phi1, spline = build_phi1(dim, grid, rtol=rtol)
    for arr in (phi0, phi1, log_phi1):
        arr.setflags(write=False)
    return TestFunctionSet(grid, dim.n, phi0, phi1, log_phi1, spline)


def psi1_at(tf: TestFunctionSet, t: float) -> np.ndarray:
    """``phi1 * exp(-t)``; nodes where ``phi1`` overflowed are rebuilt from the log."""
    if t < 0:
        raise ValueError(f"t must be nonnegative, got {t}")
    with np.errstate(invalid="ignore"):
        out = tf.phi1 * math.exp(-t)
    big = ~np.isfinite(tf.phi1)
    if big.any():
        with np.errstate(over="ignore"):
            out[big] = np.exp(tf.log_phi1[big] - t)
    return out


def residual_harmonic(tf: TestFunctionSet) -> float:
    """Max over interior nodes of the discrete radial Laplacian of ``phi0``."""
    lap = discrete_laplacian(tf.phi0, tf.n, tf.grid)
    return float(np.max(np.abs(lap[1:-1])))


def residual_eigen(tf: TestFunctionSet) -> float:
    """Relative residual of ``Lap phi1 = phi1/2`` over interior nodes.

    Each node's residual is divided by the size of the operator terms there,
    ``|phi''| + |(n-1)/r phi'| + |phi|/2``. Neighbour ratios are formed from
    ``log_phi1`` so the measure is insensitive to overflow, and the scale does
    not vanish at the first interior node where ``phi1 ~ h``.
    """
    h = tf.grid.h
    lp = tf.log_phi1
    with np.errstate(invalid="ignore"):
        rho_plus = np.exp(lp[2:] - lp[1:-1])
        rho_minus = np.exp(lp[:-2] - lp[1:-1])
    rho_minus[~np.isfinite(lp[:-2])] = 0.0
    d2 = (rho_plus - 2.0 + rho_minus) / (h * h)
    d1 = (rho_plus - rho_minus) / (2.0 * h)
    drift = (tf.n - 1) / tf.grid.r[1:-1] * d1 if tf.n > 1 else np.zeros_like(d1)
    res = np.abs(d2 + drift - 0.5)
    scale = np.abs(d2) + np.abs(drift) + 0.5
    return float(np.max(res / scale))


def growth_rate(tf: TestFunctionSet) -> float:
    """Slope of ``ln phi1 + (n-1)/2 ln r`` against ``r`` over the outer half of the grid."""
    half = tf.grid.m // 2
    r = tf.grid.r[half:]
    y = tf.log_phi1[half:] + 0.5 * (tf.n - 1) * np.log(r)
    slope, _ = np.polyfit(r, y, 1)
    return float(slope)
