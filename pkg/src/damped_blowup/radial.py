"""Radial grids, quadrature with the n-dimensional surface measure, and the
problem definition shared by the rest of the package.

The domain is either the half-line ``x > 0`` (``n = 1``) or the exterior of
the ball of radius ``r0`` (``n >= 2``). Every function on the domain is radial
and is sampled on a uniform grid whose first node is the boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np

Profile = Callable[[np.ndarray], np.ndarray]


def strauss_exponent(n: int) -> float:
    """Positive root of ``(n-1) p^2 - (n+1) p - 2 = 0``; ``inf`` for ``n = 1``."""
    if int(n) != n or n < 1:
        raise ValueError(f"dimension must be a positive integer, got {n!r}")
    n = int(n)
    if n == 1:
        return math.inf
    b = n + 1
    return (b + math.sqrt(b * b + 8 * (n - 1))) / (2 * (n - 1))


def sphere_area(n: int) -> float:
    """Surface area of the unit sphere in R^n, used as the radial measure weight.

    The half-line (``n = 1``) carries plain ``dx``, so the weight is 1 there.
    """
    if n < 1:
        raise ValueError(f"dimension must be >= 1, got {n}")
    if n == 1:
        return 1.0
    return 2.0 * math.pi ** (n / 2) / math.gamma(n / 2)


def ball_volume(n: int) -> float:
    """Volume of the closed unit ball in R^n."""
    if n < 1:
        raise ValueError(f"dimension must be >= 1, got {n}")
    return math.pi ** (n / 2) / math.gamma(n / 2 + 1)


@dataclass(frozen=True)
class Dimension:
    """Spatial dimension together with the obstacle radius.

    For ``n = 1`` the domain is the half-line and ``r0`` must be 0.
    """

    n: int
    r0: float = 0.0

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"n must be a positive integer, got {self.n!r}")
        if self.n == 1 and self.r0 != 0.0:
            raise ValueError("the half-line (n=1) has its boundary at x=0; r0 must be 0")
        if self.n >= 2 and not self.r0 > 0:
            raise ValueError(f"exterior-of-ball geometry needs r0 > 0, got {self.r0}")

    @property
    def geometry(self) -> str:
        return "half-line" if self.n == 1 else "exterior-of-ball"


@dataclass(frozen=True)
class RadialGrid:
    """Uniform grid ``r0 + i*h`` for ``i = 0..m-1``."""

    r0: float
    rmax: float
    m: int

    def __post_init__(self):
        if not self.rmax > self.r0:
            raise ValueError(f"need r0 < rmax, got r0={self.r0}, rmax={self.rmax}")
        if self.m < 3:
            raise ValueError(f"need at least 3 nodes, got m={self.m}")

    @classmethod
    def from_spacing(cls, r0: float, rmax: float, h: float) -> "RadialGrid":
        """Grid with spacing ``h`` reaching at least ``rmax``."""
        if not h > 0:
            raise ValueError(f"spacing must be positive, got {h}")
        m = int(math.ceil((rmax - r0) / h - 1e-9)) + 1
        m = max(m, 3)
        return cls(r0, r0 + (m - 1) * h, m)

    @property
    def h(self) -> float:
        return (self.rmax - self.r0) / (self.m - 1)

    @cached_property
    def r(self) -> np.ndarray:
        r = self.r0 + self.h * np.arange(self.m)
        r.setflags(write=False)
        return r

    def index_at(self, radius: float) -> int:
        """Index of the first node with ``r >= radius`` (clipped to the grid)."""
        i = int(math.ceil((radius - self.r0) / self.h - 1e-9))
        return min(max(i, 0), self.m - 1)


def radial_weight(grid: RadialGrid, n: int) -> np.ndarray:
    """Nodal measure density ``omega_n r^(n-1)``."""
    if n == 1:
        return np.ones(grid.m)
    return sphere_area(n) * grid.r ** (n - 1)


def radial_quadrature(grid: RadialGrid, f, n: int) -> float:
    """Composite trapezoid value of ``int f dx`` for a radial ``f`` sampled on ``grid``."""
    f = np.asarray(f, dtype=float)
    if f.shape != (grid.m,):
        raise ValueError(f"samples have shape {f.shape}, grid has {grid.m} nodes")
    if not np.all(np.isfinite(f)):
        raise ValueError("samples must be finite")
    g = f * radial_weight(grid, n)
    return float(grid.h * (g.sum() - 0.5 * (g[0] + g[-1])))


def discrete_laplacian(u, n: int, grid: RadialGrid) -> np.ndarray:
    """Second-order central differences of ``u_rr + (n-1)/r u_r``.

    The first and last entries are set to 0; both are Dirichlet nodes.
    """
    u = np.asarray(u, dtype=float)
    h = grid.h
    out = np.zeros_like(u)
    out[1:-1] = (u[2:] - 2.0 * u[1:-1] + u[:-2]) / (h * h)
    if n > 1:
        r = grid.r[1:-1]
        out[1:-1] += (n - 1) / r * (u[2:] - u[:-2]) / (2.0 * h)
    return out


def laplacian_bands(n: int, grid: RadialGrid) -> tuple[np.ndarray, np.ndarray, float]:
    """Lower and upper stencil coefficients (per node) and the diagonal of the radial Laplacian."""
    h = grid.h
    a = np.full(grid.m, 1.0 / (h * h))
    if n > 1:
        b = (n - 1) / (2.0 * h * grid.r)
    else:
        b = np.zeros(grid.m)
    return a - b, a + b, -2.0 / (h * h)


def quartic_bump(center: float, width: float) -> Profile:
    """``(1 - ((r - center)/width)^2)_+^4``: C^3, nonnegative, supported in ``[center-width, center+width]``."""
    if not width > 0:
        raise ValueError(f"bump width must be positive, got {width}")

    def profile(r):
        s = (np.asarray(r, dtype=float) - center) / width
        return np.where(np.abs(s) < 1.0, (1.0 - s * s) ** 4, 0.0)

    profile.center = center
    profile.width = width
    return profile


def zero_profile(r):
    return np.zeros_like(np.asarray(r, dtype=float))


@dataclass(frozen=True)
class RadialProblem:
    """``u_tt - Lap u - Lap u_t = |u|^p`` with data ``eps*u0``, ``eps*u1`` supported in ``r < R``."""

    dim: Dimension
    p: float
    eps: float
    u0: Profile
    u1: Profile
    R: float
    name: str = field(default="", compare=False)

    def __post_init__(self):
        if not self.p > 1:
            raise ValueError(f"p must exceed 1, got {self.p}")
        if not self.eps >= 0:
            raise ValueError(f"eps must be nonnegative, got {self.eps}")
        if not self.R > self.dim.r0:
            raise ValueError(f"the obstacle must sit inside B(R): need r0 < R, got r0={self.dim.r0}, R={self.R}")
        probe = np.linspace(self.dim.r0, self.R + 1.0, 4001)
        for label, prof in (("u0", self.u0), ("u1", self.u1)):
            vals = np.asarray(prof(probe), dtype=float)
            if np.any(vals < 0):
                raise ValueError(f"{label} must be nonnegative")
            if np.any(vals[probe >= self.R] != 0):
                raise ValueError(f"{label} must vanish for r >= R={self.R}")

    @property
    def n(self) -> int:
        return self.dim.n

    @property
    def r0(self) -> float:
        return self.dim.r0

    @classmethod
    def with_bump(cls, n: int, p: float, eps: float, R: float, r0: float | None = None, **kw) -> "RadialProblem":
        """Problem with ``u0 = u1`` = quartic bump filling ``[r0, R]``."""
        if r0 is None:
            r0 = 0.0 if n == 1 else 1.0
        dim = Dimension(n, r0)
        bump = quartic_bump(0.5 * (r0 + R), 0.5 * (R - r0))
        return cls(dim, p, eps, bump, bump, R, **kw)


def support_radius_at(problem: RadialProblem, t: float) -> float:
    """Radius ``t + R`` of the finite-speed support ball; sizes grids and bounds integration domains."""
    if t < 0:
        raise ValueError(f"t must be nonnegative, got {t}")
    return t + problem.R
