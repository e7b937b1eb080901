"""Numerical study of finite-time blow-up for the strongly damped semilinear
wave equation ``u_tt - Lap u - Lap u_t = |u|^p`` on radial exterior domains."""

from .diagnostics import BlowupTimeRegressor, FunctionalTrace, compute_functionals
from .estimates import DecayRateRegressor, fit_decay
from .ode import OdeBlowupSpec, classify_grid, integrate
from .radial import Dimension, RadialGrid, RadialProblem, strauss_exponent
from .solver import SolverConfig, SolutionState, run, step
from .testfunctions import build_test_functions

__version__ = "0.1.0"

__all__ = [
    "BlowupTimeRegressor", "DecayRateRegressor", "Dimension", "FunctionalTrace", "OdeBlowupSpec",
    "RadialGrid", "RadialProblem", "SolutionState", "SolverConfig", "build_test_functions",
    "classify_grid", "compute_functionals", "fit_decay", "integrate", "run", "step", "strauss_exponent",
]
