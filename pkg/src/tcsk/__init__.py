"""Twisted constant-scalar-curvature Kahler metrics on flat complex tori."""

from .estimators import EnergyFeatures, EpsilonGeodesic, GradientFlow, PathContinuation, TwistedCscK
from .exceptions import (
    ConfigError,
    ConvergenceError,
    FieldFileError,
    GridMismatchError,
    InvalidMetricError,
    KrylovBreakdown,
    NonFiniteFieldError,
    TCSKError,
)
from .fieldio import read_field, write_field
from .flows import run_flow
from .functionals import class_constants, energy_report, j_chi, k_energy, twisted_energy
from .geodesic import convexity_profile, solve_geodesic
from .grid import ScalarField, TorusGrid, random_band_limited
from .kahler import HermitianFormField, KahlerState, assemble
from .linop import LinearizedOperator
from .solver import NewtonSettings, continue_path, newton_solve, solve_j_equation

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "ConvergenceError",
    "EnergyFeatures",
    "EpsilonGeodesic",
    "FieldFileError",
    "GradientFlow",
    "GridMismatchError",
    "HermitianFormField",
    "InvalidMetricError",
    "KahlerState",
    "KrylovBreakdown",
    "LinearizedOperator",
    "NewtonSettings",
    "NonFiniteFieldError",
    "PathContinuation",
    "ScalarField",
    "TCSKError",
    "TorusGrid",
    "TwistedCscK",
    "assemble",
    "class_constants",
    "continue_path",
    "convexity_profile",
    "energy_report",
    "j_chi",
    "k_energy",
    "newton_solve",
    "random_band_limited",
    "read_field",
    "run_flow",
    "solve_geodesic",
    "solve_j_equation",
    "twisted_energy",
    "write_field",
]
