"""Ground states of fractional Schrodinger equations on periodic lattices via the Nehari manifold."""
from .certificates import CheckResult, HypothesisError
from .energy import eval_J, gradient, nehari_functional, pairing_Jprime, residual
from .kernels import BACKEND
from .model import GammaWeight, Potential, Problem, constant, parse_nonlinearity, parse_periodic, parse_potential, power_nonlinearity, trig
from .nehari import NehariPoint, NehariTracker, NoSignChange, certify_J3, fiber_value_inequality, inverse_m, project
from .solve import SolverConfig, compare_c_vs_cper, coercive_diagnostics, dedup, minimize, multi_start, orbit_distance
from .torus_spectral import Field, TorusGrid, frac_laplacian, frac_laplacian_pv, translate

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "CheckResult",
    "Field",
    "GammaWeight",
    "HypothesisError",
    "NehariPoint",
    "NehariTracker",
    "NoSignChange",
    "Potential",
    "Problem",
    "SolverConfig",
    "TorusGrid",
    "certify_J3",
    "coercive_diagnostics",
    "compare_c_vs_cper",
    "constant",
    "dedup",
    "eval_J",
    "fiber_value_inequality",
    "frac_laplacian",
    "frac_laplacian_pv",
    "gradient",
    "inverse_m",
    "minimize",
    "multi_start",
    "nehari_functional",
    "orbit_distance",
    "pairing_Jprime",
    "parse_nonlinearity",
    "parse_periodic",
    "parse_potential",
    "power_nonlinearity",
    "project",
    "residual",
    "translate",
    "trig",
]
