"""Value-function solver, belief simulator and verification harness for
multi-armed learning-and-stopping problems with two-point payoffs."""
from .errors import (BeliefHJBError, ConfigError, DependencyError, DomainError, GridError,
                     NoConvergence, PairSearchTooLarge, ValidationError)
from .model import (DiffusionCoeffs, PayoffRealization, ProblemSpec, from_u, make_spec,
                    obstacle_g, to_u, validate_spec, value_bounds)
from .solver import (Grid, PolicyField, SolveReport, ValueField, build_grid, extract_policy,
                     solve_value)
from .simulator import estimate_value_mc, run_episode, simulate_episodes, step_belief

__version__ = "0.1.0"

__all__ = [
    "BeliefHJBError", "ConfigError", "DependencyError", "DomainError", "GridError",
    "NoConvergence", "PairSearchTooLarge", "ValidationError",
    "DiffusionCoeffs", "PayoffRealization", "ProblemSpec", "from_u", "make_spec", "obstacle_g",
    "to_u", "validate_spec", "value_bounds",
    "Grid", "PolicyField", "SolveReport", "ValueField", "build_grid", "extract_policy",
    "solve_value", "estimate_value_mc", "run_episode", "simulate_episodes", "step_belief",
    "__version__",
]
