"""Interior-point path following for convex variational problems.

The package estimates a-priori Lipschitz bounds for minimizers, discretizes
the problem with piecewise-constant controls and solves it with a short-step
barrier method whose iteration count is bounded in advance.
"""

from importlib import resources

from .discretize import PiecewiseConstantControl, QuadratureRule, objective_P, required_N
from .errors import DomainError, FactorizationError, InfeasibleError, IterationLimitError, VaripathError
from .estimator import EstimatorOptions, RegularityConstants, compute_all
from .model import (
    CoercivityFn,
    LagrangianSpec,
    PolyhedralSet,
    RegularityParams,
    VariationalProblem,
    load_problem,
    problem_from_dict,
    validate_conditions,
)
from .solver import SolveReport, SolverConfig, path_follow, predicted_iterations
from .verify import benchmark_sinh

__version__ = "0.1.0"


def bundled_problem(name: str = "bench_sinh") -> str:
    """Path of a problem document shipped with the package."""
    return str(resources.files(__name__).joinpath("problems", f"{name}.json"))


__all__ = [
    "CoercivityFn",
    "DomainError",
    "EstimatorOptions",
    "FactorizationError",
    "InfeasibleError",
    "IterationLimitError",
    "LagrangianSpec",
    "PiecewiseConstantControl",
    "PolyhedralSet",
    "QuadratureRule",
    "RegularityConstants",
    "RegularityParams",
    "SolveReport",
    "SolverConfig",
    "VariationalProblem",
    "VaripathError",
    "benchmark_sinh",
    "bundled_problem",
    "compute_all",
    "load_problem",
    "objective_P",
    "path_follow",
    "predicted_iterations",
    "problem_from_dict",
    "required_N",
    "validate_conditions",
]
