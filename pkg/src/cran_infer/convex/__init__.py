"""Canonical convex programs and an interior-point solver for them."""
from .barrier import (INFEASIBLE, NUMERICAL_FAILURE, OPTIMAL, FeasibilityResult, SolveReport,
                      SolverOptions, feasibility_phase, logdet_gradient_hessian, solve)
from .program import (AffineLE, ConvexProgram, ConvexQuadLE, LogDetRatioLE, QuadOverLinLE,
                      VariableLayout, dump_program)

__all__ = [
    "AffineLE", "ConvexProgram", "ConvexQuadLE", "LogDetRatioLE", "QuadOverLinLE", "VariableLayout",
    "dump_program", "solve", "feasibility_phase", "logdet_gradient_hessian", "SolveReport",
    "SolverOptions", "FeasibilityResult", "OPTIMAL", "INFEASIBLE", "NUMERICAL_FAILURE",
]
