"""Robust sigma points for the one-dimensional unscented transform.

The package computes discrete node/weight sets matching moments that are only
known to lie in intervals, by approximating the Chebyshev center of the
semialgebraic set of feasible sigma points with polynomial-optimization
relaxations solved by a built-in dense SDP solver.
"""

from .errors import SamplingError, SolverFailure, ValidationError
from .poly import (
    Monomial,
    Polynomial,
    basis,
    monomial_degree,
    monomial_index,
    poly_add,
    poly_eval,
    poly_mul,
)
from .sdp import (
    SdpProblem,
    SdpSolution,
    SdpStatus,
    SolverOptions,
    kkt_residuals,
    sdp_solve,
)

__all__ = [
    "Monomial",
    "Polynomial",
    "basis",
    "monomial_degree",
    "monomial_index",
    "poly_add",
    "poly_eval",
    "poly_mul",
    "SdpProblem",
    "SdpSolution",
    "SdpStatus",
    "SolverOptions",
    "kkt_residuals",
    "sdp_solve",
    "SamplingError",
    "SolverFailure",
    "ValidationError",
]
