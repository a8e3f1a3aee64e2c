"""Tikhonov-regularised second-order flows for monotone equations."""
from .diagnostics import certify, coefficients, energy, fit_rate, select_proof_constants
from .dynamics import FlowParams, integrate, log_schedule, validate_params
from .operators import evaluate, make_affine, make_gradient, make_opaque, monotonicity_probe
from .primal_dual import kkt_oracle, quadratic_problem, saddle_operator, solve_pd
from .tikhonov import minimal_norm_solution, path_checks, tikhonov_point

__version__ = "0.1.0"

__all__ = [
    "FlowParams",
    "certify",
    "coefficients",
    "energy",
    "evaluate",
    "fit_rate",
    "integrate",
    "kkt_oracle",
    "log_schedule",
    "make_affine",
    "make_gradient",
    "make_opaque",
    "minimal_norm_solution",
    "monotonicity_probe",
    "path_checks",
    "quadratic_problem",
    "saddle_operator",
    "select_proof_constants",
    "solve_pd",
    "tikhonov_point",
    "validate_params",
]
