"""Proximal incremental aggregated gradient (PIAG) with a convergence-theory verifier."""

from .engine import DelaySchedule, GradientTable, RunTrace, init_table, piag_step, run_piag
from .errors import DivergenceError, InputError, OracleError, StalenessError
from .problems import (ComponentFunction, CompositeProblem, make_logistic_instance,
                       make_quadratic_instance)
from .prox import ProxResult, Regularizer, eval_reg, prox
from .reference import ReferenceSolution, solve_closed_form, solve_prox_gradient, solve_reference
from .theory import (CheckReport, CheckResult, ContractionSequenceSpec, StepSizePolicy,
                     corollary1_budget, rate_eq7, rate_eq8, theorem1_step_size)

__all__ = [
    "CheckReport", "CheckResult", "ComponentFunction", "CompositeProblem",
    "ContractionSequenceSpec", "DelaySchedule", "DivergenceError", "GradientTable",
    "InputError", "OracleError", "ProxResult", "ReferenceSolution", "Regularizer",
    "RunTrace", "StalenessError", "StepSizePolicy", "corollary1_budget", "eval_reg",
    "init_table", "make_logistic_instance", "make_quadratic_instance", "piag_step", "prox",
    "rate_eq7", "rate_eq8", "run_piag", "solve_closed_form", "solve_prox_gradient",
    "solve_reference", "theorem1_step_size",
]
