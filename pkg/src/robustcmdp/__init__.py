"""Finite-horizon MDPs with a distributionally robust penalty constraint.

Typical use::

    from robustcmdp import gridworld, baselines
    mdp, cs, _ = gridworld.build()
    values, policy = baselines.solve_robust(mdp, cs)
"""

from .baselines import MODES, solve_conservative, solve_mode, solve_robust, solve_stochastic
from .feasibility import (
    FeasibilityTables,
    check_l0_feasible,
    compute_lambda_min,
    select_bound_allocation,
)
from .model import (
    AllOverSupport,
    ConstraintSpec,
    CostModel,
    FiniteKernels,
    Mdp,
    ModelError,
    PenaltyModel,
    Singleton,
    worst_case_expectation,
)
from .problem_file import SchemaError, dump_problem, load_problem, parse_problem
from .simulate import AdversaryModel, SimulationReport, emit_heatmap
from .simulate import run as run_simulation
from .solver import (
    AugmentedPolicy,
    InfeasibleBudget,
    InfeasibleQuery,
    ValueTable,
    evaluate_policy_cost,
    evaluate_policy_penalty,
    extract_action,
    solve,
)

__version__ = "0.1.0"

__all__ = [
    "AdversaryModel", "AllOverSupport", "AugmentedPolicy", "ConstraintSpec", "CostModel",
    "FeasibilityTables", "FiniteKernels", "InfeasibleBudget", "InfeasibleQuery", "MODES", "Mdp",
    "ModelError", "PenaltyModel", "SchemaError", "SimulationReport", "Singleton", "ValueTable",
    "check_l0_feasible", "compute_lambda_min", "dump_problem", "emit_heatmap",
    "evaluate_policy_cost", "evaluate_policy_penalty", "extract_action", "load_problem",
    "parse_problem", "run_simulation", "select_bound_allocation", "solve", "solve_conservative",
    "solve_mode", "solve_robust", "solve_stochastic", "worst_case_expectation",
]
