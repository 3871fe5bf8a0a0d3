"""The three strategy variants, each a different ambiguity set fed to the
same solver: the given finite set (robust), the nominal kernel alone
(stochastic) and every distribution over a support map (conservative)."""

from __future__ import annotations

from typing import Optional

import numpy as np

from .feasibility import MAX_CANDIDATES, check_l0_feasible, compute_lambda_min
from .model import AllOverSupport, ConstraintSpec, Mdp, Singleton, reachable_support_mask
from .solver import InfeasibleBudget, solve

MODES = ("robust", "stochastic", "conservative")


def _run(mdp: Mdp, cs: ConstraintSpec, delta, x0, cap_at_l0, max_candidates):
    tables = compute_lambda_min(mdp, cs, delta=delta, cap_at_l0=cap_at_l0)
    if x0 is not None and not check_l0_feasible(tables, x0, cs.l0):
        raise InfeasibleBudget(
            f"l0={cs.l0} is below the minimum feasible bound "
            f"lambda_min={tables.lambda_min[0, x0]:.6g} at x0={x0}"
        )
    return solve(mdp, cs, tables, max_candidates=max_candidates)


def solve_robust(mdp: Mdp, cs: ConstraintSpec, delta: Optional[float] = None,
                 x0: Optional[int] = None, cap_at_l0: bool = True,
                 max_candidates: int = MAX_CANDIDATES):
    return _run(mdp, cs, delta, x0, cap_at_l0, max_candidates)


def solve_stochastic(mdp: Mdp, cs: ConstraintSpec, delta: Optional[float] = None,
                     x0: Optional[int] = None, cap_at_l0: bool = True,
                     max_candidates: int = MAX_CANDIDATES):
    """Expected-penalty constraint under the nominal kernel only."""
    return _run(mdp, cs.with_ambiguity(Singleton(mdp.nominal)), delta, x0, cap_at_l0,
                max_candidates)


def full_support(mdp: Mdp) -> np.ndarray:
    return np.ones((mdp.n_states, mdp.n_actions, mdp.n_states), dtype=bool)


def solve_conservative(mdp: Mdp, cs: ConstraintSpec, support: Optional[np.ndarray] = None,
                       delta: Optional[float] = None, x0: Optional[int] = None,
                       cap_at_l0: bool = True, max_candidates: int = MAX_CANDIDATES):
    """Worst-successor constraint over ``support``.

    ``support`` defaults to every successor reachable under the nominal
    kernel or the given ambiguity set; pass :func:`full_support` for the
    literal all-distributions reading.
    """
    if support is None:
        support = reachable_support_mask(mdp, cs.ambiguity)
    return _run(mdp, cs.with_ambiguity(AllOverSupport(support)), delta, x0, cap_at_l0,
                max_candidates)


def constraint_for_mode(mdp: Mdp, cs: ConstraintSpec, mode: str,
                        support: Optional[np.ndarray] = None) -> ConstraintSpec:
    """Constraint spec actually solved under ``mode``."""
    if mode == "robust":
        return cs
    if mode == "stochastic":
        return cs.with_ambiguity(Singleton(mdp.nominal))
    if mode == "conservative":
        if support is None:
            support = reachable_support_mask(mdp, cs.ambiguity)
        return cs.with_ambiguity(AllOverSupport(support))
    raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")


def solve_mode(mdp: Mdp, cs: ConstraintSpec, mode: str, support: Optional[np.ndarray] = None,
               **kw):
    return _run(mdp, constraint_for_mode(mdp, cs, mode, support),
                kw.get("delta"), kw.get("x0"), kw.get("cap_at_l0", True),
                kw.get("max_candidates", MAX_CANDIDATES))
