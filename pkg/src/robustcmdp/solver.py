"""Backward dynamic program over the bound-augmented state ``(x, l)``.

At every ``(t, x, l)`` the program jointly picks an action and a successor
bound function whose worst-case expectation fits the residual budget
``l - d(x, u)``; the cost objective is the nominal expectation.  Cells with no
feasible choice carry the sentinel ``kappa``.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .feasibility import (
    FEAS_TOL,
    MAX_CANDIDATES,
    BoundFunction,
    CandidateSet,
    FeasibilityTables,
    consumption_residual,
)
from .model import ConstraintSpec, Mdp, relevant_support

#: Default worker threads for the per-step sweep over states.
THREADS_ENV = "ROBUSTCMDP_THREADS"


class InfeasibleQuery(LookupError):
    """The queried (t, x, l) cell has no feasible strategy."""


class InfeasibleBudget(ValueError):
    """l0 is below the minimum feasible bound of the initial state."""


@dataclass(frozen=True)
class ValueTable:
    values: tuple  # values[t][x] aligned with tables.grid(t, x)
    kappa: float
    tables: FeasibilityTables

    def value(self, t: int, x: int, l: float) -> float:
        gi = self.tables.snap(t, x, l)
        return self.kappa if gi < 0 else float(self.values[t][x][gi])


@dataclass(frozen=True)
class AugmentedPolicy:
    """Argmins of the augmented program.

    ``actions[t][x][g]`` is -1 where the cell is infeasible and
    ``next_index[t][x][g]`` gives the successor grid index for every state
    (the minimal bound off the relevant support).  ``constraint`` is the
    constraint the policy was solved under.
    """

    tables: FeasibilityTables
    actions: tuple
    next_index: tuple
    approximate: tuple
    constraint: Optional[ConstraintSpec] = None

    @property
    def horizon(self) -> int:
        return self.tables.horizon

    @property
    def any_approximate(self) -> bool:
        return any(bool(a.any()) for row in self.approximate for a in row)

    def feasible(self, t: int, x: int, gi: int) -> bool:
        return gi >= 0 and self.actions[t][x][gi] >= 0

    def successor(self, t: int, x: int, gi: int) -> BoundFunction:
        idx = self.next_index[t][x][gi]
        grids = self.tables.grids[t + 1]
        values = np.array([grids[s][i] for s, i in enumerate(idx)])
        return BoundFunction(t + 1, values, idx.copy())


def _threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def _solve_cell(t, x, mdp, cs, tables, V_next, kappa, max_candidates):
    grid = tables.grid(t, x)
    G, X, U = len(grid), mdp.n_states, mdp.n_actions
    best = np.full((U, G), np.inf)
    per_action = []
    for u in range(U):
        cand = CandidateSet(t, x, u, tables, cs, mdp, max_candidates)
        residuals = consumption_residual(x, u, grid, cs.penalty)
        if cand.exact:
            obj = mdp.cost.stage[x, u] + cand.continuation(V_next)
            order = np.argsort(cand.worst, kind="stable")
            k = np.searchsorted(cand.worst[order], residuals + FEAS_TOL, side="right")
            prefix = np.minimum.accumulate(obj[order])
            hit = k > 0
            best[u, hit] = prefix[k[hit] - 1]
            per_action.append((cand, obj, order, k))
        else:
            found = [cand.greedy(V_next, r) for r in residuals]
            for gi, f in enumerate(found):
                if f is not None:
                    best[u, gi] = mdp.cost.stage[x, u] + f[0]
            per_action.append((cand, found))

    values = np.full(G, kappa)
    actions = np.full(G, -1, dtype=np.int64)
    nxt = np.zeros((G, X), dtype=np.int64)
    approx = np.zeros(G, dtype=bool)
    for gi in range(G):
        gmin = best[:, gi].min()
        if not np.isfinite(gmin):
            continue
        thr = gmin + FEAS_TOL
        u = int(np.flatnonzero(best[:, gi] <= thr)[0])
        entry = per_action[u]
        if len(entry) == 4:
            cand, obj, order, k = entry
            pool = order[: k[gi]]
            flat = int(pool[obj[pool] <= thr].min())
            nxt[gi] = cand.indices_for(flat)
        else:
            nxt[gi] = entry[1][gi][1]
            approx[gi] = True
        values[gi] = gmin
        actions[gi] = u
    return values, actions, nxt, approx


def solve(
    mdp: Mdp,
    cs: ConstraintSpec,
    tables: FeasibilityTables,
    max_candidates: int = MAX_CANDIDATES,
    threads: Optional[int] = None,
) -> tuple[ValueTable, AugmentedPolicy]:
    """Solve the bound-augmented program backward from the horizon.

    Ties within 1e-9 go to the smaller action index and then to the
    lexicographically smallest successor allocation.
    """
    n, X = mdp.horizon, mdp.n_states
    kappa = mdp.kappa
    threads = threads or _threads()
    V = [None] * (n + 1)
    A = [None] * n
    N = [None] * n
    Q = [None] * n
    V[n] = tuple(np.full(len(tables.grid(n, x)), mdp.cost.terminal[x]) for x in range(X))
    for t in range(n - 1, -1, -1):
        args = [(t, x, mdp, cs, tables, V[t + 1], kappa, max_candidates) for x in range(X)]
        if threads > 1:
            with ThreadPoolExecutor(threads) as pool:
                cells = list(pool.map(lambda a: _solve_cell(*a), args))
        else:
            cells = [_solve_cell(*a) for a in args]
        V[t] = tuple(c[0] for c in cells)
        A[t] = tuple(c[1] for c in cells)
        N[t] = tuple(c[2] for c in cells)
        Q[t] = tuple(c[3] for c in cells)
    for arrs in (V, A, N, Q):
        for row in arrs:
            for a in row:
                a.setflags(write=False)
    return (
        ValueTable(tuple(V), kappa, tables),
        AugmentedPolicy(tables, tuple(A), tuple(N), tuple(Q), cs),
    )


def extract_action(policy: AugmentedPolicy, t: int, x: int, l: float) -> tuple[int, BoundFunction]:
    """Action and successor bound function for the bound ``l`` snapped down."""
    gi = policy.tables.snap(t, x, l)
    if not policy.feasible(t, x, gi):
        raise InfeasibleQuery(
            f"no feasible strategy at t={t}, x={x}, l={l} "
            f"(minimum feasible bound {policy.tables.lambda_min[t, x]:.6g})"
        )
    return int(policy.actions[t][x][gi]), policy.successor(t, x, gi)


def _start(policy: AugmentedPolicy, x0: int, l0: float) -> int:
    gi = policy.tables.snap(0, x0, l0)
    if not policy.feasible(0, x0, gi):
        raise InfeasibleQuery(
            f"infeasible start x0={x0}, l0={l0} "
            f"(minimum feasible bound {policy.tables.lambda_min[0, x0]:.6g})"
        )
    return gi


def evaluate_policy_cost(mdp: Mdp, policy: AugmentedPolicy, x0: int, l0: float) -> float:
    """Exact expected total cost under the nominal kernel.

    Propagates the joint distribution of ``(x, grid index)`` forward.
    """
    dist = {(x0, _start(policy, x0, l0)): 1.0}
    total = 0.0
    for t in range(mdp.horizon):
        nxt: dict = {}
        for (x, gi), p in dist.items():
            u = int(policy.actions[t][x][gi])
            total += p * mdp.cost.stage[x, u]
            idx = policy.next_index[t][x][gi]
            for xn in np.flatnonzero(mdp.nominal[x, u]):
                key = (int(xn), int(idx[xn]))
                nxt[key] = nxt.get(key, 0.0) + p * mdp.nominal[x, u, xn]
        dist = nxt
    return total + sum(p * mdp.cost.terminal[x] for (x, _), p in dist.items())


def evaluate_policy_penalty(
    mdp: Mdp, cs: ConstraintSpec, policy: AugmentedPolicy, x0: int, l0: float
) -> float:
    """Worst-case expected total penalty of the policy under ``cs.ambiguity``."""
    n = mdp.horizon
    memo: dict = {}

    def go(t: int, x: int, gi: int) -> float:
        if t == n:
            return float(cs.penalty.terminal[x])
        key = (t, x, gi)
        if key not in memo:
            u = int(policy.actions[t][x][gi])
            if u < 0:
                raise InfeasibleQuery(f"policy reaches infeasible cell t={t}, x={x}")
            idx = policy.next_index[t][x][gi]
            vals = np.zeros(mdp.n_states)
            for xn in relevant_support(mdp, cs.ambiguity, x, u):
                vals[xn] = go(t + 1, int(xn), int(idx[xn]))
            memo[key] = float(cs.penalty.stage[x, u] + cs.ambiguity.worst_case(vals, x, u))
        return memo[key]

    return go(0, x0, _start(policy, x0, l0))
