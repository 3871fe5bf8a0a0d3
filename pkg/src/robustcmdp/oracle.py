"""Brute-force references for toy instances.

Strategies are enumerated on the full history tree: a deterministic action
for every state sequence starting at the root.  That class contains every
bound-augmented strategy (the bound is a function of the history), so the
best feasible member is the true constrained optimum.  Costs use the
nominal kernel; penalties use the per-node worst case over the ambiguity set.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .feasibility import FEAS_TOL, GRID_MERGE
from .model import (
    AllOverSupport,
    ConstraintSpec,
    CostModel,
    FiniteKernels,
    Mdp,
    PenaltyModel,
    Singleton,
)

MAX_STRATEGIES = 10**7


class CapExceeded(RuntimeError):
    pass


@dataclass
class EnumeratedStrategy:
    """Action per history ``(x_0, ..., x_t)`` for every decision node."""

    table: dict

    def __call__(self, history) -> int:
        return self.table[tuple(history)]


@dataclass
class OracleResult:
    feasible: bool
    value: float  # +inf when infeasible
    strategy: EnumeratedStrategy | None
    penalty: float  # worst-case penalty of the returned strategy
    min_penalty: np.ndarray  # (n + 1, X) minimum penalty-to-go


def _node_count(X: int, depth: int) -> int:
    return sum(X**k for k in range(depth))


def _worst(cs: ConstraintSpec, x: int, a: np.ndarray, child: np.ndarray) -> np.ndarray:
    amb = cs.ambiguity
    if isinstance(amb, AllOverSupport):
        return np.where(amb.support_mask[x, a], child, -np.inf).max(axis=1)
    if isinstance(amb, Singleton):
        return (amb.kernel[x, a] * child).sum(axis=1)
    rows = amb.kernels[:, x, a]  # (k, S, X)
    return (rows * child[None]).sum(axis=2).max(axis=0)


def tree_evaluate(mdp: Mdp, cs: ConstraintSpec, root: int, depth: int, cap: int = MAX_STRATEGIES):
    """Cost and worst-case penalty of every history strategy of ``depth`` steps.

    Returns ``(strategies, J, L, nodes)`` where ``strategies[s, i]`` is the
    action at node ``i`` and ``nodes`` lists node histories in index order.
    """
    X, U = mdp.n_states, mdp.n_actions
    N = _node_count(X, depth)
    if U**N > cap:
        raise CapExceeded(f"{U}**{N} strategies exceeds the cap of {cap}")
    strategies = np.array(list(itertools.product(range(U), repeat=N)), dtype=np.int64).reshape(-1, N)
    nodes = []
    level = [(root,)]
    levels = []
    for _ in range(depth):
        levels.append(level)
        nodes.extend(level)
        level = [h + (x,) for h in level for x in range(X)]
    index = {h: i for i, h in enumerate(nodes)}
    S = strategies.shape[0]
    c_n, d_n = mdp.cost.terminal, cs.penalty.terminal
    J_child = {h: np.full(S, c_n[h[-1]]) for h in level}
    L_child = {h: np.full(S, d_n[h[-1]]) for h in level}
    for lvl in reversed(levels):
        J_here, L_here = {}, {}
        for h in lvl:
            x = h[-1]
            a = strategies[:, index[h]]
            CJ = np.stack([J_child[h + (xn,)] for xn in range(X)], axis=1)
            CL = np.stack([L_child[h + (xn,)] for xn in range(X)], axis=1)
            J_here[h] = mdp.cost.stage[x, a] + (mdp.nominal[x, a] * CJ).sum(axis=1)
            L_here[h] = cs.penalty.stage[x, a] + _worst(cs, x, a, CL)
        J_child, L_child = J_here, L_here
    return strategies, J_child[(root,)], L_child[(root,)], nodes


def min_penalty_to_go(mdp: Mdp, cs: ConstraintSpec, cap: int = MAX_STRATEGIES) -> np.ndarray:
    n, X = mdp.horizon, mdp.n_states
    out = np.empty((n + 1, X))
    out[n] = cs.penalty.terminal
    for t in range(n):
        for x in range(X):
            out[t, x] = tree_evaluate(mdp, cs, x, n - t, cap)[2].min()
    return out


def enumerate_and_evaluate(mdp: Mdp, cs: ConstraintSpec, x0: int, l0: float,
                           cap: int = MAX_STRATEGIES) -> OracleResult:
    """Cheapest history strategy whose worst-case penalty is at most ``l0``."""
    strategies, J, L, nodes = tree_evaluate(mdp, cs, x0, mdp.horizon, cap)
    lam = min_penalty_to_go(mdp, cs, cap)
    ok = L <= l0 + FEAS_TOL
    if not ok.any():
        return OracleResult(False, np.inf, None, np.inf, lam)
    best = J[ok].min()
    s = int(np.flatnonzero(ok & (J <= best))[0])
    table = {h: int(strategies[s, i]) for i, h in enumerate(nodes)}
    return OracleResult(True, float(best), EnumeratedStrategy(table), float(L[s]), lam)


def penalty_lattice(mdp: Mdp, cs: ConstraintSpec, cap: int = MAX_STRATEGIES) -> list:
    """Every achievable penalty-to-go value per ``(t, x)``.

    Solving on this grid removes discretization error.  Index 0 is a
    placeholder since the step-0 bound is ``l0`` itself.
    """
    n, X = mdp.horizon, mdp.n_states
    out = [[np.array([cs.l0])] * X]
    for t in range(1, n + 1):
        row = []
        for x in range(X):
            if t == n:
                row.append(np.array([cs.penalty.terminal[x]]))
                continue
            vals = np.unique(tree_evaluate(mdp, cs, x, n - t, cap)[2])
            keep = np.concatenate([[True], np.diff(vals) > GRID_MERGE])
            row.append(vals[keep])
        out.append(row)
    return out


def unconstrained_dp(mdp: Mdp) -> tuple[np.ndarray, np.ndarray]:
    """Plain backward induction on expected cost; returns ``(V, policy)``."""
    n, X, U = mdp.horizon, mdp.n_states, mdp.n_actions
    V = np.empty((n + 1, X))
    pi = np.empty((n, X), dtype=np.int64)
    V[n] = mdp.cost.terminal
    for t in range(n - 1, -1, -1):
        Q = mdp.cost.stage + mdp.nominal @ V[t + 1]
        pi[t] = Q.argmin(axis=1)
        V[t] = Q.min(axis=1)
    return V, pi


def expected_penalty_dp(mdp: Mdp, cs: ConstraintSpec) -> np.ndarray:
    """Minimum nominal expected penalty-to-go per ``(t, x)``."""
    n = mdp.horizon
    W = np.empty((n + 1, mdp.n_states))
    W[n] = cs.penalty.terminal
    for t in range(n - 1, -1, -1):
        W[t] = (cs.penalty.stage + mdp.nominal @ W[t + 1]).min(axis=1)
    return W


def _random_kernel(rng: np.random.Generator, X: int, U: int) -> np.ndarray:
    P = rng.dirichlet(np.ones(X), size=(X, U))
    P[rng.random((X, U, X)) < 0.25] = 0.0
    dead = P.sum(axis=2) == 0
    P[dead, 0] = 1.0
    return P / P.sum(axis=2, keepdims=True)


def random_instance(rng: np.random.Generator, max_states: int = 3, max_actions: int = 2,
                    max_horizon: int = 3, max_kernels: int = 2):
    """Random toy problem ``(mdp, cs, x0)``.

    ``l0`` is drawn at, below or above the root's minimum bound so that
    both feasibility outcomes occur.  The nominal kernel is always a member
    of the ambiguity set.
    """
    X = int(rng.integers(1, max_states + 1))
    U = int(rng.integers(1, max_actions + 1))
    n = int(rng.integers(1, max_horizon + 1))
    k = int(rng.integers(1, max_kernels + 1))
    if rng.random() < 0.5:
        X, U, n, k = max_states, max_actions, max_horizon, max_kernels
    nominal = _random_kernel(rng, X, U)
    cost = CostModel(rng.integers(0, 11, (X, U)) / 10, rng.integers(0, 11, X) / 10)
    penalty = PenaltyModel(rng.integers(0, 11, (X, U)) / 10, rng.integers(0, 11, X) / 10)
    kernels = [nominal] + [_random_kernel(rng, X, U) for _ in range(k - 1)]
    mdp = Mdp(X, U, n, nominal, cost)
    x0 = int(rng.integers(X))
    cs = ConstraintSpec(penalty, FiniteKernels(np.stack(kernels)), 0.0, x0)
    lam0 = min_penalty_to_go(mdp, cs)[0, x0]
    top = cs.penalty_cap(0, n)
    mode = rng.integers(5)
    if mode == 0:
        l0 = lam0
    elif mode == 1:
        l0 = lam0 - rng.uniform(0.01, 0.5)
    elif mode == 2:
        l0 = rng.uniform(lam0, max(top, lam0) + 0.1)
    else:
        # tight budgets, where the constraint usually binds
        l0 = rng.uniform(lam0, lam0 + 0.3 * max(top - lam0, 0.0))
    return mdp, cs.with_l0(float(l0)), x0
