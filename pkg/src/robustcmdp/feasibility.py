"""Minimum feasible penalty bounds, bound grids and successor-bound allocation.

The bound carried alongside the state is a real number; it is discretized
per ``(t, x)`` on a grid anchored at the minimum feasible bound so that the
boundary stays exactly representable.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .model import ConstraintSpec, Mdp, PenaltyModel, relevant_support

#: Slack applied when comparing a worst-case expectation with a residual budget.
FEAS_TOL = 1e-9
#: Grid points closer than this are merged.
GRID_MERGE = 1e-12
#: Above this many candidate allocations the search falls back to greedy ascent.
MAX_CANDIDATES = 10**6


def default_delta(cs: ConstraintSpec) -> float:
    return 0.05 * (cs.penalty.max_stage - cs.penalty.min_stage + 1.0)


@dataclass(frozen=True)
class FeasibilityTables:
    """Per-step minimum bounds, caps and the bound grid.

    ``grids[t][x]`` is ascending.  At ``t = 0`` every state carries the single
    bound ``l0``; for ``t >= 1`` the grid spans ``[lambda_min, l_cap]`` and
    always contains ``lambda_min``, even when it exceeds the cap.
    """

    lambda_min: np.ndarray  # (n + 1, X)
    l_cap: np.ndarray  # (n + 1,)
    delta: float
    grids: tuple
    l0: float
    cap_at_l0: bool = True

    @property
    def horizon(self) -> int:
        return self.lambda_min.shape[0] - 1

    def grid(self, t: int, x: int) -> np.ndarray:
        return self.grids[t][x]

    def grid_sizes(self) -> list[list[int]]:
        return [[len(g) for g in row] for row in self.grids]

    def snap(self, t: int, x: int, l: float) -> int:
        """Index of the largest grid point not above ``l``, or -1."""
        return int(np.searchsorted(self.grids[t][x], l + FEAS_TOL, side="right")) - 1


@dataclass(frozen=True)
class BoundFunction:
    """Successor bounds ``lambda_{t}(x)`` for every state at step ``t``."""

    t: int
    values: np.ndarray
    indices: np.ndarray

    def __call__(self, x: int) -> float:
        return float(self.values[x])


def _uniform_grid(lo: float, hi: float, delta: float) -> np.ndarray:
    if hi < lo + GRID_MERGE:
        return np.array([lo])
    k = np.arange(int(np.floor((hi - lo) / delta)) + 2)
    pts = lo + k * delta
    pts = pts[pts < hi - GRID_MERGE]
    return np.append(pts, hi)


def _clean_grid(points, lo: float, hi: float) -> np.ndarray:
    pts = np.asarray(sorted(float(p) for p in points), dtype=float)
    pts = pts[(pts >= lo + GRID_MERGE) & (pts <= hi + GRID_MERGE)]
    out = [lo]
    for p in pts:
        if p - out[-1] > GRID_MERGE:
            out.append(float(p))
    return np.array(out)


def compute_lambda_min(
    mdp: Mdp,
    cs: ConstraintSpec,
    delta: Optional[float] = None,
    grids: Optional[Sequence[Sequence[Sequence[float]]]] = None,
    cap_at_l0: bool = True,
) -> FeasibilityTables:
    """Backward recursion for the smallest feasible penalty bound per ``(t, x)``.

    ``grids`` replaces the uniform ``delta`` grid with explicit points per
    ``(t, x)`` (clipped to the feasible range; ``lambda_min`` is always
    added).  With ``cap_at_l0=False`` the cap is only the largest achievable
    penalty-to-go, not ``l0``.
    """
    n, X, U = mdp.horizon, mdp.n_states, mdp.n_actions
    d, amb = cs.penalty, cs.ambiguity
    lam = np.empty((n + 1, X))
    lam[n] = d.terminal
    for t in range(n - 1, -1, -1):
        for x in range(X):
            lam[t, x] = min(d.stage[x, u] + amb.worst_case(lam[t + 1], x, u) for u in range(U))

    caps = np.array([cs.penalty_cap(t, n) for t in range(n + 1)])
    if cap_at_l0:
        caps = np.minimum(caps, cs.l0)
    if delta is None:
        delta = default_delta(cs)
    if not delta > 0:
        raise ValueError(f"grid resolution must be positive, got {delta}")

    table = [tuple(np.array([cs.l0]) for _ in range(X))]
    for t in range(1, n + 1):
        row = []
        for x in range(X):
            if grids is not None:
                row.append(_clean_grid(grids[t][x], lam[t, x], caps[t]))
            else:
                row.append(_uniform_grid(lam[t, x], caps[t], delta))
        table.append(tuple(row))
    for row in table:
        for g in row:
            g.setflags(write=False)
    lam.setflags(write=False)
    caps.setflags(write=False)
    return FeasibilityTables(lam, caps, float(delta), tuple(table), cs.l0, cap_at_l0)


def check_l0_feasible(tables: FeasibilityTables, x0: int, l0: float) -> bool:
    return bool(l0 >= tables.lambda_min[0, x0])


def consumption_residual(x: int, u: int, l: float, d: PenaltyModel) -> float:
    """Budget left for the successor bounds after paying ``d(x, u)``."""
    return l - d.stage[x, u]


@dataclass(frozen=True)
class Allocation:
    bound: BoundFunction
    continuation: float
    approximate: bool = False


class CandidateSet:
    """All successor-bound allocations for one ``(t, x, u)``.

    Successors are the relevant support of ``(x, u)`` in ascending state
    order; candidates are enumerated in C order over their grid indices, so
    a smaller flat index is a lexicographically smaller allocation.  When the
    product exceeds ``max_candidates`` nothing is materialized and
    :meth:`greedy` runs a marginal-improvement ascent instead.
    """

    def __init__(self, t: int, x: int, u: int, tables: FeasibilityTables, cs: ConstraintSpec,
                 mdp: Mdp, max_candidates: int = MAX_CANDIDATES):
        self.t, self.x, self.u = t, x, u
        self.cols = relevant_support(mdp, cs.ambiguity, x, u)
        self.succ_grids = [tables.grid(t + 1, int(s)) for s in self.cols]
        self.sizes = tuple(len(g) for g in self.succ_grids)
        self.weights = mdp.nominal[x, u, self.cols]
        self.amb = cs.ambiguity
        self.n_states = mdp.n_states
        self.default_indices = np.zeros(mdp.n_states, dtype=np.int64)
        self.count = int(np.prod(self.sizes, dtype=object))
        self.exact = self.count <= max_candidates
        if self.exact:
            mesh = np.meshgrid(*self.succ_grids, indexing="ij")
            self.bounds = np.stack([m.ravel() for m in mesh], axis=1)
            self.worst = self.amb.worst_case_many(self.bounds, x, u, self.cols)

    def continuation(self, next_values: Sequence[np.ndarray]) -> np.ndarray:
        """Nominal expectation of the next-step value, per candidate."""
        m = len(self.cols)
        total = np.zeros(self.sizes)
        for j, s in enumerate(self.cols):
            shape = [1] * m
            shape[j] = self.sizes[j]
            total = total + self.weights[j] * np.asarray(next_values[s]).reshape(shape)
        return total.ravel()

    def indices_for(self, flat: int) -> np.ndarray:
        """Full per-state grid indices of candidate ``flat`` (0 off-support)."""
        indices = self.default_indices.copy()
        indices[self.cols] = np.unravel_index(flat, self.sizes)
        return indices

    def feasible(self, residual: float) -> np.ndarray:
        return self.worst <= residual + FEAS_TOL

    def greedy(self, next_values: Sequence[np.ndarray], residual: float):
        """Marginal-improvement ascent from the all-minimal allocation.

        Returns ``(continuation, per-state indices)`` or None.
        """
        idx = np.zeros(len(self.cols), dtype=np.int64)
        vals = [np.asarray(next_values[s]) for s in self.cols]

        def wc(ix):
            b = np.array([g[i] for g, i in zip(self.succ_grids, ix)])
            return float(self.amb.worst_case_many(b[None, :], self.x, self.u, self.cols)[0])

        if wc(idx) > residual + FEAS_TOL:
            return None
        obj = float(sum(w * v[i] for w, v, i in zip(self.weights, vals, idx)))
        while True:
            best = None
            for j in range(len(idx)):
                for k in range(idx[j] + 1, self.sizes[j]):
                    gain = self.weights[j] * (vals[j][idx[j]] - vals[j][k])
                    if gain <= GRID_MERGE or (best is not None and gain <= best[0]):
                        continue
                    trial = idx.copy()
                    trial[j] = k
                    if wc(trial) <= residual + FEAS_TOL:
                        best = (gain, j, k)
            if best is None:
                break
            idx[best[1]] = best[2]
            obj -= best[0]
        indices = self.default_indices.copy()
        indices[self.cols] = idx
        return obj, indices


def select_bound_allocation(
    t: int,
    x: int,
    u: int,
    l: float,
    tables: FeasibilityTables,
    next_values: Sequence[np.ndarray],
    cs: ConstraintSpec,
    mdp: Mdp,
    max_candidates: int = MAX_CANDIDATES,
) -> Optional[Allocation]:
    """Cheapest successor-bound allocation for action ``u`` at ``(t, x, l)``.

    ``next_values[x']`` holds the step ``t + 1`` values on ``tables.grid(t + 1, x')``.
    Returns None if even the minimal bounds violate the robust budget.
    Equal-value allocations resolve to the lexicographically smallest one.
    """
    cand = CandidateSet(t, x, u, tables, cs, mdp, max_candidates)
    residual = consumption_residual(x, u, l, cs.penalty)
    if cand.exact:
        ok = cand.feasible(residual)
        if not ok.any():
            return None
        obj = cand.continuation(next_values)
        best = obj[ok].min()
        flat = int(np.flatnonzero(ok & (obj <= best + FEAS_TOL))[0])
        indices, value, approx = cand.indices_for(flat), float(obj[flat]), False
    else:
        found = cand.greedy(next_values, residual)
        if found is None:
            return None
        (value, indices), approx = found, True
    values = np.array([tables.grid(t + 1, s)[i] for s, i in enumerate(indices)])
    return Allocation(BoundFunction(t + 1, values, indices), value, approx)
