"""Monte Carlo execution of a solved policy.

Two execution modes:

``receding``
    Every wall-clock step replans from the current state with a fresh
    horizon and fresh budget ``l0``, so only the step-0 entries
    ``(x, l0)`` are ever used and the controller is a state lookup.
``horizon``
    One pass of the horizon-``n`` augmented policy, carrying the bound
    ``l_{t+1} = lambda*_{t+1}(x_{t+1})`` forward.

Each run draws from its own PCG64 stream spawned from ``SeedSequence(seed)``,
so results do not depend on how runs are batched.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .feasibility import FEAS_TOL
from .model import ConstraintSpec, FiniteKernels, Mdp, Singleton
from .solver import AugmentedPolicy, InfeasibleQuery

ADVERSARIES = ("nominal", "uniform", "greedy")
EXECUTIONS = ("receding", "horizon")


@dataclass(frozen=True)
class AdversaryModel:
    """How the environment picks a kernel at every step.

    ``uniform`` draws independently from the finite kernel list; ``greedy``
    picks the kernel maximizing the expected successor bound the policy
    just assigned; ``nominal`` always uses the nominal kernel.
    """

    kind: str = "uniform"

    def __post_init__(self):
        if self.kind not in ADVERSARIES:
            raise ValueError(f"unknown adversary {self.kind!r}; expected one of {ADVERSARIES}")


@dataclass
class SimulationReport:
    runs: int
    steps: int
    seed: int
    adversary: str
    mode: str
    x0: int
    l0: float
    heatmap: np.ndarray  # visits per state, (X,)
    trap_visits: np.ndarray  # per run, (runs,)
    target_hits: np.ndarray  # first step at target per run, -1 if never
    target_occupancy: float  # fraction of all visits spent at the target
    total_cost: np.ndarray  # per run: stage costs + terminal cost of the last state
    budget: np.ndarray  # (runs, T + 1) bound in force at each visited step
    slack: np.ndarray  # (runs, T) l - d(x, u) - worst-case expected successor bound
    shape: Optional[tuple] = None
    trap: Optional[int] = None
    target: Optional[int] = None
    meta: dict = field(default_factory=dict)

    @property
    def trap_total(self) -> int:
        return int(self.trap_visits.sum())

    @property
    def min_slack(self) -> float:
        return float(self.slack.min()) if self.slack.size else np.inf

    def summary(self) -> dict:
        hits = self.target_hits[self.target_hits >= 0]
        return {
            "runs": self.runs,
            "steps": self.steps,
            "seed": self.seed,
            "adversary": self.adversary,
            "mode": self.mode,
            "x0": self.x0,
            "l0": self.l0,
            "visits": int(self.heatmap.sum()),
            "trap_visits": self.trap_total,
            "runs_touching_trap": int((self.trap_visits > 0).sum()),
            "target_reached": int(hits.size),
            "mean_first_hit": float(hits.mean()) if hits.size else None,
            "target_occupancy": self.target_occupancy,
            "mean_total_cost": float(self.total_cost.mean()),
            "min_slack": self.min_slack,
        }

    def to_json(self, traces: bool = False) -> str:
        doc = {"summary": self.summary(), "heatmap": self.heatmap.tolist(),
               "trap_visits_per_run": self.trap_visits.tolist(),
               "shape": list(self.shape) if self.shape else None,
               "trap": self.trap, "target": self.target, "meta": self.meta}
        if traces:
            doc["budget"] = self.budget.tolist()
            doc["slack"] = self.slack.tolist()
        return json.dumps(doc, sort_keys=True, indent=1) + "\n"


def _environment_kernels(mdp: Mdp, env: ConstraintSpec, adversary: AdversaryModel) -> np.ndarray:
    if adversary.kind == "nominal":
        return mdp.nominal[None]
    amb = env.ambiguity
    if isinstance(amb, FiniteKernels):
        return amb.kernels
    if isinstance(amb, Singleton):
        return amb.kernel[None]
    raise ValueError("the environment ambiguity set must be a finite kernel list")


def _entry(policy: AugmentedPolicy, amb, mdp: Mdp, t: int, x: int, gi: int):
    """Action, successor indices/values and constraint slack at one cell."""
    u = int(policy.actions[t][x][gi])
    idx = policy.next_index[t][x][gi]
    vals = np.array([policy.tables.grids[t + 1][s][i] for s, i in enumerate(idx)])
    l = policy.tables.grids[t][x][gi]
    residual = l - policy.constraint.penalty.stage[x, u]
    return u, idx, vals, residual - amb.worst_case(vals, x, u)


def _step(kernels, kid, states, actions, draws):
    probs = kernels[kid, states, actions]
    cum = np.cumsum(probs, axis=1)
    nxt = (draws[:, None] < cum).argmax(axis=1)
    over = draws >= cum[:, -1]
    if over.any():
        nxt[over] = [np.flatnonzero(p)[-1] for p in probs[over]]
    return nxt


def run(
    mdp: Mdp,
    env: ConstraintSpec,
    policy: AugmentedPolicy,
    x0: int,
    adversary: AdversaryModel = AdversaryModel(),
    runs: int = 5000,
    steps: int = 200,
    seed: int = 0,
    mode: str = "receding",
    l0: Optional[float] = None,
    shape: Optional[tuple] = None,
    trap: Optional[int] = None,
    target: Optional[int] = None,
) -> SimulationReport:
    """Simulate ``runs`` trajectories of ``policy`` from ``x0``.

    ``env`` supplies the penalty and the kernels the adversary draws from;
    the policy may have been solved under a different ambiguity set.  In
    ``horizon`` mode ``steps`` is forced to the policy horizon.
    """
    if mode not in EXECUTIONS:
        raise ValueError(f"unknown mode {mode!r}")
    if policy.constraint is None:
        raise ValueError("policy carries no constraint; solve it with robustcmdp.solver.solve")
    l0 = policy.tables.l0 if l0 is None else float(l0)
    n, X = policy.horizon, mdp.n_states
    T = n if mode == "horizon" else steps
    kernels = _environment_kernels(mdp, env, adversary)
    K = kernels.shape[0]
    own = policy.constraint.ambiguity

    children = np.random.SeedSequence(seed).spawn(runs)
    draws = np.stack([np.random.Generator(np.random.PCG64(c)).random((T, 2)) for c in children]) \
        if runs else np.zeros((0, T, 2))

    if mode == "receding":
        gi0 = [policy.tables.snap(0, x, l0) for x in range(X)]
        lookup_u = np.full(X, -1)
        lookup_vals = np.zeros((X, X))
        lookup_slack = np.zeros(X)
        for x in range(X):
            if policy.feasible(0, x, gi0[x]):
                u, _, vals, sl = _entry(policy, own, mdp, 0, x, gi0[x])
                lookup_u[x], lookup_vals[x], lookup_slack[x] = u, vals, sl
        greedy_k = np.zeros(X, dtype=np.int64)
        if adversary.kind == "greedy":
            for x in range(X):
                if lookup_u[x] >= 0:
                    greedy_k[x] = int(np.argmax(kernels[:, x, lookup_u[x]] @ lookup_vals[x]))

    states = np.full(runs, x0, dtype=np.int64)
    path = np.empty((runs, T + 1), dtype=np.int64)
    path[:, 0] = states
    budget = np.empty((runs, T + 1))
    budget[:, 0] = l0
    slack = np.empty((runs, T))
    cost = np.zeros(runs)
    gis = np.full(runs, policy.tables.snap(0, x0, l0), dtype=np.int64)

    for k in range(T):
        if mode == "receding":
            actions = lookup_u[states]
            if (actions < 0).any():
                bad = int(states[actions < 0][0])
                raise InfeasibleQuery(
                    f"replanning at x={bad}: minimum feasible bound "
                    f"{policy.tables.lambda_min[0, bad]:.6g} exceeds l0={l0}"
                )
            slack[:, k] = lookup_slack[states]
            succ_vals = lookup_vals[states]
            gk = greedy_k[states]
        else:
            actions = np.empty(runs, dtype=np.int64)
            succ_idx = np.empty((runs, X), dtype=np.int64)
            succ_vals = np.empty((runs, X))
            for r in range(runs):
                x, gi = int(states[r]), int(gis[r])
                if not policy.feasible(k, x, gi):
                    raise InfeasibleQuery(f"infeasible cell t={k}, x={x}")
                actions[r], succ_idx[r], succ_vals[r], slack[r, k] = _entry(policy, own, mdp, k, x, gi)
            gk = np.array([int(np.argmax(kernels[:, s, a] @ v))
                           for s, a, v in zip(states, actions, succ_vals)], dtype=np.int64) \
                if adversary.kind == "greedy" else None
        cost += mdp.cost.stage[states, actions]
        if adversary.kind == "uniform":
            kid = np.minimum((draws[:, k, 0] * K).astype(np.int64), K - 1)
        elif adversary.kind == "greedy":
            kid = gk
        else:
            kid = np.zeros(runs, dtype=np.int64)
        nxt = _step(kernels, kid, states, actions, draws[:, k, 1])
        if mode == "receding":
            budget[:, k + 1] = l0
        else:
            gis = succ_idx[np.arange(runs), nxt]
            budget[:, k + 1] = succ_vals[np.arange(runs), nxt]
        states = nxt
        path[:, k + 1] = states
    cost += mdp.cost.terminal[states]

    heat = np.bincount(path.ravel(), minlength=X).astype(np.int64)
    trap_visits = (path == trap).sum(axis=1) if trap is not None else np.zeros(runs, dtype=np.int64)
    if target is not None:
        at = path == target
        hits = np.where(at.any(axis=1), at.argmax(axis=1), -1)
        occupancy = float(at.mean()) if at.size else 0.0
    else:
        hits, occupancy = np.full(runs, -1), 0.0
    return SimulationReport(runs, T, seed, adversary.kind, mode, x0, l0, heat, trap_visits,
                            hits, occupancy, cost, budget, slack, shape, trap, target)


def emit_heatmap(report: SimulationReport, fmt: str = "csv") -> str:
    """Visit counts as CSV (row-major, with header), ASCII art or plain PGM."""
    shape = report.shape or (1, report.heatmap.size)
    grid = report.heatmap.reshape(shape)
    if fmt == "csv":
        lines = ["i,j,state,count"]
        for s, c in enumerate(report.heatmap):
            i, j = np.unravel_index(s, shape)
            lines.append(f"{i},{j},{s},{c}")
        return "\n".join(lines) + "\n"
    if fmt == "ascii":
        width = max(len(str(int(grid.max()))), 1) + 2
        marks = {report.target: "T", report.trap: "X"}
        lines = []
        for i in range(shape[0]):
            cells = []
            for j in range(shape[1]):
                s = i * shape[1] + j
                cells.append((marks.get(s, "") + str(grid[i, j])).rjust(width))
            lines.append("".join(cells))
        return "\n".join(lines) + "\n"
    if fmt == "pgm":
        peak = grid.max()
        scaled = np.zeros_like(grid) if peak == 0 else np.rint(grid * 255 / peak).astype(int)
        rows = [" ".join(str(v) for v in row) for row in scaled]
        return "\n".join([f"P2", f"{shape[1]} {shape[0]}", "255", *rows]) + "\n"
    raise ValueError(f"unknown heatmap format {fmt!r}")
