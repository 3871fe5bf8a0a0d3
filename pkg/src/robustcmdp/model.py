"""Finite MDP, cost/penalty tables and transition ambiguity sets.

All arrays are float64 and read-only once wrapped in one of the types below,
so solved problems can be shared freely between workers.

Kernels are stored as ``P[x, u, x']``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

#: Absolute tolerance on kernel row sums; rows within it are renormalized.
PROB_TOL = 1e-9


class ModelError(ValueError):
    """A problem definition violates a structural requirement."""


class NominalMismatchWarning(UserWarning):
    """The nominal kernel is not a member of the ambiguity set."""


def _readonly(a) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


def as_kernel(P, n_states: int, n_actions: int, name: str = "nominal") -> np.ndarray:
    """Validate a transition table and return a renormalized read-only copy.

    Raises ModelError naming the first offending ``(x, u)`` row.
    """
    P = np.asarray(P, dtype=float)
    if P.shape != (n_states, n_actions, n_states):
        raise ModelError(
            f"{name}: kernel has shape {P.shape}, expected {(n_states, n_actions, n_states)}"
        )
    if not np.all(np.isfinite(P)):
        x, u, _ = np.argwhere(~np.isfinite(P))[0]
        raise ModelError(f"{name}: non-finite probability at (x={x}, u={u})")
    bad = (P < -PROB_TOL) | (P > 1 + PROB_TOL)
    if bad.any():
        x, u, xn = np.argwhere(bad)[0]
        raise ModelError(f"{name}: probability {float(P[x, u, xn])!r} out of [0, 1] at (x={x}, u={u}, x'={xn})")
    sums = P.sum(axis=2)
    off = np.abs(sums - 1.0) > PROB_TOL
    if off.any():
        x, u = np.argwhere(off)[0]
        raise ModelError(f"{name}: row (x={x}, u={u}) sums to {float(sums[x, u])!r}, not 1")
    P = np.clip(P, 0.0, 1.0)
    # rows already exact up to rounding are kept bit-for-bit, so text round trips are lossless
    fix = np.abs(P.sum(axis=2) - 1.0) > 1e-14
    P[fix] /= P[fix].sum(axis=1, keepdims=True)
    return _readonly(P)


@dataclass(frozen=True)
class CostModel:
    """Stage cost ``c(x, u)`` and terminal cost ``c_n(x)``."""

    stage: np.ndarray
    terminal: np.ndarray

    def __post_init__(self):
        stage, terminal = _readonly(self.stage), _readonly(self.terminal)
        if stage.ndim != 2 or terminal.ndim != 1 or terminal.shape[0] != stage.shape[0]:
            raise ModelError(f"table shapes {stage.shape} and {terminal.shape} are inconsistent")
        if not (np.all(np.isfinite(stage)) and np.all(np.isfinite(terminal))):
            raise ModelError("cost/penalty tables must be finite")
        object.__setattr__(self, "stage", stage)
        object.__setattr__(self, "terminal", terminal)

    @property
    def max_stage(self) -> float:
        return float(self.stage.max())

    @property
    def min_stage(self) -> float:
        return float(self.stage.min())

    @property
    def max_terminal(self) -> float:
        return float(self.terminal.max())

    @property
    def min_terminal(self) -> float:
        return float(self.terminal.min())


class PenaltyModel(CostModel):
    """Stage penalty ``d(x, u)`` and terminal penalty ``d_n(x)``."""


# -- ambiguity sets ---------------------------------------------------------


@dataclass(frozen=True)
class Singleton:
    """Only the given kernel (normally the nominal one)."""

    kernel: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "kernel", _readonly(self.kernel))

    @property
    def n_states(self) -> int:
        return self.kernel.shape[0]

    def support(self, x: int, u: int) -> np.ndarray:
        return self.kernel[x, u] > 0

    def worst_case(self, values, x: int, u: int) -> float:
        return float(self.kernel[x, u] @ np.asarray(values, dtype=float))

    def worst_case_many(self, V: np.ndarray, x: int, u: int, cols: np.ndarray) -> np.ndarray:
        return V @ self.kernel[x, u, cols]

    def maximizing_kernel(self, values, x: int, u: int) -> np.ndarray:
        return self.kernel[x, u]


@dataclass(frozen=True)
class FiniteKernels:
    """A finite list of kernels; the adversary picks one per ``(x, u)`` and step."""

    kernels: np.ndarray  # (k, X, U, X)

    def __post_init__(self):
        K = _readonly(self.kernels)
        if K.ndim != 4 or K.shape[0] == 0:
            raise ModelError("FiniteKernels needs a non-empty (k, X, U, X) array")
        object.__setattr__(self, "kernels", K)

    @property
    def n_states(self) -> int:
        return self.kernels.shape[1]

    def __len__(self) -> int:
        return self.kernels.shape[0]

    def support(self, x: int, u: int) -> np.ndarray:
        return (self.kernels[:, x, u] > 0).any(axis=0)

    def worst_case(self, values, x: int, u: int) -> float:
        return float((self.kernels[:, x, u] @ np.asarray(values, dtype=float)).max())

    def worst_case_many(self, V: np.ndarray, x: int, u: int, cols: np.ndarray) -> np.ndarray:
        return (V @ self.kernels[:, x, u][:, cols].T).max(axis=1)

    def maximizing_kernel(self, values, x: int, u: int) -> np.ndarray:
        rows = self.kernels[:, x, u]
        return rows[int(np.argmax(rows @ np.asarray(values, dtype=float)))]


@dataclass(frozen=True)
class AllOverSupport:
    """Every distribution over a per-``(x, u)`` successor set.

    A linear functional over a simplex peaks at a vertex, so the worst case is
    the largest value on the support.
    """

    support_mask: np.ndarray  # bool (X, U, X)

    def __post_init__(self):
        S = np.array(self.support_mask, dtype=bool, copy=True)
        if S.ndim != 3:
            raise ModelError("support mask must be (X, U, X)")
        empty = ~S.any(axis=2)
        if empty.any():
            x, u = np.argwhere(empty)[0]
            raise ModelError(f"empty support set at (x={x}, u={u})")
        S.setflags(write=False)
        object.__setattr__(self, "support_mask", S)

    @property
    def n_states(self) -> int:
        return self.support_mask.shape[0]

    def support(self, x: int, u: int) -> np.ndarray:
        return self.support_mask[x, u]

    def worst_case(self, values, x: int, u: int) -> float:
        return float(np.asarray(values, dtype=float)[self.support_mask[x, u]].max())

    def worst_case_many(self, V: np.ndarray, x: int, u: int, cols: np.ndarray) -> np.ndarray:
        inside = self.support_mask[x, u, cols]
        return V[:, inside].max(axis=1)

    def maximizing_kernel(self, values, x: int, u: int) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        idx = np.flatnonzero(self.support_mask[x, u])
        row = np.zeros(self.support_mask.shape[2])
        row[idx[np.argmax(values[idx])]] = 1.0
        return row


AmbiguitySet = Union[Singleton, FiniteKernels, AllOverSupport]


def worst_case_expectation(values, x: int, u: int, ambiguity: AmbiguitySet) -> float:
    """Largest expectation of ``values`` over the ambiguity set at ``(x, u)``."""
    return ambiguity.worst_case(values, x, u)


# -- problems ---------------------------------------------------------------


@dataclass(frozen=True)
class Mdp:
    n_states: int
    n_actions: int
    horizon: int
    nominal: np.ndarray
    cost: CostModel

    def __post_init__(self):
        if self.n_states < 1 or self.n_actions < 1:
            raise ModelError("state and action spaces must be non-empty")
        if int(self.horizon) != self.horizon or self.horizon < 1:
            raise ModelError(f"horizon must be a positive integer, got {self.horizon!r}")
        object.__setattr__(self, "nominal", as_kernel(self.nominal, self.n_states, self.n_actions))
        if self.cost.stage.shape != (self.n_states, self.n_actions):
            raise ModelError(f"cost table has shape {self.cost.stage.shape}")

    @property
    def kappa(self) -> float:
        """Sentinel value marking infeasible (state, bound) cells."""
        return self.horizon * self.cost.max_stage + self.cost.max_terminal + 1.0


@dataclass(frozen=True)
class ConstraintSpec:
    penalty: PenaltyModel
    ambiguity: AmbiguitySet
    l0: float
    x0: Optional[int] = field(default=None)

    def __post_init__(self):
        if not np.isfinite(self.l0):
            raise ModelError("initial bound l0 must be finite")
        object.__setattr__(self, "l0", float(self.l0))

    def with_ambiguity(self, ambiguity: AmbiguitySet) -> "ConstraintSpec":
        return ConstraintSpec(self.penalty, ambiguity, self.l0, self.x0)

    def with_l0(self, l0: float) -> "ConstraintSpec":
        return ConstraintSpec(self.penalty, self.ambiguity, l0, self.x0)

    def penalty_cap(self, t: int, horizon: int) -> float:
        """Largest penalty-to-go achievable from step ``t``."""
        return (horizon - t) * self.penalty.max_stage + self.penalty.max_terminal


def validate_problem(mdp: Mdp, cs: ConstraintSpec, allow_nominal_mismatch: bool = False) -> None:
    """Check that the constraint matches the MDP and that the nominal kernel
    lies in the ambiguity set.

    A membership failure raises unless ``allow_nominal_mismatch`` is set, in
    which case it is downgraded to a NominalMismatchWarning.
    """
    X, U = mdp.n_states, mdp.n_actions
    if cs.penalty.stage.shape != (X, U) or cs.penalty.terminal.shape != (X,):
        raise ModelError("penalty tables do not match the state/action spaces")
    amb = cs.ambiguity
    if amb.n_states != X:
        raise ModelError(f"ambiguity set is over {amb.n_states} states, MDP has {X}")
    if isinstance(amb, FiniteKernels):
        if amb.kernels.shape[1:] != (X, U, X):
            raise ModelError(f"ambiguity kernels have shape {amb.kernels.shape[1:]}")
        for k, K in enumerate(amb.kernels):
            as_kernel(K, X, U, name=f"ambiguity kernel {k}")
        member = np.all(np.abs(amb.kernels - mdp.nominal) <= PROB_TOL, axis=(1, 2, 3)).any()
        problem = None if member else "no ambiguity kernel equals the nominal kernel"
    elif isinstance(amb, AllOverSupport):
        if amb.support_mask.shape != (X, U, X):
            raise ModelError(f"support mask has shape {amb.support_mask.shape}")
        outside = (mdp.nominal > 0) & ~amb.support_mask
        problem = None
        if outside.any():
            x, u, xn = np.argwhere(outside)[0]
            problem = f"nominal kernel puts mass outside the support at (x={x}, u={u}, x'={xn})"
    else:
        if amb.kernel.shape != (X, U, X):
            raise ModelError(f"singleton kernel has shape {amb.kernel.shape}")
        problem = None
        if not np.all(np.abs(amb.kernel - mdp.nominal) <= PROB_TOL):
            problem = "singleton kernel differs from the nominal kernel"
    if problem is not None:
        if not allow_nominal_mismatch:
            raise ModelError(problem)
        warnings.warn(problem, NominalMismatchWarning, stacklevel=2)
    if cs.x0 is not None and not 0 <= cs.x0 < X:
        raise ModelError(f"initial state {cs.x0} out of range")


def relevant_support(mdp: Mdp, ambiguity: AmbiguitySet, x: int, u: int) -> np.ndarray:
    """Indices of every successor of ``(x, u)`` reachable under the nominal
    kernel or any member of the ambiguity set."""
    return np.flatnonzero((mdp.nominal[x, u] > 0) | ambiguity.support(x, u))


def reachable_support_mask(mdp: Mdp, ambiguity: AmbiguitySet) -> np.ndarray:
    """Union of nominal and ambiguity supports, as an ``(X, U, X)`` mask."""
    X, U = mdp.n_states, mdp.n_actions
    mask = mdp.nominal > 0
    for x in range(X):
        for u in range(U):
            mask[x, u] |= ambiguity.support(x, u)
    return mask
