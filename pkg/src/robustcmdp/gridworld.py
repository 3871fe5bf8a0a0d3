"""Reach-avoid gridworld with actuator slip and an attacked slip law.

Cells are ``(i, j)`` with ``0 <= i < shape[0]`` and ``0 <= j < shape[1]``,
indexed row-major.  A move action ``u`` lands on ``x + u`` with the intended
probability and slips to ``x + rot(u)`` or ``x - rot(u)``, where ``rot(u1, u2)
= (-u2, u1)`` is the clockwise rotation.  The stay action never slips.

Mass headed off the grid is redirected: a slip goes to the other slip cell if
that is on the grid, else to the intended cell, else it stays put; an
off-grid intended move stays put.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import ConstraintSpec, CostModel, FiniteKernels, Mdp, ModelError, PenaltyModel

ACTIONS: tuple[tuple[int, int], ...] = ((-1, 0), (1, 0), (0, 0), (0, 1), (0, -1))

ATTACK_TRIPLES: tuple[tuple[float, float, float], ...] = (
    (0.7, 0.3, 0.0),
    (0.7, 0.2, 0.1),
    (0.7, 0.1, 0.2),
    (0.7, 0.0, 0.3),
    (0.8, 0.2, 0.0),
    (0.8, 0.1, 0.1),
    (0.8, 0.0, 0.2),
)


@dataclass(frozen=True)
class GridSpec:
    shape: tuple[int, int] = (4, 4)
    target: tuple[int, int] = (3, 2)
    trap: tuple[int, int] = (2, 1)
    horizon: int = 10
    p_intend: float = 0.8
    p_slip: float = 0.1
    ambiguity: tuple = field(default=ATTACK_TRIPLES)
    l0: float = 2.5
    start: tuple[int, int] = (1, 0)

    def __post_init__(self):
        if abs(self.p_intend + 2 * self.p_slip - 1.0) > 1e-12:
            raise ModelError("p_intend + 2 * p_slip must equal 1")
        for tri in self.ambiguity:
            if len(tri) != 3 or min(tri) < 0 or abs(sum(tri) - 1.0) > 1e-12:
                raise ModelError(f"ambiguity triple {tri} is not a distribution")
        if not self.ambiguity:
            raise ModelError("ambiguity list is empty")
        for name in ("target", "trap", "start"):
            if not self.contains(getattr(self, name)):
                raise ModelError(f"{name} {getattr(self, name)} is outside a {self.shape} grid")
        if tuple(self.target) == tuple(self.trap):
            raise ModelError("target and trap must differ")

    @property
    def n_states(self) -> int:
        return self.shape[0] * self.shape[1]

    def contains(self, cell) -> bool:
        return 0 <= cell[0] < self.shape[0] and 0 <= cell[1] < self.shape[1]

    def index(self, cell) -> int:
        return int(np.ravel_multi_index(tuple(cell), self.shape))

    def cell(self, index: int) -> tuple[int, int]:
        i, j = np.unravel_index(index, self.shape)
        return int(i), int(j)


def manhattan(a, b) -> int:
    return abs(a[0] - b[0]) + abs(a[1] - b[1])


def clockwise(u: tuple[int, int]) -> tuple[int, int]:
    return (-u[1], u[0])


def _add(a, b):
    return (a[0] + b[0], a[1] + b[1])


def transition_row(spec: GridSpec, cell, u, triple) -> np.ndarray:
    """Next-cell distribution for one ``(cell, action)`` under a slip triple."""
    row = np.zeros(spec.n_states)
    if u == (0, 0):
        row[spec.index(cell)] = 1.0
        return row
    rot = clockwise(u)
    intended = _add(cell, u)
    slips = (_add(cell, rot), _add(cell, (-rot[0], -rot[1])))
    p_int, p_cl, p_ccl = triple
    row[spec.index(intended if spec.contains(intended) else cell)] += p_int
    for k, mass in enumerate((p_cl, p_ccl)):
        if mass == 0:
            continue
        here, other = slips[k], slips[1 - k]
        if spec.contains(here):
            dest = here
        elif spec.contains(other):
            dest = other
        elif spec.contains(intended):
            dest = intended
        else:
            dest = cell
        row[spec.index(dest)] += mass
    return row


def kernel(spec: GridSpec, triple) -> np.ndarray:
    P = np.zeros((spec.n_states, len(ACTIONS), spec.n_states))
    for x in range(spec.n_states):
        c = spec.cell(x)
        for a, u in enumerate(ACTIONS):
            P[x, a] = transition_row(spec, c, u, triple)
    return P


def build(spec: GridSpec = GridSpec()):
    """Return ``(mdp, constraint, support_mask)`` for the benchmark.

    ``support_mask[x, u]`` marks the physically reachable successors (the
    union over the nominal and attacked slip laws).
    """
    X, U = spec.n_states, len(ACTIONS)
    nominal = kernel(spec, (spec.p_intend, spec.p_slip, spec.p_slip))
    attacked = np.stack([kernel(spec, tri) for tri in spec.ambiguity])
    terminal_cost = np.array([manhattan(spec.cell(x), spec.target) for x in range(X)], dtype=float)
    trap = np.zeros(X)
    trap[spec.index(spec.trap)] = 1.0
    mdp = Mdp(X, U, spec.horizon, nominal, CostModel(np.zeros((X, U)), terminal_cost))
    cs = ConstraintSpec(
        PenaltyModel(np.repeat(trap[:, None], U, axis=1), trap),
        FiniteKernels(attacked),
        spec.l0,
        spec.index(spec.start),
    )
    support = (nominal > 0) | (attacked > 0).any(axis=0)
    return mdp, cs, support


def meta(spec: GridSpec) -> dict:
    """``[grid]`` section entries for the problem file."""
    return {
        "shape": list(spec.shape),
        "target": list(spec.target),
        "trap": list(spec.trap),
    }
