"""Versioned policy artifacts and CSV table dumps.

A policy artifact is a JSON document that embeds the original problem text,
so it alone is enough to simulate.  Serialization is deterministic: keys are
sorted and floats are written with ``repr``, so equal solves give
byte-identical files.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .baselines import MODES, constraint_for_mode, full_support
from .feasibility import FeasibilityTables
from .model import ConstraintSpec, Mdp
from .problem_file import ProblemDocument, parse_problem
from .solver import AugmentedPolicy, ValueTable

FORMAT = "robustcmdp-policy"
VERSION = 1
SUPPORTS = ("reachable", "full")


class ArtifactError(ValueError):
    """Malformed policy artifact or unsupported format version."""


@dataclass
class PolicyArtifact:
    problem: ProblemDocument
    mode: str
    support: str
    policy: AugmentedPolicy
    values: tuple
    allow_nominal_mismatch: bool = False

    @property
    def mdp(self) -> Mdp:
        return self.problem.mdp

    @property
    def environment(self) -> ConstraintSpec:
        """Constraint as written in the problem file (the attack model)."""
        return self.problem.constraint

    @property
    def value_table(self) -> ValueTable:
        return ValueTable(self.values, self.mdp.kappa, self.policy.tables)


def solved_constraint(mdp: Mdp, cs: ConstraintSpec, mode: str, support: str) -> ConstraintSpec:
    if support not in SUPPORTS:
        raise ValueError(f"unknown support {support!r}; expected one of {SUPPORTS}")
    mask = full_support(mdp) if support == "full" else None
    return constraint_for_mode(mdp, cs, mode, mask)


def _nested(rows, cast):
    return [[[cast(v) for v in a] for a in row] for row in rows]


def policy_to_json(problem_text: str, mode: str, support: str, values: ValueTable,
                   policy: AugmentedPolicy, allow_nominal_mismatch: bool = False) -> str:
    tab = policy.tables
    approx = [[a.tolist() for a in row] for row in policy.approximate]
    doc = {
        "format": FORMAT,
        "version": VERSION,
        "header": {
            "mode": mode,
            "support": support,
            "delta": tab.delta,
            "kappa": values.kappa,
            "l0": tab.l0,
            "cap_at_l0": tab.cap_at_l0,
            "horizon": tab.horizon,
            "grid_sizes": tab.grid_sizes(),
            "approximate": policy.any_approximate,
            "allow_nominal_mismatch": allow_nominal_mismatch,
        },
        "problem": problem_text,
        "lambda_min": tab.lambda_min.tolist(),
        "l_cap": tab.l_cap.tolist(),
        "grids": _nested(tab.grids, float),
        "values": _nested(values.values, float),
        "actions": _nested(policy.actions, int),
        "next_index": [[a.tolist() for a in row] for row in policy.next_index],
        "approximate_cells": approx,
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n"


def _frozen(a, dtype) -> np.ndarray:
    arr = np.array(a, dtype=dtype)
    arr.setflags(write=False)
    return arr


def policy_from_json(text: str) -> PolicyArtifact:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ArtifactError(f"policy artifact is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format") != FORMAT:
        raise ArtifactError(f"not a {FORMAT} artifact")
    if doc.get("version") != VERSION:
        raise ArtifactError(f"unsupported policy artifact version {doc.get('version')!r}; "
                            f"this reader supports version {VERSION}")
    try:
        head = doc["header"]
        mode, support = head["mode"], head["support"]
        if mode not in MODES:
            raise ArtifactError(f"unknown mode {mode!r} in artifact")
        allow = bool(head.get("allow_nominal_mismatch", False))
        problem = parse_problem(doc["problem"], allow_nominal_mismatch=allow)
        cs = solved_constraint(problem.mdp, problem.constraint, mode, support)
        tables = FeasibilityTables(
            _frozen(doc["lambda_min"], float),
            _frozen(doc["l_cap"], float),
            float(head["delta"]),
            tuple(tuple(_frozen(g, float) for g in row) for row in doc["grids"]),
            float(head["l0"]),
            bool(head["cap_at_l0"]),
        )
        per_cell = lambda key, dt: tuple(tuple(_frozen(a, dt) for a in row) for row in doc[key])
        policy = AugmentedPolicy(tables, per_cell("actions", np.int64),
                                 per_cell("next_index", np.int64),
                                 per_cell("approximate_cells", bool), cs)
        values = per_cell("values", float)
    except (KeyError, TypeError) as exc:
        raise ArtifactError(f"policy artifact is missing or mangles field {exc}") from exc
    if tables.grid_sizes() != head["grid_sizes"]:
        raise ArtifactError("grid sizes in the header disagree with the stored grids")
    return PolicyArtifact(problem, mode, support, policy, values, allow)


def values_csv(values: ValueTable) -> str:
    lines = ["t,x,grid_index,bound,value,feasible"]
    for t, row in enumerate(values.values):
        for x, vals in enumerate(row):
            for gi, v in enumerate(vals):
                bound = float(values.tables.grids[t][x][gi])
                lines.append(f"{t},{x},{gi},{bound!r},{float(v)!r},{int(v < values.kappa)}")
    return "\n".join(lines) + "\n"


def feasibility_csv(tables: FeasibilityTables) -> str:
    lines = ["t,x,lambda_min,l_cap,grid_size"]
    for t in range(tables.horizon + 1):
        for x in range(tables.lambda_min.shape[1]):
            lines.append(f"{t},{x},{float(tables.lambda_min[t, x])!r},"
                         f"{float(tables.l_cap[t])!r},{len(tables.grids[t][x])}")
    return "\n".join(lines) + "\n"
