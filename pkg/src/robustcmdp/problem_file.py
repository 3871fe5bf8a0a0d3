"""Line-oriented text format for problem instances.

Example::

    [spaces]
    states 2
    actions 1
    [horizon]
    n 3
    [nominal]
    # x u x' p
    0 0 1 1.0
    1 0 1 1.0
    [cost]
    0 0 1.5
    [terminal_cost]
    1 2.0
    [penalty]
    [terminal_penalty]
    [ambiguity]
    variant singleton
    [budget]
    l0 0.0
    x0 0

Missing cost and penalty entries are zero.  ``[ambiguity]`` takes
``variant finite`` followed by one ``kernel`` line per kernel, each followed by
sparse triples; ``variant support`` followed by ``x u x'...`` lines; or
``variant singleton``.  An optional ``[grid]`` section carries free-form
``key value...`` metadata (used by the gridworld generator).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import (
    AllOverSupport,
    ConstraintSpec,
    CostModel,
    FiniteKernels,
    Mdp,
    PROB_TOL,
    ModelError,
    PenaltyModel,
    Singleton,
    as_kernel,
    validate_problem,
)

SECTIONS = (
    "spaces",
    "horizon",
    "nominal",
    "cost",
    "terminal_cost",
    "penalty",
    "terminal_penalty",
    "ambiguity",
    "budget",
    "grid",
)
REQUIRED = ("spaces", "horizon", "nominal", "ambiguity", "budget")


class SchemaError(ModelError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass
class ProblemDocument:
    mdp: Mdp
    constraint: ConstraintSpec
    meta: dict = field(default_factory=dict)


def _split_sections(text: str) -> dict[str, list[tuple[int, list[str]]]]:
    sections: dict[str, list[tuple[int, list[str]]]] = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise SchemaError(f"malformed section header {raw.strip()!r}", lineno)
            name = line[1:-1].strip()
            if name not in SECTIONS:
                raise SchemaError(f"unknown section [{name}]", lineno)
            if name in sections:
                raise SchemaError(f"duplicate section [{name}]", lineno)
            sections[name] = []
            current = name
            continue
        if current is None:
            raise SchemaError("content before the first section header", lineno)
        sections[current].append((lineno, line.split()))
    for name in REQUIRED:
        if name not in sections:
            raise SchemaError(f"missing required section [{name}]")
    return sections


def _keyvals(rows, section: str) -> dict[str, tuple[int, list[str]]]:
    out = {}
    for lineno, tok in rows:
        if tok[0] in out:
            raise SchemaError(f"duplicate key {tok[0]!r} in [{section}]", lineno)
        out[tok[0]] = (lineno, tok[1:])
    return out


def _int(tok: str, lineno: int, what: str, upper: int | None = None) -> int:
    try:
        v = int(tok)
    except ValueError:
        raise SchemaError(f"{what} must be an integer, got {tok!r}", lineno) from None
    if upper is not None and not 0 <= v < upper:
        raise SchemaError(f"{what} {v} out of range [0, {upper})", lineno)
    return v


def _float(tok: str, lineno: int, what: str) -> float:
    try:
        v = float(tok)
    except ValueError:
        raise SchemaError(f"{what} must be a number, got {tok!r}", lineno) from None
    if not np.isfinite(v):
        raise SchemaError(f"{what} must be finite", lineno)
    return v


def _scalar(kv, key: str, section: str, cast, default=None, **kw):
    if key not in kv:
        if default is not None:
            return default
        raise SchemaError(f"[{section}] is missing {key!r}")
    lineno, vals = kv[key]
    if len(vals) != 1:
        raise SchemaError(f"{key!r} takes exactly one value", lineno)
    return cast(vals[0], lineno, key, **kw)


def _triples(rows, X: int, U: int, name: str) -> np.ndarray:
    P = np.zeros((X, U, X))
    seen = set()
    for lineno, tok in rows:
        if len(tok) != 4:
            raise SchemaError(f"{name}: expected 'x u x_next p', got {' '.join(tok)!r}", lineno)
        x = _int(tok[0], lineno, "state", X)
        u = _int(tok[1], lineno, "action", U)
        xn = _int(tok[2], lineno, "next state", X)
        if (x, u, xn) in seen:
            raise SchemaError(f"{name}: duplicate entry for ({x}, {u}, {xn})", lineno)
        seen.add((x, u, xn))
        P[x, u, xn] = _float(tok[3], lineno, "probability")
    return P


def _kernel(rows, X: int, U: int, name: str) -> np.ndarray:
    """Parse sparse triples and validate rows, naming the line of a bad row."""
    P = _triples(rows, X, U, name)
    off = np.abs(P.sum(axis=2) - 1.0) > PROB_TOL
    if off.any():
        x, u = (int(v) for v in np.argwhere(off)[0])
        lines = [ln for ln, tok in rows if int(tok[0]) == x and int(tok[1]) == u]
        total = float(P[x, u].sum())
        where = lines[0] if lines else (rows[-1][0] if rows else None)
        raise SchemaError(f"{name}: row (x={x}, u={u}) sums to {total!r}, not 1", where)
    return as_kernel(P, X, U, name=name)


def _stage_table(rows, X: int, U: int, name: str) -> np.ndarray:
    table = np.zeros((X, U))
    for lineno, tok in rows:
        if len(tok) != 3:
            raise SchemaError(f"[{name}]: expected 'x u value'", lineno)
        table[_int(tok[0], lineno, "state", X), _int(tok[1], lineno, "action", U)] = _float(
            tok[2], lineno, "value"
        )
    return table


def _terminal_table(rows, X: int, name: str) -> np.ndarray:
    table = np.zeros(X)
    for lineno, tok in rows:
        if len(tok) != 2:
            raise SchemaError(f"[{name}]: expected 'x value'", lineno)
        table[_int(tok[0], lineno, "state", X)] = _float(tok[1], lineno, "value")
    return table


def _ambiguity(rows, X: int, U: int, nominal: np.ndarray):
    if not rows or rows[0][1][0] != "variant" or len(rows[0][1]) != 2:
        raise SchemaError("[ambiguity] must start with 'variant finite|support|singleton'",
                          rows[0][0] if rows else None)
    lineno, tok = rows[0]
    variant = tok[1]
    body = rows[1:]
    if variant == "singleton":
        if body:
            raise SchemaError("singleton ambiguity takes no entries", body[0][0])
        return Singleton(nominal)
    if variant == "support":
        mask = np.zeros((X, U, X), dtype=bool)
        for ln, t in body:
            if len(t) < 3:
                raise SchemaError("support line needs 'x u x_next...'", ln)
            x, u = _int(t[0], ln, "state", X), _int(t[1], ln, "action", U)
            for s in t[2:]:
                mask[x, u, _int(s, ln, "next state", X)] = True
        empty = ~mask.any(axis=2)
        if empty.any():
            x, u = np.argwhere(empty)[0]
            raise SchemaError(f"support set for (x={x}, u={u}) is empty", lineno)
        return AllOverSupport(mask)
    if variant == "finite":
        groups: list[list] = []
        for ln, t in body:
            if t == ["kernel"]:
                groups.append([])
            elif not groups:
                raise SchemaError("kernel entries before the first 'kernel' line", ln)
            else:
                groups[-1].append((ln, t))
        if not groups:
            raise SchemaError("finite ambiguity set has no kernels", lineno)
        kernels = []
        for k, g in enumerate(groups):
            kernels.append(_kernel(g, X, U, f"ambiguity kernel {k}"))
        return FiniteKernels(np.stack(kernels))
    raise SchemaError(f"unknown ambiguity variant {variant!r}", lineno)


def parse_problem(text: str, allow_nominal_mismatch: bool = False) -> ProblemDocument:
    sec = _split_sections(text)
    spaces = _keyvals(sec["spaces"], "spaces")
    X = _scalar(spaces, "states", "spaces", _int)
    U = _scalar(spaces, "actions", "spaces", _int)
    if X < 1 or U < 1:
        raise SchemaError("state and action counts must be positive")
    n = _scalar(_keyvals(sec["horizon"], "horizon"), "n", "horizon", _int)
    if n < 1:
        raise SchemaError("horizon must be at least 1")

    nominal = _kernel(sec["nominal"], X, U, "nominal")
    cost = CostModel(
        _stage_table(sec.get("cost", []), X, U, "cost"),
        _terminal_table(sec.get("terminal_cost", []), X, "terminal_cost"),
    )
    penalty = PenaltyModel(
        _stage_table(sec.get("penalty", []), X, U, "penalty"),
        _terminal_table(sec.get("terminal_penalty", []), X, "terminal_penalty"),
    )
    ambiguity = _ambiguity(sec["ambiguity"], X, U, nominal)
    budget = _keyvals(sec["budget"], "budget")
    l0 = _scalar(budget, "l0", "budget", _float)
    x0 = None
    if "x0" in budget:
        x0 = _scalar(budget, "x0", "budget", _int, upper=X)
    meta = {}
    for lineno, tok in sec.get("grid", []):
        meta[tok[0]] = [int(v) if v.lstrip("-").isdigit() else v for v in tok[1:]]

    mdp = Mdp(X, U, n, nominal, cost)
    cs = ConstraintSpec(penalty, ambiguity, l0, x0)
    validate_problem(mdp, cs, allow_nominal_mismatch=allow_nominal_mismatch)
    return ProblemDocument(mdp, cs, meta)


def load_problem(text: str, allow_nominal_mismatch: bool = False) -> tuple[Mdp, ConstraintSpec]:
    """Parse a problem document into ``(Mdp, ConstraintSpec)``."""
    doc = parse_problem(text, allow_nominal_mismatch=allow_nominal_mismatch)
    return doc.mdp, doc.constraint


def _fmt(v: float) -> str:
    return repr(float(v))


def _emit_triples(lines: list[str], P: np.ndarray) -> None:
    for x, u, xn in zip(*np.nonzero(P)):
        lines.append(f"{x} {u} {xn} {_fmt(P[x, u, xn])}")


def dump_problem(mdp: Mdp, cs: ConstraintSpec, meta: dict | None = None) -> str:
    """Serialize a problem; ``parse_problem(dump_problem(...))`` round-trips."""
    lines = ["[spaces]", f"states {mdp.n_states}", f"actions {mdp.n_actions}",
             "[horizon]", f"n {mdp.horizon}", "[nominal]"]
    _emit_triples(lines, mdp.nominal)
    for name, table in (("cost", mdp.cost.stage), ("penalty", cs.penalty.stage)):
        lines.append(f"[{name}]")
        for x, u in zip(*np.nonzero(table)):
            lines.append(f"{x} {u} {_fmt(table[x, u])}")
        lines.append(f"[terminal_{name}]")
        term = mdp.cost.terminal if name == "cost" else cs.penalty.terminal
        for x in np.flatnonzero(term):
            lines.append(f"{x} {_fmt(term[x])}")
    lines.append("[ambiguity]")
    amb = cs.ambiguity
    if isinstance(amb, Singleton):
        lines.append("variant singleton")
    elif isinstance(amb, AllOverSupport):
        lines.append("variant support")
        for x in range(mdp.n_states):
            for u in range(mdp.n_actions):
                succ = " ".join(str(s) for s in np.flatnonzero(amb.support_mask[x, u]))
                lines.append(f"{x} {u} {succ}")
    else:
        lines.append("variant finite")
        for K in amb.kernels:
            lines.append("kernel")
            _emit_triples(lines, K)
    lines += ["[budget]", f"l0 {_fmt(cs.l0)}"]
    if cs.x0 is not None:
        lines.append(f"x0 {cs.x0}")
    if meta:
        lines.append("[grid]")
        for key, vals in meta.items():
            lines.append(" ".join([key, *map(str, vals)]))
    return "\n".join(lines) + "\n"
