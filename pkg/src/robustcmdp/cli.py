"""Command-line pipeline: gridworld -> solve -> simulate -> report.

Stages talk through files (``-`` means standard input or output), so::

    robustcmdp gridworld | robustcmdp solve --mode robust | robustcmdp simulate --runs 100

works end to end.  Exit codes: 0 success, 1 usage error, 2 infeasible
budget, 3 I/O or schema error, 4 a ``verify`` mismatch.
"""

from __future__ import annotations

import argparse
import json
import sys
from typing import Optional, Sequence

import numpy as np

from . import gridworld as gw
from .artifacts import (
    SUPPORTS,
    ArtifactError,
    feasibility_csv,
    policy_from_json,
    policy_to_json,
    solved_constraint,
    values_csv,
)
from .baselines import MODES
from .feasibility import check_l0_feasible, compute_lambda_min
from .model import ModelError
from .oracle import CapExceeded, enumerate_and_evaluate, penalty_lattice, random_instance
from .problem_file import dump_problem, parse_problem
from .simulate import ADVERSARIES, EXECUTIONS, AdversaryModel, emit_heatmap, run
from .solver import THREADS_ENV, InfeasibleBudget, InfeasibleQuery, solve

EXIT_OK, EXIT_USAGE, EXIT_INFEASIBLE, EXIT_IO, EXIT_MISMATCH = 0, 1, 2, 3, 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _pair(text: str) -> tuple[int, int]:
    parts = text.replace("x", ",").split(",")
    try:
        a, b = (int(p) for p in parts)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected two integers like 3,2, got {text!r}")
    return a, b


def _read(path: str) -> str:
    if path == "-":
        return sys.stdin.read()
    with open(path, encoding="utf-8") as fh:
        return fh.read()


def _write(path: Optional[str], text: str) -> None:
    if path is None:
        return
    if path == "-":
        sys.stdout.write(text)
        sys.stdout.flush()
        return
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _state(arg: Optional[str], meta: dict, n_states: int) -> Optional[int]:
    """Resolve ``--x0`` given as a state index or as ``i,j`` on a grid."""
    if arg is None:
        return None
    if "," in arg:
        if "shape" not in meta:
            raise argparse.ArgumentTypeError("cell coordinates need a [grid] shape entry")
        x = int(np.ravel_multi_index(_pair(arg), tuple(meta["shape"])))
    else:
        x = int(arg)
    if not 0 <= x < n_states:
        raise argparse.ArgumentTypeError(f"x0={x} is outside 0..{n_states - 1}")
    return x


def cmd_gridworld(args) -> int:
    spec = gw.GridSpec(shape=args.size, target=args.target, trap=args.trap,
                       horizon=args.horizon, l0=args.l0, start=args.start)
    mdp, cs, _ = gw.build(spec)
    _write(args.out, dump_problem(mdp, cs, gw.meta(spec)))
    return EXIT_OK


def _tables(mdp, cs, args):
    grids = penalty_lattice(mdp, cs) if getattr(args, "exact_lattice", False) else None
    return compute_lambda_min(mdp, cs, delta=args.delta, grids=grids, cap_at_l0=not args.no_cap)


def cmd_solve(args) -> int:
    text = _read(args.problem)
    doc = parse_problem(text, allow_nominal_mismatch=args.allow_nominal_mismatch)
    cs = solved_constraint(doc.mdp, doc.constraint, args.mode, args.support)
    tables = _tables(doc.mdp, cs, args)
    x0 = _state(args.x0, doc.meta, doc.mdp.n_states)
    x0 = doc.constraint.x0 if x0 is None else x0
    if x0 is not None and not check_l0_feasible(tables, x0, cs.l0):
        raise InfeasibleBudget(
            f"l0={cs.l0:g} is below lambda_min[0][x0]={tables.lambda_min[0, x0]:.6g} "
            f"at x0={x0} under the {args.mode} constraint"
        )
    values, policy = solve(doc.mdp, cs, tables, threads=args.threads)
    if policy.any_approximate:
        print("warning: some cells used the greedy allocation fallback", file=sys.stderr)
    if args.values:
        _write(args.values, values_csv(values))
    _write(args.out, policy_to_json(text, args.mode, args.support, values, policy,
                                    args.allow_nominal_mismatch))
    return EXIT_OK


def cmd_dump_feasibility(args) -> int:
    doc = parse_problem(_read(args.problem), allow_nominal_mismatch=args.allow_nominal_mismatch)
    cs = solved_constraint(doc.mdp, doc.constraint, args.mode, args.support)
    _write(args.out, feasibility_csv(_tables(doc.mdp, cs, args)))
    return EXIT_OK


def cmd_simulate(args) -> int:
    art = policy_from_json(_read(args.policy))
    meta = art.problem.meta
    mdp = art.mdp
    x0 = _state(args.x0, meta, mdp.n_states)
    if x0 is None:
        x0 = art.environment.x0 if art.environment.x0 is not None else 0
    shape = tuple(meta["shape"]) if "shape" in meta else None
    cell = lambda key: int(np.ravel_multi_index(tuple(meta[key]), shape)) \
        if shape and key in meta else None
    if args.out == "-" and args.heatmap and args.heatmap_out in (None, "-"):
        raise argparse.ArgumentTypeError("report and heatmap cannot both go to stdout; "
                                         "pass --out or --heatmap-out")
    report = run(mdp, art.environment, art.policy, x0, AdversaryModel(args.adversary),
                 runs=args.runs, steps=args.steps, seed=args.seed, mode=args.execution,
                 shape=shape, trap=cell("trap"), target=cell("target"))
    report.meta = {"policy_mode": art.mode, "support": art.support}
    if args.label:
        report.meta["label"] = args.label
    _write(args.out, report.to_json(traces=args.traces))
    if args.heatmap:
        _write(args.heatmap_out or "-", emit_heatmap(report, args.heatmap))
    return EXIT_OK


REPORT_COLUMNS = ("label", "policy_mode", "execution", "adversary", "x0", "runs", "steps",
                  "trap_visits", "runs_touching_trap", "target_reached", "min_slack")


def cmd_report(args) -> int:
    rows = []
    for path in args.reports:
        doc = json.loads(_read(path))
        s, meta = doc["summary"], doc.get("meta", {})
        rows.append({
            "label": meta.get("label", path), "policy_mode": meta.get("policy_mode", "?"),
            "execution": s["mode"], "adversary": s["adversary"], "x0": s["x0"],
            "runs": s["runs"], "steps": s["steps"], "trap_visits": s["trap_visits"],
            "runs_touching_trap": s["runs_touching_trap"],
            "target_reached": s["target_reached"], "min_slack": s["min_slack"],
        })
    if args.format == "json":
        _write(args.out, json.dumps(rows, sort_keys=True, indent=1) + "\n")
        return EXIT_OK
    fmt = lambda v: f"{v:.4g}" if isinstance(v, float) else str(v)
    table = [list(REPORT_COLUMNS)] + [[fmt(r[c]) for c in REPORT_COLUMNS] for r in rows]
    widths = [max(len(row[i]) for row in table) for i in range(len(REPORT_COLUMNS))]
    lines = ["  ".join(v.ljust(w) for v, w in zip(row, widths)).rstrip() for row in table]
    _write(args.out, "\n".join(lines) + "\n")
    return EXIT_OK


def verify_instance(seed: int) -> dict:
    """Compare the exact-lattice solver with brute force on one random instance."""
    rng = np.random.default_rng(seed)
    mdp, cs, x0 = random_instance(rng)
    oracle = enumerate_and_evaluate(mdp, cs, x0, cs.l0)
    tables = compute_lambda_min(mdp, cs, grids=penalty_lattice(mdp, cs), cap_at_l0=False)
    values, _ = solve(mdp, cs, tables)
    v = values.value(0, x0, cs.l0)
    feasible = v < values.kappa
    lam_err = float(np.abs(tables.lambda_min - oracle.min_penalty).max())
    val_err = abs(v - oracle.value) if feasible and oracle.feasible else 0.0
    ok = feasible == oracle.feasible and val_err <= 1e-7 and lam_err <= 1e-7
    return {"seed": seed, "ok": bool(ok), "feasible": bool(feasible),
            "oracle_feasible": bool(oracle.feasible), "value": float(v),
            "oracle_value": float(oracle.value), "value_error": float(val_err),
            "lambda_min_error": lam_err}


def cmd_verify(args) -> int:
    bad = 0
    for seed in range(args.seed, args.seed + args.count):
        r = verify_instance(seed)
        bad += not r["ok"]
        status = "ok" if r["ok"] else "MISMATCH"
        print(f"seed {seed}: {status} feasible={r['feasible']} value_err={r['value_error']:.2e} "
              f"lambda_min_err={r['lambda_min_error']:.2e}")
    print(f"{args.count - bad}/{args.count} instances agree with brute force")
    return EXIT_MISMATCH if bad else EXIT_OK


def _solver_flags(p, with_x0: bool = True):
    p.add_argument("problem", nargs="?", default="-", help="problem file, '-' for stdin")
    p.add_argument("--mode", choices=MODES, default="robust")
    p.add_argument("--support", choices=SUPPORTS, default="reachable",
                   help="successor support for the conservative mode")
    p.add_argument("--delta", type=float, default=None, help="bound grid resolution")
    p.add_argument("--no-cap", action="store_true", help="do not cap bound grids at l0")
    p.add_argument("--exact-lattice", action="store_true",
                   help="use the exact achievable-penalty lattice as bound grid (small problems)")
    p.add_argument("--allow-nominal-mismatch", action="store_true")
    p.add_argument("-o", "--out", default="-")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="robustcmdp", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gridworld", help="emit the reach-avoid benchmark problem file")
    d = gw.GridSpec()
    p.add_argument("--size", type=_pair, default=d.shape, help="rows,cols (default 4,4)")
    p.add_argument("--target", type=_pair, default=d.target)
    p.add_argument("--trap", type=_pair, default=d.trap)
    p.add_argument("--start", type=_pair, default=d.start)
    p.add_argument("--l0", type=float, default=d.l0)
    p.add_argument("--horizon", type=int, default=d.horizon)
    p.add_argument("-o", "--out", default="-")
    p.set_defaults(func=cmd_gridworld)

    p = sub.add_parser("solve", help="solve a problem file into a policy artifact")
    _solver_flags(p)
    p.add_argument("--x0", default=None, help="state index or i,j; defaults to the file's x0")
    p.add_argument("--values", default=None, help="also write the value table as CSV")
    p.add_argument("--threads", type=int, default=None, help=f"worker threads (env {THREADS_ENV})")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("dump-feasibility", help="CSV of lambda_min, l_cap and grid sizes")
    _solver_flags(p)
    p.set_defaults(func=cmd_dump_feasibility)

    p = sub.add_parser("simulate", help="Monte Carlo runs of a policy artifact")
    p.add_argument("--policy", default="-", help="policy artifact, '-' for stdin")
    p.add_argument("--runs", type=int, default=5000)
    p.add_argument("--steps", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--adversary", choices=ADVERSARIES, default="uniform")
    p.add_argument("--execution", choices=EXECUTIONS, default="receding")
    p.add_argument("--x0", default=None, help="state index or i,j")
    p.add_argument("--heatmap", choices=("csv", "ascii", "pgm"), default=None)
    p.add_argument("--heatmap-out", default=None)
    p.add_argument("--traces", action="store_true", help="include budget and slack traces")
    p.add_argument("--label", default=None)
    p.add_argument("-o", "--out", default="-")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify", help="random solver-vs-brute-force self check")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=int, default=20)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("report", help="tabulate simulation reports")
    p.add_argument("reports", nargs="+")
    p.add_argument("--format", choices=("table", "json"), default="table")
    p.add_argument("-o", "--out", default="-")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except argparse.ArgumentTypeError as exc:
        parser.print_usage(sys.stderr)
        print(f"robustcmdp: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (InfeasibleBudget, InfeasibleQuery) as exc:
        print(f"robustcmdp: infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (ModelError, ArtifactError, CapExceeded, OSError, UnicodeDecodeError, json.JSONDecodeError) as exc:
        print(f"robustcmdp: error: {exc}", file=sys.stderr)
        return EXIT_IO
    except KeyError as exc:
        print(f"robustcmdp: error: missing field {exc}", file=sys.stderr)
        return EXIT_IO
