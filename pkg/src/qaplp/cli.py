"""Command line: ``qaplp gen|build|solve|export|audit|table|sweep|growth``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import experiments as ex
from .analysis import audit
from .instance import brute_force_optimum, make_uniform, write_instance
from .model import build_model
from .mps import export_mps
from .simplex import SolverOptions, verify_solution

log = logging.getLogger("qaplp")


def _add_source(p: argparse.ArgumentParser, positional: bool = True) -> None:
    if positional:
        p.add_argument("instance", nargs="?", help="instance file (omit to generate from --n/--seed)")
    p.add_argument("--n", type=int, default=4)
    p.add_argument("--mode", choices=ex.MODES, default="no-opcost")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--uniform", action="store_true", help="uniform instance QAPn{n}x (f=50, d=10)")
    p.add_argument("--symmetric", action="store_true", help="draw a symmetric distance matrix")


def _add_model(p: argparse.ArgumentParser) -> None:
    p.add_argument("--no-cuts", dest="valid_cuts", action="store_false", help="omit the valid-inequality rows")
    p.add_argument("--memory-limit-mb", type=int, default=ex.DEFAULT_MEMORY_LIMIT_MB)


def _add_solver(p: argparse.ArgumentParser) -> None:
    defaults = SolverOptions(form="dual")
    p.add_argument("--form", choices=("primal", "dual"), default=defaults.form)
    p.add_argument("--pivot", choices=("devex", "bland"), default=defaults.pivot)
    p.add_argument("--tol-feas", type=float, default=defaults.tol_feas)
    p.add_argument("--tol-pivot", type=float, default=defaults.tol_pivot)
    p.add_argument("--iter-limit", type=int, default=defaults.iter_limit)
    p.add_argument("--oracle-limit", type=int, default=ex.DEFAULT_ORACLE_LIMIT)


def _solver_options(args) -> SolverOptions:
    return SolverOptions(form=args.form, pivot=args.pivot, tol_feas=args.tol_feas,
                         tol_pivot=args.tol_pivot, iter_limit=args.iter_limit)


def _config(args, **extra) -> ex.ExperimentConfig:
    instance = getattr(args, "instance", None)
    source = "file" if instance else "uniform" if args.uniform else "random"
    return ex.ExperimentConfig(
        n=args.n, source=source, mode=args.mode, seed=args.seed, path=instance,
        symmetric=args.symmetric, valid_cuts=getattr(args, "valid_cuts", True),
        oracle_limit=getattr(args, "oracle_limit", ex.DEFAULT_ORACLE_LIMIT),
        memory_limit_mb=getattr(args, "memory_limit_mb", ex.DEFAULT_MEMORY_LIMIT_MB),
        solver=_solver_options(args) if hasattr(args, "form") else SolverOptions(form="dual"),
        **extra,
    )


def _model_for(args):
    cfg = _config(args)
    inst = ex.make_instance(cfg)
    ex.check_memory(inst.n, cfg.valid_cuts, cfg.memory_limit_mb)
    return inst, build_model(inst, valid_cuts=cfg.valid_cuts)


def cmd_gen(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.uniform:
        insts = [make_uniform(args.n)]
    else:
        insts = [ex.make_instance(ex.ExperimentConfig(n=args.n, mode=args.mode, seed=s, symmetric=args.symmetric))
                 for s in ex.parse_seeds(args.seeds)]
    for inst in insts:
        path = out / f"{inst.name}.dat"
        write_instance(inst, path)
        print(path)
    return 0


def cmd_build(args) -> int:
    inst, model = _model_for(args)
    print(f"{model.name or inst.name}: {model.shape[0]} rows, {model.shape[1]} columns, {model.A.nnz} nonzeros")
    for fam, count in model.space.counts.items():
        print(f"  {fam:<8}{count:>10}")
    for fam, count in model.family_counts().items():
        print(f"  {fam:<8}{count:>10}")
    return 0


def cmd_export(args) -> int:
    _, model = _model_for(args)
    path = export_mps(model, args.out)
    print(path)
    return 0


def cmd_solve(args) -> int:
    cfg = _config(args)
    result = ex.run_experiment(cfg)
    rec = result.record
    if args.records:
        ex.write_records([rec], args.records)
    if args.solution:
        Path(args.solution).write_text(json.dumps(ex.solution_to_dict(result.model, result.solution)) + "\n")
    if args.verify:
        report = verify_solution(result.model, result.solution)
        print(f"verify: max residual {report.max_residual:.3e}, min reduced cost {report.min_reduced_cost}, "
              f"{'ok' if report.ok else '; '.join(report.failures)}")
    print(rec.to_json())
    return 0 if result.solution.optimal else 1


def cmd_audit(args) -> int:
    inst, model = _model_for(args)
    data = json.loads(Path(args.solution).read_text())
    x = ex.solution_vector(model, data)
    oracle = brute_force_optimum(inst, limit=args.oracle_limit) if inst.n <= args.oracle_limit else None
    report = audit(inst, model, x, oracle)
    print(json.dumps(report.to_dict(), indent=2))
    return 0


def cmd_table(args) -> int:
    records = [rec for path in args.records for rec in ex.read_records(path)]
    text = ex.format_csv(records) if args.csv else ex.format_table(records)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_sweep(args) -> int:
    cfg = _config(args)
    summary = ex.run_sweep(cfg, ex.parse_seeds(args.seeds))
    if args.records:
        ex.write_records(summary.records, args.records)
    print(json.dumps(summary.to_dict(), indent=2))
    return 0


def cmd_growth(args) -> int:
    table, exponents = ex.growth_rows(ex.parse_seeds(args.ns), args.valid_cuts)
    print(f"{'n':>3} {'diag':>8} {'pair':>12} {'triple':>14} {'total':>14} {'rows':>14}")
    for row in table:
        print(f"{row['n']:>3} {row['diag']:>8} {row['pair']:>12} {row['triple']:>14} {row['total']:>14} {row['rows']:>14}")
    for key, value in exponents.items():
        print(f"exponent {key}: {value:.3f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qaplp", description="LP formulation laboratory for the QAP")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="write instance files")
    _add_source(p, positional=False)
    p.add_argument("--seeds", default="1", help="seed list such as 1..5 or 1,3,7")
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("build", help="assemble a model and print its size")
    _add_source(p)
    _add_model(p)
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("export", help="write the model as MPS")
    _add_source(p)
    _add_model(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("solve", help="solve, audit and record one instance")
    _add_source(p)
    _add_model(p)
    _add_solver(p)
    p.add_argument("--records", help="append the record to this JSON-lines file")
    p.add_argument("--solution", help="write the nonzero solution values as JSON")
    p.add_argument("--verify", action="store_true", help="recheck residuals and reduced costs")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("audit", help="audit a stored solution")
    _add_source(p)
    _add_model(p)
    p.add_argument("--solution", required=True)
    p.add_argument("--oracle-limit", type=int, default=ex.DEFAULT_ORACLE_LIMIT)
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("table", help="format records as a summary table")
    p.add_argument("records", nargs="+")
    p.add_argument("--csv", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_table)

    p = sub.add_parser("sweep", help="solve and audit many seeds")
    _add_source(p, positional=False)
    _add_model(p)
    _add_solver(p)
    p.add_argument("--seeds", default="1..20")
    p.add_argument("--records")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("growth", help="variable and row counts with fitted exponents")
    p.add_argument("--ns", default="6..12")
    p.add_argument("--no-cuts", dest="valid_cuts", action="store_false")
    p.set_defaults(func=cmd_growth)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ex.MemoryGuardError as exc:
        print(f"qaplp: refusing to build: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"qaplp: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
