"""Command-line front end.

Exit statuses: 0 success, 2 configuration or input error, 3 budget or data
error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from .design import lhs_design, maxpro_design, maxpro_value
from .errors import ConfigurationError, DomainError, SensboError
from .pce import LAR, SAPCE, TD, TD1, TD2
from .state import S1, WorkflowState
from .verification import (
    MeshStudy,
    discretization_errors,
    observed_order,
    richardson_extrapolate,
)

EXIT_OK = 0
EXIT_CONFIG = 2


def _config(args):
    from .workflow import WorkflowConfig, preset_config

    if getattr(args, "config", None):
        cfg = WorkflowConfig.load(args.config)
    else:
        cfg = preset_config(getattr(args, "preset", None) or "desk")
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "objective", None):
        overrides["objective"] = args.objective
    if overrides:
        d = cfg.to_dict()
        d.update(overrides)
        cfg = WorkflowConfig.from_dict(d)
    return cfg


def _print_rows(header, rows, out=None):
    out = out or sys.stdout
    w = csv.writer(out, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([f"{v:.6g}" if isinstance(v, float) else v for v in r])


# subcommands ---------------------------------------------------------------


def cmd_design(args):
    if args.criterion == "maxpro":
        d = maxpro_design(args.points, args.dims, args.seed)
    else:
        d = lhs_design(args.points, args.dims, args.seed)
    out = Path(args.out_dir) / args.name
    out.parent.mkdir(parents=True, exist_ok=True)
    d.save(out)
    print(f"{d.criterion} design Q={d.Q} N={d.N} criterion={maxpro_value(d.points):.6g} -> {out}")
    return EXIT_OK


def cmd_run(args):
    from .workflow import run_workflow

    cfg = _config(args)
    state = run_workflow(cfg, args.out_dir, resume=not args.fresh, figures=not args.no_figures)
    _summary(state)
    return EXIT_OK


def cmd_stage(args):
    from .workflow import run_workflow

    cfg = _config(args)
    out = Path(args.out_dir)
    stage = S1
    if (out / "state.json").exists():
        stage = WorkflowState.load(out / "state.json").stage
    state = run_workflow(cfg, out, resume=True, report=args.report, figures=not args.no_figures,
                         stop_after=stage)
    print(f"completed {stage}; next stage {state.stage}")
    return EXIT_OK


def _summary(state):
    u, x, v = state.best
    print(f"stage {state.stage}, evaluations {state.budget_used}/{state.budget}, best {v:.6g}")
    names = state.input_model.names
    if x is not None:
        for n, xv in zip(names, x):
            print(f"  {n} = {xv:.6g}")
    active = [n for n, a in zip(names, state.mask.active) if a]
    print("active inputs: " + ", ".join(active))


def cmd_gsa(args):
    from .benchmarks import get_benchmark
    from .pce import fit_scheme
    from .sensitivity import sobol_from_pce, sobol_monte_carlo

    bench = get_benchmark(args.objective or "Ishigami")
    names = list(bench.input_model.names)
    results = []
    if args.mc:
        results.append(sobol_monte_carlo(bench.evaluate, dims=bench.dims, n_base=args.n_base,
                                         seed=args.seed, names=names))
    else:
        U = maxpro_design(args.samples, bench.dims, args.seed).points if args.maxpro \
            else np.random.default_rng(args.seed).random((args.samples, bench.dims))
        y = bench.evaluate(U)
        for scheme in args.scheme:
            model = fit_scheme(U, y, scheme, lar_degree=args.degree,
                               sapce_degree=args.degree, td_degree=args.degree)
            results.append(sobol_from_pce(model, names))
    rows = []
    for res in results:
        for n, name in enumerate(res.labels()):
            rows.append((res.source_scheme, name, float(res.first_order[n]),
                         float(res.total_order[n])))
    _print_rows(["scheme", "input", "S_F", "S_T"], rows)
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "sobol.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["scheme", "input", "S_F", "S_T"])
            for r in rows:
                w.writerow([r[0], r[1], repr(r[2]), repr(r[3])])
    return EXIT_OK


def cmd_verify(args):
    r = None
    if args.r2 is not None or args.r3 is not None:
        if args.r2 is None or args.r3 is None:
            raise ConfigurationError("give both --r2 and --r3")
        r = (args.r2, args.r3)
    study = MeshStudy.from_csv(args.csv, r)
    p = observed_order(study)
    ex = richardson_extrapolate(study, p)
    errs = discretization_errors(study, p)
    print(f"observed order p = {p:.6g}")
    print(f"extrapolated eta = {ex:.6g}")
    rows = []
    for i in range(3):
        rows.append((i + 1, study.cell_counts[i], study.solutions[i],
                     100 * errs[i], 100 * errs[3 + i]))
    _print_rows(["mesh", "cells", "eta", "e_percent", "gci_percent"], rows)
    return EXIT_OK


def cmd_bench(args):
    from .benchmarks import REGISTRY, get_benchmark

    if not args.objective:
        for name in sorted(REGISTRY):
            b = get_benchmark(name)
            print(f"{name}\t{b.dims}D\t{b.description}")
        return EXIT_OK
    bench = get_benchmark(args.objective)
    if args.input:
        with open(args.input) as fh:
            rows = [r for r in csv.reader(fh) if r]
        try:
            float(rows[0][0])
        except ValueError:
            rows = rows[1:]
        U = np.array([[float(v) for v in r] for r in rows])
    else:
        U = np.random.default_rng(args.seed).random((args.points, bench.dims))
    if U.ndim != 2 or U.shape[1] != bench.dims:
        raise DomainError(f"{bench.name} expects {bench.dims} columns")
    if np.any((U < 0) | (U > 1)):
        raise DomainError("points must lie in the unit hypercube")
    y = np.atleast_1d(bench.evaluate(U))
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow([f"u{n + 1}" for n in range(bench.dims)] + ["y"])
    for u, v in zip(U, y):
        w.writerow([repr(float(a)) for a in u] + [repr(float(v))])
    return EXIT_OK


def cmd_report(args):
    from .report import emit_report

    out = Path(args.out_dir)
    src = Path(args.state) if args.state else out / "state.json"
    if not src.exists():
        raise ConfigurationError(f"no workflow state at {src}")
    state = WorkflowState.load(src)
    paths = emit_report(state, out, figures=not args.no_figures)
    for p in paths:
        print(p)
    return EXIT_OK


# parser --------------------------------------------------------------------


def _workflow_flags(p):
    p.add_argument("--config", help="YAML configuration file")
    p.add_argument("--preset", choices=("desk", "full"), help="built-in configuration")
    p.add_argument("--seed", type=int)
    p.add_argument("--objective", help="benchmark name (see `bench`)")
    p.add_argument("--out-dir", default="run")
    p.add_argument("--no-figures", action="store_true", help="skip PNG rendering")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sensbo", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("design", help="space-filling design in the unit hypercube")
    p.add_argument("--points", "-q", type=int, required=True)
    p.add_argument("--dims", "-n", type=int, required=True)
    p.add_argument("--criterion", choices=("maxpro", "lhs"), default="maxpro")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", default=".")
    p.add_argument("--name", default="design.csv")
    p.set_defaults(func=cmd_design)

    p = sub.add_parser("run", help="run (or resume) the full four-stage workflow")
    _workflow_flags(p)
    p.add_argument("--fresh", action="store_true", help="ignore saved state in --out-dir")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("stage", help="run the next pending stage only")
    _workflow_flags(p)
    p.add_argument("--report", action="store_true", help="also write the report")
    p.set_defaults(func=cmd_stage)

    p = sub.add_parser("gsa", help="Sobol' indices of a benchmark")
    p.add_argument("--objective", default="Ishigami")
    p.add_argument("--samples", type=int, default=500)
    p.add_argument("--scheme", nargs="+", default=[TD2], choices=(TD1, TD2, TD, LAR, SAPCE))
    p.add_argument("--degree", type=int, default=3)
    p.add_argument("--maxpro", action="store_true", help="MaxPro instead of random samples")
    p.add_argument("--mc", action="store_true", help="Monte Carlo estimator instead of PCE")
    p.add_argument("--n-base", type=int, default=2**14)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_gsa)

    p = sub.add_parser("verify", help="solution verification")
    vsub = p.add_subparsers(dest="what", required=True)
    m = vsub.add_parser("mesh-study", help="observed order, Richardson value and GCI")
    m.add_argument("csv", help="three rows of cells,solution")
    m.add_argument("--r2", type=float)
    m.add_argument("--r3", type=float)
    m.set_defaults(func=cmd_verify)

    p = sub.add_parser("bench", help="list or evaluate benchmark objectives")
    p.add_argument("--objective")
    p.add_argument("--input", help="CSV of unit-hypercube points")
    p.add_argument("--points", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("report", help="write report CSVs and figures from a saved state")
    p.add_argument("--out-dir", default="run")
    p.add_argument("--state", help="state JSON (default OUT_DIR/state.json)")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SensboError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
