"""Command-line harness.

Subcommands: ``quad`` and ``nonlinear`` run a single problem, ``bench`` runs a
method-by-problem matrix, and ``profile`` turns a bench table into
performance-profile curves.  Reports are written as CSV; matplotlib figures
can be rendered next to them with ``--plot``.

Exit codes: 0 on success, 1 on configuration or I/O errors, 2 when the work
completed but at least one run failed to converge.
"""

from __future__ import annotations

import argparse
import csv
import sys

import numpy as np

from . import bench, problems
from .bench import BenchMatrix, ConfigError, MethodSpec
from .solvers import ADAPTIVE_METHODS, STEP_ENGINES

ALL_METHODS = tuple(sorted(STEP_ENGINES)) + ADAPTIVE_METHODS


def _add_solver_options(parser: argparse.ArgumentParser, max_iter: int) -> None:
    parser.add_argument("--memory", type=int, default=5, help="memory parameter m")
    parser.add_argument("--tol", type=float, default=1e-6, help="relative gradient tolerance")
    parser.add_argument("--max-iter", type=int, default=max_iter)
    parser.add_argument("--beta0", type=float, default=None, help="initial stepsize")
    parser.add_argument("--thresh", type=float, default=1e-8, help="truncation tolerance")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lmsd",
        description="Limited-memory steepest descent solvers and benchmark harness.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    quad = sub.add_parser("quad", help="solve one strictly convex quadratic problem")
    quad.add_argument("--engine", default="lmsd-g", choices=ALL_METHODS)
    quad.add_argument("--n", type=int, default=100, help="dimension of the synthetic problem")
    quad.add_argument("--omega", type=float, default=1.1, help="eigenvalue ratio of the synthetic problem")
    quad.add_argument("--matrix", default=None, help="Matrix-Market file overriding the synthetic problem")
    _add_solver_options(quad, max_iter=50_000)
    quad.add_argument("--out", default=None, help="write the run report as CSV")
    quad.set_defaults(func=cmd_quad)

    nonlinear = sub.add_parser("nonlinear", help="solve one built-in nonlinear problem")
    nonlinear.add_argument("--engine", default="lmsd-chol", choices=ALL_METHODS)
    nonlinear.add_argument("--problem", default="extended-rosenbrock", choices=problems.BUILTIN_NAMES)
    nonlinear.add_argument("--n", type=int, default=100)
    _add_solver_options(nonlinear, max_iter=100_000)
    nonlinear.add_argument("--out", default=None)
    nonlinear.set_defaults(func=cmd_nonlinear)

    bench_cmd = sub.add_parser("bench", help="run a method-by-problem benchmark matrix")
    bench_cmd.add_argument("--methods", required=True, help="comma-separated method tags")
    bench_cmd.add_argument("--memories", default="5", help="comma-separated memory parameters, crossed with methods")
    bench_cmd.add_argument(
        "--geometric-family",
        nargs="?",
        const="100:1.01:1.4:15",
        default=None,
        metavar="N:LO:HI:COUNT",
        help="add a family of diagonal quadratics with geometric spectra",
    )
    bench_cmd.add_argument(
        "--problem",
        action="append",
        default=[],
        metavar="NAME[:N]",
        help="add a built-in nonlinear problem (repeatable)",
    )
    bench_cmd.add_argument(
        "--matrix",
        action="append",
        default=[],
        metavar="PATH",
        help="add a Matrix-Market quadratic problem (repeatable)",
    )
    bench_cmd.add_argument("--n", type=int, default=100, help="default dimension for --problem entries")
    _add_solver_options(bench_cmd, max_iter=100_000)
    bench_cmd.add_argument("--metric", default="nge", choices=sorted(bench.METRIC_FIELDS))
    bench_cmd.add_argument("--seed", type=int, default=0)
    bench_cmd.add_argument("--out", default="runs.csv", help="per-run report CSV")
    bench_cmd.add_argument("--profile-out", default=None, help="also write profile curves as CSV")
    bench_cmd.add_argument("--plot", default=None, help="render the performance profile to this image")
    bench_cmd.add_argument("--sweeps-out", default=None, help="write sweep statistics as CSV")
    bench_cmd.add_argument("--sweep-plot", default=None, help="render the sweep distribution to this image")
    bench_cmd.set_defaults(func=cmd_bench)

    profile = sub.add_parser("profile", help="compute profile curves from a bench CSV")
    profile.add_argument("--costs", required=True, help="bench report CSV")
    profile.add_argument("--metric", default="nge", choices=sorted(bench.METRIC_FIELDS))
    profile.add_argument("--out", default="curves.csv")
    profile.add_argument("--plot", default=None)
    profile.set_defaults(func=cmd_profile)

    return parser


def _single_run(spec: MethodSpec, problem, args, out) -> int:
    overrides = {
        "tol": args.tol,
        "max_iter": args.max_iter,
        "thresh": args.thresh,
        "beta0": args.beta0,
    }
    report = bench.run_one(spec, problem, overrides)
    print(
        f"{spec.tag} on {report.problem}: {report.status} after {report.iterations} iterations "
        f"(nge={report.nge}, nfe={report.nfe}, |g|={report.final_gnorm:.3e}, "
        f"time={report.wall_time:.3f}s)"
    )
    if out:
        row = bench.BenchRow(
            method=spec.label,
            engine=spec.tag,
            m=spec.m,
            problem=report.problem,
            n=problem.n,
            report=report,
        )
        bench.emit([row], out)
        print(f"wrote {out}")
    return 0 if report.status == "converged" else 2


def cmd_quad(args) -> int:
    if args.matrix:
        problem = problems.load_matrix_market(args.matrix)
        beta0_default = 1.0
    else:
        problem = problems.geometric_quadratic(args.n, args.omega)
        beta0_default = 1.0
    if args.beta0 is None:
        args.beta0 = beta0_default
    return _single_run(MethodSpec(args.engine, m=args.memory), problem, args, args.out)


def cmd_nonlinear(args) -> int:
    problem = problems.builtin_nonlinear(args.problem, args.n)
    return _single_run(MethodSpec(args.engine, m=args.memory), problem, args, args.out)


def _parse_geometric_family(spec: str) -> list:
    parts = spec.split(":")
    if len(parts) != 4:
        raise ConfigError(f"bad geometric family spec {spec!r}, expected N:LO:HI:COUNT")
    try:
        n, lo, hi, count = int(parts[0]), float(parts[1]), float(parts[2]), int(parts[3])
    except ValueError as exc:
        raise ConfigError(f"bad geometric family spec {spec!r}") from exc
    return [problems.geometric_quadratic(n, float(omega)) for omega in np.linspace(lo, hi, count)]


def _build_bench_problems(args) -> list:
    out: list = []
    if args.geometric_family:
        out.extend(_parse_geometric_family(args.geometric_family))
    for path in args.matrix:
        out.append(problems.load_matrix_market(path))
    for entry in args.problem:
        name, _, dim = entry.partition(":")
        try:
            n = int(dim) if dim else args.n
        except ValueError as exc:
            raise ConfigError(f"bad problem spec {entry!r}") from exc
        out.append(problems.builtin_nonlinear(name, n))
    if not out:
        raise ConfigError("no problems selected; use --geometric-family, --problem, or --matrix")
    return out


def cmd_bench(args) -> int:
    try:
        tags = [t.strip() for t in args.methods.split(",") if t.strip()]
        memories = [int(m) for m in args.memories.split(",") if m.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad --methods/--memories: {exc}") from exc
    specs = [MethodSpec(tag, m=m) for tag in tags for m in memories]
    matrix = BenchMatrix(
        methods=specs,
        problems=_build_bench_problems(args),
        cfg_overrides={
            "tol": args.tol,
            "max_iter": args.max_iter,
            "thresh": args.thresh,
            "beta0": args.beta0,
        },
        seed=args.seed,
    )
    rows = bench.run_matrix(matrix)
    bench.emit(rows, args.out)
    print(f"wrote {args.out} ({len(rows)} runs)")

    curves = None
    if args.profile_out or args.plot:
        costs, methods, _ = bench.cost_matrix(rows, args.metric)
        curves = bench.performance_profile(costs, methods)
    if args.profile_out:
        bench.emit(curves, args.profile_out)
        print(f"wrote {args.profile_out}")
    if args.plot:
        from . import plotting

        plotting.plot_profiles(curves, args.plot, metric=args.metric)
        print(f"wrote {args.plot}")
    if args.sweeps_out or args.sweep_plot:
        stats = bench.sweep_stats(rows)
        if args.sweeps_out:
            bench.emit_sweep_stats(stats, args.sweeps_out)
            print(f"wrote {args.sweeps_out}")
        if args.sweep_plot:
            from . import plotting

            plotting.plot_sweep_cdf(stats, args.sweep_plot, memory=max(memories))
            print(f"wrote {args.sweep_plot}")

    failed = sum(1 for row in rows if row.report.status != "converged")
    if failed:
        print(f"{failed} run(s) did not converge", file=sys.stderr)
        return 2
    return 0


def cmd_profile(args) -> int:
    field = bench.METRIC_FIELDS[args.metric]
    methods: list[str] = []
    problem_names: list[str] = []
    records: dict[tuple[str, str], float] = {}
    with open(args.costs, newline="", encoding="ascii") as handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames is None or field not in reader.fieldnames:
            raise ConfigError(f"{args.costs} lacks a {field!r} column")
        for record in reader:
            method = record["method"]
            problem = record["problem"]
            if method not in methods:
                methods.append(method)
            if problem not in problem_names:
                problem_names.append(problem)
            cost = float(record[field]) if record["status"] == "converged" else float("inf")
            records[(method, problem)] = cost
    costs = np.full((len(methods), len(problem_names)), np.inf)
    for (method, problem), cost in records.items():
        costs[methods.index(method), problem_names.index(problem)] = cost
    curves = bench.performance_profile(costs, methods)
    bench.emit(curves, args.out)
    print(f"wrote {args.out}")
    if args.plot:
        from . import plotting

        plotting.plot_profiles(curves, args.plot, metric=args.metric)
        print(f"wrote {args.plot}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    try:
        return args.func(args)
    except (
        ConfigError,
        problems.ParseError,
        problems.NotSymmetric,
        problems.UnknownProblem,
        OSError,
        ValueError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
