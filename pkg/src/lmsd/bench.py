"""Benchmark harness: method-by-problem matrices, performance profiles,
sweep statistics, and delimited output.

Costs are normalized per problem so the winning method has ratio 1; a method
that fails to solve a problem is charged an infinite cost.  Rows are ordered
by (method index, problem index) so reruns with the same inputs produce
byte-identical files apart from wall-clock columns.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .problems import QuadraticProblem
from .solvers import (
    ADAPTIVE_METHODS,
    STEP_ENGINES,
    RunReport,
    SolverConfig,
    abb_gradient,
    solve_general,
    solve_quadratic,
)


class ConfigError(Exception):
    """A method tag or option does not resolve to anything runnable."""


class DegenerateColumn(UserWarning):
    """A problem that no method solved; it is excluded from the profile."""


REPORT_COLUMNS = (
    "method",
    "engine",
    "m",
    "problem",
    "n",
    "status",
    "iterations",
    "nfe",
    "nge",
    "sweeps",
    "backtracks",
    "cauchy_resets",
    "final_gnorm",
    "gnorm0",
    "f_final",
    "wall_time",
    "trajectory_hash",
)

CURVE_COLUMNS = ("method", "tau", "fraction")

METRIC_FIELDS = {"nge": "nge", "nfe": "nfe", "time": "wall_time"}


@dataclass(frozen=True)
class MethodSpec:
    """One column of the benchmark: an engine tag with its memory parameter."""

    tag: str
    m: int = 5
    overrides: Mapping[str, object] = field(default_factory=dict)

    @property
    def label(self) -> str:
        return f"{self.tag}[m={self.m}]"


@dataclass
class BenchMatrix:
    methods: list[MethodSpec]
    problems: list
    cfg_overrides: Mapping[str, object] = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self) -> None:
        if not self.methods or not self.problems:
            raise ConfigError("benchmark needs at least one method and one problem")
        for spec in self.methods:
            if spec.tag not in STEP_ENGINES and spec.tag not in ADAPTIVE_METHODS:
                raise ConfigError(f"method tag {spec.tag!r} does not resolve to an engine")


@dataclass(frozen=True)
class BenchRow:
    method: str
    engine: str
    m: int
    problem: str
    n: int
    report: RunReport

    def as_record(self) -> dict:
        r = self.report
        return {
            "method": self.method,
            "engine": self.engine,
            "m": self.m,
            "problem": self.problem,
            "n": self.n,
            "status": r.status,
            "iterations": r.iterations,
            "nfe": r.nfe,
            "nge": r.nge,
            "sweeps": r.sweeps,
            "backtracks": r.backtracks,
            "cauchy_resets": r.cauchy_resets,
            "final_gnorm": r.final_gnorm,
            "gnorm0": r.gnorm0,
            "f_final": r.f_final,
            "wall_time": r.wall_time,
            "trajectory_hash": r.trajectory_hash,
        }


@dataclass
class ProfileCurve:
    """Right-continuous step curve of the fraction of problems solved."""

    method: str
    taus: np.ndarray
    fractions: np.ndarray

    def value_at(self, tau: float) -> float:
        idx = int(np.searchsorted(self.taus, tau, side="right")) - 1
        return 0.0 if idx < 0 else float(self.fractions[idx])


def run_one(spec: MethodSpec, problem, cfg_overrides: Mapping[str, object] | None = None) -> RunReport:
    """Run a single (method, problem) pair; never raises for solver failures."""
    options: dict = {"m": spec.m}
    options.update(cfg_overrides or {})
    options.update(spec.overrides)
    if spec.tag in ADAPTIVE_METHODS:
        cfg = SolverConfig(engine="lmsd-g", **options)
        variant = spec.tag.split("-", 1)[1]
        return abb_gradient(problem, variant, cfg)
    cfg = SolverConfig(engine=spec.tag, **options)
    if isinstance(problem, QuadraticProblem):
        return solve_quadratic(problem, cfg)
    return solve_general(problem, cfg)


def run_matrix(bm: BenchMatrix) -> list[BenchRow]:
    """One report per (method, problem); failures become rows, not exceptions."""
    rows: list[BenchRow] = []
    for spec in bm.methods:
        for problem in bm.problems:
            try:
                report = run_one(spec, problem, bm.cfg_overrides)
            except Exception as exc:  # failure isolation: the matrix completes
                report = RunReport(
                    method=spec.tag,
                    problem=getattr(problem, "name", "problem"),
                    status=f"error:{type(exc).__name__}",
                    iterations=0,
                    nfe=0,
                    nge=0,
                    sweeps=0,
                    backtracks=0,
                    cauchy_resets=0,
                    wall_time=0.0,
                    final_gnorm=float("nan"),
                    gnorm0=float("nan"),
                    f_final=float("nan"),
                    trajectory_hash="",
                )
            rows.append(
                BenchRow(
                    method=spec.label,
                    engine=spec.tag,
                    m=spec.m,
                    problem=getattr(problem, "name", "problem"),
                    n=getattr(problem, "n", 0),
                    report=report,
                )
            )
    return rows


def cost_matrix(rows: Sequence[BenchRow], metric: str = "nge") -> tuple[np.ndarray, list[str], list[str]]:
    """Method-by-problem cost table; non-converged runs cost infinity."""
    if metric not in METRIC_FIELDS:
        raise ConfigError(f"unknown metric {metric!r}; choose from {sorted(METRIC_FIELDS)}")
    attr = METRIC_FIELDS[metric]
    methods: list[str] = []
    problems: list[str] = []
    for row in rows:
        if row.method not in methods:
            methods.append(row.method)
        if row.problem not in problems:
            problems.append(row.problem)
    costs = np.full((len(methods), len(problems)), np.inf)
    for row in rows:
        i = methods.index(row.method)
        j = problems.index(row.problem)
        value = getattr(row.report, attr)
        costs[i, j] = float(value) if row.report.status == "converged" else np.inf
    return costs, methods, problems


def performance_profile(costs: np.ndarray, methods: Sequence[str] | None = None) -> list[ProfileCurve]:
    """Curves of the fraction of problems solved within each performance ratio.

    Columns where every cost is infinite are excluded with a
    ``DegenerateColumn`` warning.
    """
    costs = np.asarray(costs, dtype=float)
    if costs.ndim != 2 or costs.size == 0:
        raise ValueError("need a nonempty methods-by-problems cost matrix")
    if np.any(costs[np.isfinite(costs)] <= 0):
        raise ValueError("costs must be positive")
    n_methods, _ = costs.shape
    if methods is None:
        methods = [f"method-{i}" for i in range(n_methods)]
    best = np.min(costs, axis=0)
    usable = np.isfinite(best)
    if not np.all(usable):
        dropped = int(np.sum(~usable))
        warnings.warn(
            DegenerateColumn(f"{dropped} problem(s) solved by no method were excluded"),
            stacklevel=2,
        )
    ratios = costs[:, usable] / best[usable]
    n_problems = ratios.shape[1]
    if n_problems == 0:
        raise ValueError("no problem was solved by any method")
    curves = []
    for i, name in enumerate(methods):
        finite = np.sort(ratios[i][np.isfinite(ratios[i])])
        taus = np.unique(np.concatenate([[1.0], finite]))
        fractions = np.searchsorted(finite, taus, side="right") / n_problems
        curves.append(ProfileCurve(method=name, taus=taus, fractions=fractions))
    return curves


def sweep_stats(rows: Sequence[BenchRow]) -> dict[str, np.ndarray]:
    """Per method, the sorted distribution of iterations per sweep.

    Runs without any sweep (adaptive baselines, immediate convergence) are
    skipped; the sorted values are the empirical distribution over problems.
    """
    values: dict[str, list[float]] = {}
    for row in rows:
        if row.report.sweeps < 1:
            continue
        values.setdefault(row.method, []).append(row.report.iterations / row.report.sweeps)
    return {method: np.sort(np.asarray(v)) for method, v in values.items()}


def _fmt(value) -> str:
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def emit(obj, path) -> None:
    """Write reports or profile curves as CSV with a mandatory header row.

    Accepts bench rows, bare run reports, or profile curves.  Floats carry 17
    significant digits so a write-then-parse round trip is exact.
    """
    items = list(obj)
    if items and isinstance(items[0], ProfileCurve):
        _emit_curves(items, path)
        return
    rows = [
        item
        if isinstance(item, BenchRow)
        else BenchRow(
            method=item.method,
            engine=item.method,
            m=0,
            problem=item.problem,
            n=0,
            report=item,
        )
        for item in items
    ]
    _emit_rows(rows, path)


def _emit_rows(rows: Iterable[BenchRow], path) -> None:
    with open(path, "w", newline="", encoding="ascii") as handle:
        writer = csv.writer(handle)
        writer.writerow(REPORT_COLUMNS)
        for row in rows:
            record = row.as_record()
            writer.writerow([_fmt(record[col]) for col in REPORT_COLUMNS])


def _emit_curves(curves: Iterable[ProfileCurve], path) -> None:
    with open(path, "w", newline="", encoding="ascii") as handle:
        writer = csv.writer(handle)
        writer.writerow(CURVE_COLUMNS)
        for curve in curves:
            for tau, fraction in zip(curve.taus, curve.fractions):
                writer.writerow([curve.method, _fmt(float(tau)), _fmt(float(fraction))])


def emit_sweep_stats(stats: Mapping[str, np.ndarray], path) -> None:
    """CSV of the per-method empirical distribution of iterations per sweep."""
    with open(path, "w", newline="", encoding="ascii") as handle:
        writer = csv.writer(handle)
        writer.writerow(("method", "steps_per_sweep", "cumulative_fraction"))
        for method in sorted(stats):
            values = stats[method]
            total = len(values)
            for i, value in enumerate(values):
                writer.writerow([method, _fmt(float(value)), _fmt((i + 1) / total)])
