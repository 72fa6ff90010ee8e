"""Iteration drivers.

Three solvers share the sweep bookkeeping: the quadratic driver (no line
search, function-increase monitor with exact-line-search restarts), the
general nonlinear driver (nonmonotone sufficient-decrease test against the
value at the start of the sweep, with backtracking), and the adaptive
two-point gradient baseline that switches between the standard and harmonic
two-point stepsizes under a nonmonotone line search.
"""

from __future__ import annotations

import hashlib
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import general_engines, kernels, quad_engines
from .history import AllNegative, StepStack, SweepHistory

MAX_BACKTRACKS_PER_STEP = 500

ENGINE_FAILURES = (kernels.NotSPD, kernels.ZeroMatrix, kernels.NoConvergence, AllNegative)


class NonPositiveCurvature(Exception):
    """Exact-line-search denominator was nonpositive: the operator is not SPD."""


class EvaluatorFailure(Exception):
    """Objective or gradient evaluation produced a non-finite result."""


QUAD_ENGINES: dict[str, Callable[[SweepHistory, float], StepStack]] = {
    "lmsd-g": quad_engines.ritz_cholesky,
    "lmsd-g-qr": quad_engines.ritz_pivoted_qr,
    "lmsd-g-svd": quad_engines.ritz_svd,
    "lmsd-hg": lambda h, thresh: quad_engines.harmonic_fletcher(h, thresh)[0],
    "lmsd-hg-rq": quad_engines.harmonic_rq,
    "lmsd-hy": quad_engines.harmonic_y_cholesky,
    "lmsd-hy-qr": quad_engines.harmonic_y_qr,
    "lmsd-hy-svd": quad_engines.harmonic_y_svd,
}

GENERAL_ENGINES: dict[str, Callable[[SweepHistory, float], StepStack]] = {
    "lmsd-chol": general_engines.fletcher_tridiag,
    "lmsd-h-chol": general_engines.curtis_guo,
    "lmsd-lya": lambda h, thresh: general_engines.lyapunov_secant(h, "cholesky-G", thresh),
    "lmsd-lya-qr": lambda h, thresh: general_engines.lyapunov_secant(h, "qr-G", thresh),
    "lmsd-lya-svd": lambda h, thresh: general_engines.lyapunov_secant(h, "svd-S", thresh),
    "lmsd-h-lya": general_engines.lyapunov_secant_H,
    "lmsd-pert": general_engines.schnabel_pert,
}

STEP_ENGINES = {**QUAD_ENGINES, **GENERAL_ENGINES}
ADAPTIVE_METHODS = ("abb-min", "abb-bon")


def make_stack(engine: str, history: SweepHistory, thresh: float) -> StepStack:
    try:
        build = STEP_ENGINES[engine]
    except KeyError:
        raise ValueError(f"unknown engine tag {engine!r}") from None
    return build(history, thresh)


def restart_step(gnorm: float) -> float:
    """Safeguard stepsize used when no positive eigenvalue is available."""
    return max(min(1.0 / gnorm, 1e5), 1.0)


def bb_stepsizes(s: np.ndarray, y: np.ndarray) -> tuple[float, float] | None:
    """Two-point stepsizes ``(s.s/s.y, s.y/y.y)``, or None when curvature is nonpositive."""
    sy = float(s @ y)
    if sy <= 0:
        return None
    return float(s @ s) / sy, sy / float(y @ y)


def abb_select(variant: str, bb1: float, bb2: float, window_min: float, eta: float) -> tuple[float, float]:
    """Adaptive choice between the standard and recent-minimum harmonic steps.

    Returns the selected stepsize and the threshold for the next iteration
    (unchanged for the fixed variant, scaled by 0.9 after a switch and by 1.1
    otherwise for the adaptive one).  ``window_min`` must already include the
    current harmonic value.
    """
    take_min = bb2 < eta * bb1
    if variant == "bon":
        eta = 0.9 * eta if take_min else 1.1 * eta
    return (window_min if take_min else bb1), eta


@dataclass
class SolverConfig:
    engine: str = "lmsd-g"
    m: int = 5
    tol: float = 1e-6
    max_iter: int = 100_000
    beta0: float | None = None  # None: 1.0 on quadratics, 1/|g0| otherwise
    beta_min: float = 1e-30
    beta_max: float = 1e30
    c_ls: float = 1e-4
    sigma_ls: float = 0.5
    thresh: float = 1e-8
    m_nonmono: int = 10
    keep_iterates: bool = False

    def __post_init__(self) -> None:
        if self.m < 1:
            raise ValueError("memory parameter must be at least 1")
        if not (0 < self.beta_min < self.beta_max):
            raise ValueError("need 0 < beta_min < beta_max")
        if not (0 < self.c_ls < 1 and 0 < self.sigma_ls < 1):
            raise ValueError("line-search constants must lie in (0, 1)")

    def clamp(self, step: float) -> float:
        return max(self.beta_min, min(step, self.beta_max))


@dataclass
class IterationRecord:
    step: float
    f_ref: float
    gnorm_sq: float
    f_new: float
    event: str = "accept"  # accept | reset


@dataclass
class RunReport:
    method: str
    problem: str
    status: str  # converged | iter_limit | engine_failure | evaluator_failure
    iterations: int
    nfe: int
    nge: int
    sweeps: int
    backtracks: int
    cauchy_resets: int
    wall_time: float
    final_gnorm: float
    gnorm0: float
    f_final: float
    trajectory_hash: str
    trajectory: list[IterationRecord] = field(default_factory=list, repr=False)
    iterates: list[np.ndarray] | None = field(default=None, repr=False)


class _Hasher:
    """Digest of the (stepsize, gradient-norm) sequence for determinism checks."""

    def __init__(self) -> None:
        self._h = hashlib.sha256()

    def update(self, step: float, gnorm: float) -> None:
        self._h.update(np.float64(step).tobytes())
        self._h.update(np.float64(gnorm).tobytes())

    def digest(self) -> str:
        return self._h.hexdigest()


def as_operator(a) -> Callable[[np.ndarray], np.ndarray]:
    if callable(a):
        return a
    mat = np.asarray(a, dtype=float)
    return lambda v: mat @ v


def cauchy_step(g: np.ndarray, hessian) -> float:
    """Exact-line-search stepsize ``g.g / g.Ag`` for a quadratic objective."""
    apply_a = as_operator(hessian)
    curvature = float(g @ apply_a(g))
    if not np.isfinite(curvature) or curvature <= 0:
        raise NonPositiveCurvature(f"curvature along the gradient is {curvature:.3e}")
    return float(g @ g) / curvature


def _empty_stack() -> StepStack:
    return StepStack(np.empty(0))


def solve_quadratic(problem, cfg: SolverConfig) -> RunReport:
    """Sweep-based gradient iteration for a strictly convex quadratic.

    Consumes one precomputed stepsize per iteration; whenever the value rises
    above the reference value of the sweep the iterate is reset and a single
    exact-line-search step restarts the sweep, which also clears the gradient
    memory.  The stack is refilled from the configured engine when exhausted
    or cleared, and the retained memory shrinks to the stack size.
    """
    t0 = time.perf_counter()
    x = np.array(problem.x0, dtype=float)
    g = problem.gradient(x)
    nge, nfe = 1, 1
    gnorm = float(np.linalg.norm(g))
    gnorm0 = gnorm
    f = 0.5 * float(x @ (g - problem.b))
    f_ref = f
    records: list[IterationRecord] = []
    iterates = [x.copy()] if cfg.keep_iterates else None
    hasher = _Hasher()
    history = SweepHistory(cfg.m)
    history.push(g)
    stack = StepStack(np.array([cfg.beta0 if cfg.beta0 is not None else 1.0]))
    status = "iter_limit"
    iterations = sweeps = backtracks = resets = 0
    consecutive_failures = 0

    if gnorm0 == 0.0:
        status = "converged"

    while status == "iter_limit" and iterations < cfg.max_iter:
        nu = cfg.clamp(stack.next_step())
        x_new = x - nu * g
        g_new = problem.gradient(x_new)
        nge += 1
        gnorm_new = float(np.linalg.norm(g_new))
        f_new = 0.5 * float(x_new @ (g_new - problem.b))
        nfe += 1
        iterations += 1
        hasher.update(nu, gnorm_new)

        if gnorm_new <= cfg.tol * gnorm0:
            records.append(IterationRecord(nu, f_ref, gnorm**2, f_new))
            x, g, gnorm, f = x_new, g_new, gnorm_new, f_new
            if iterates is not None:
                iterates.append(x.copy())
            status = "converged"
            break

        if f_new >= f_ref:
            records.append(IterationRecord(nu, f_ref, gnorm**2, f_new, event="reset"))
            if iterates is not None:
                iterates.append(x.copy())
            # Recover the Hessian action on g from the rejected move; the
            # exact-line-search step from the retained iterate restarts the sweep.
            ag = (g - g_new) / nu
            curvature = float(g @ ag)
            if not np.isfinite(curvature) or curvature <= 0:
                raise NonPositiveCurvature(f"curvature along the gradient is {curvature:.3e}")
            stack = StepStack(np.array([float(g @ g) / curvature]))
            history.clear()
            history.push(g)
            resets += 1
            continue

        records.append(IterationRecord(nu, f_ref, gnorm**2, f_new))
        cleared = gnorm_new >= gnorm
        history.push(g_new, inv_step=1.0 / nu)
        x, g, gnorm, f = x_new, g_new, gnorm_new, f_new
        if iterates is not None:
            iterates.append(x.copy())
        if cleared:
            stack = _empty_stack()

        if stack.exhausted:
            try:
                stack = make_stack(cfg.engine, history, cfg.thresh)
                # a stack of s steps keeps the s most recent pairs alive:
                # s retained columns of the gradient matrix plus the newest
                history.keep_last(len(stack) + 1)
                sweeps += 1
                consecutive_failures = 0
            except ENGINE_FAILURES:
                consecutive_failures += 1
                if consecutive_failures >= 3:
                    status = "engine_failure"
                    break
                stack = StepStack(np.array([restart_step(gnorm)]))
                sweeps += 1
            f_ref = f

    return RunReport(
        method=cfg.engine,
        problem=getattr(problem, "name", "quadratic"),
        status=status,
        iterations=iterations,
        nfe=nfe,
        nge=nge,
        sweeps=sweeps,
        backtracks=backtracks,
        cauchy_resets=resets,
        wall_time=time.perf_counter() - t0,
        final_gnorm=gnorm,
        gnorm0=gnorm0,
        f_final=f,
        trajectory_hash=hasher.digest(),
        trajectory=records,
        iterates=iterates,
    )


def _checked(value: float) -> float:
    if not np.isfinite(value):
        raise EvaluatorFailure(f"non-finite objective value {value!r}")
    return float(value)


def solve_general(problem, cfg: SolverConfig) -> RunReport:
    """Sweep-based gradient iteration with a nonmonotone sufficient-decrease test.

    Each trial step is tested against the value at the start of the sweep;
    backtracking terminates the sweep, as does a nondecreasing gradient norm.
    Gradients stay stored across stack clears.  When an engine yields no
    positive eigenvalue the iteration restarts from a safeguarded stepsize for
    one step and asks for a fresh stack afterwards; three consecutive engine
    failures abort the run.
    """
    t0 = time.perf_counter()
    x = np.array(problem.x0, dtype=float)
    f = problem.value(x)
    g = np.asarray(problem.gradient(x), dtype=float)
    nfe = nge = 1
    status = "iter_limit"
    records: list[IterationRecord] = []
    iterates = [x.copy()] if cfg.keep_iterates else None
    hasher = _Hasher()
    if not np.isfinite(f) or not np.all(np.isfinite(g)):
        status = "evaluator_failure"
    gnorm = float(np.linalg.norm(g))
    gnorm0 = gnorm
    f_ref = f
    history = SweepHistory(cfg.m)
    if status == "iter_limit":
        history.push(g)
    if gnorm0 == 0.0 and status == "iter_limit":
        status = "converged"
    beta0 = cfg.beta0 if cfg.beta0 is not None else 1.0 / gnorm0 if gnorm0 > 0 else 1.0
    stack = StepStack(np.array([beta0]))
    iterations = sweeps = backtracks = 0
    consecutive_failures = 0

    while status == "iter_limit" and iterations < cfg.max_iter:
        nu = cfg.clamp(stack.next_step())
        gg = gnorm * gnorm
        backtracked = False
        try:
            f_trial = _checked_trial(problem, x, nu, g)
            nfe += 1
            if not f_trial <= f_ref - cfg.c_ls * nu * gg:
                backtracked = True
                tries = 0
                while not f_trial <= f_ref - cfg.c_ls * nu * gg:
                    tries += 1
                    if tries > MAX_BACKTRACKS_PER_STEP:
                        raise EvaluatorFailure("backtracking failed to find sufficient decrease")
                    nu *= cfg.sigma_ls
                    f_trial = _checked_trial(problem, x, nu, g)
                    nfe += 1
                    backtracks += 1
            f_trial = _checked(f_trial)
        except EvaluatorFailure:
            status = "evaluator_failure"
            break

        x = x - nu * g
        f = f_trial
        g_new = np.asarray(problem.gradient(x), dtype=float)
        nge += 1
        iterations += 1
        if not np.all(np.isfinite(g_new)):
            status = "evaluator_failure"
            break
        gnorm_new = float(np.linalg.norm(g_new))
        hasher.update(nu, gnorm_new)
        records.append(IterationRecord(nu, f_ref, gg, f_trial))
        if iterates is not None:
            iterates.append(x.copy())
        history.push(g_new, inv_step=1.0 / nu)
        if backtracked:
            stack = _empty_stack()
        if gnorm_new <= cfg.tol * gnorm0:
            g, gnorm = g_new, gnorm_new
            status = "converged"
            break
        if gnorm_new >= gnorm:
            stack = _empty_stack()
        g, gnorm = g_new, gnorm_new

        if stack.exhausted:
            try:
                stack = make_stack(cfg.engine, history, cfg.thresh)
                # a stack of s steps keeps the s most recent pairs alive:
                # s retained columns of the gradient matrix plus the newest
                history.keep_last(len(stack) + 1)
                sweeps += 1
                consecutive_failures = 0
            except ENGINE_FAILURES:
                consecutive_failures += 1
                if consecutive_failures >= 3:
                    status = "engine_failure"
                    break
                stack = StepStack(np.array([restart_step(gnorm)]))
                sweeps += 1
            f_ref = f

    return RunReport(
        method=cfg.engine,
        problem=getattr(problem, "name", "nonlinear"),
        status=status,
        iterations=iterations,
        nfe=nfe,
        nge=nge,
        sweeps=sweeps,
        backtracks=backtracks,
        cauchy_resets=0,
        wall_time=time.perf_counter() - t0,
        final_gnorm=gnorm,
        gnorm0=gnorm0,
        f_final=f,
        trajectory_hash=hasher.digest(),
        trajectory=records,
        iterates=iterates,
    )


def _checked_trial(problem, x: np.ndarray, nu: float, g: np.ndarray) -> float:
    value = problem.value(x - nu * g)
    if value is None:
        raise EvaluatorFailure("objective returned None")
    return float(value)


def abb_gradient(problem, variant: str, cfg: SolverConfig) -> RunReport:
    """Adaptive two-point gradient method under a nonmonotone line search.

    Switches to the minimum of the recent harmonic stepsizes whenever the
    harmonic one falls below a fraction ``eta`` of the standard one;
    ``variant='min'`` keeps ``eta`` fixed at 0.8 while ``variant='bon'``
    adapts it (start 0.5, factor 0.9 after a switch, 1.1 otherwise).  The
    sufficient-decrease reference is the largest of the last ``m_nonmono``
    accepted values.
    """
    if variant not in ("min", "bon"):
        raise ValueError(f"unknown adaptive variant {variant!r}")
    t0 = time.perf_counter()
    x = np.array(problem.x0, dtype=float)
    f = float(problem.value(x))
    g = np.asarray(problem.gradient(x), dtype=float)
    nfe = nge = 1
    status = "iter_limit"
    if not np.isfinite(f) or not np.all(np.isfinite(g)):
        status = "evaluator_failure"
    gnorm = float(np.linalg.norm(g))
    gnorm0 = gnorm
    if gnorm0 == 0.0 and status == "iter_limit":
        status = "converged"
    records: list[IterationRecord] = []
    iterates = [x.copy()] if cfg.keep_iterates else None
    hasher = _Hasher()
    recent_f: deque[float] = deque([f], maxlen=cfg.m_nonmono)
    bb2_window: deque[float] = deque(maxlen=cfg.m)
    eta = 0.5 if variant == "bon" else 0.8
    beta = cfg.beta0 if cfg.beta0 is not None else 1.0 / gnorm0 if gnorm0 > 0 else 1.0
    x_prev: np.ndarray | None = None
    g_prev: np.ndarray | None = None
    iterations = backtracks = 0

    while status == "iter_limit" and iterations < cfg.max_iter:
        if x_prev is not None:
            pair = bb_stepsizes(x - x_prev, g - g_prev)
            if pair is not None:
                bb1, bb2 = pair
                bb2_window.append(bb2)
                beta, eta = abb_select(variant, bb1, bb2, min(bb2_window), eta)
            else:
                beta = restart_step(gnorm)

        nu = cfg.clamp(beta)
        gg = gnorm * gnorm
        f_ref = max(recent_f)
        try:
            f_trial = _checked_trial(problem, x, nu, g)
            nfe += 1
            tries = 0
            while not f_trial <= f_ref - cfg.c_ls * nu * gg:
                tries += 1
                if tries > MAX_BACKTRACKS_PER_STEP:
                    raise EvaluatorFailure("backtracking failed to find sufficient decrease")
                nu *= cfg.sigma_ls
                f_trial = _checked_trial(problem, x, nu, g)
                nfe += 1
                backtracks += 1
            f_trial = _checked(f_trial)
        except EvaluatorFailure:
            status = "evaluator_failure"
            break

        x_prev, g_prev = x, g
        x = x - nu * g
        f = f_trial
        g = np.asarray(problem.gradient(x), dtype=float)
        nge += 1
        iterations += 1
        if not np.all(np.isfinite(g)):
            status = "evaluator_failure"
            break
        gnorm = float(np.linalg.norm(g))
        hasher.update(nu, gnorm)
        records.append(IterationRecord(nu, f_ref, gg, f_trial))
        if iterates is not None:
            iterates.append(x.copy())
        recent_f.append(f)
        if gnorm <= cfg.tol * gnorm0:
            status = "converged"
            break

    return RunReport(
        method=f"abb-{variant}",
        problem=getattr(problem, "name", "problem"),
        status=status,
        iterations=iterations,
        nfe=nfe,
        nge=nge,
        sweeps=0,
        backtracks=backtracks,
        cauchy_resets=0,
        wall_time=time.perf_counter() - t0,
        final_gnorm=gnorm,
        gnorm0=gnorm0,
        f_final=f,
        trajectory_hash=hasher.digest(),
        trajectory=records,
        iterates=iterates,
    )
