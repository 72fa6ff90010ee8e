import numpy as np
import pytest

from lmsd import solvers
from lmsd.history import AllNegative
from lmsd.problems import NonlinearProblem, builtin_nonlinear, dense_quadratic, geometric_quadratic
from lmsd.quad_engines import ritz_cholesky
from lmsd.solvers import (
    NonPositiveCurvature,
    RunReport,
    SolverConfig,
    abb_gradient,
    abb_select,
    bb_stepsizes,
    cauchy_step,
    make_stack,
    restart_step,
    solve_general,
    solve_quadratic,
)

DIAG125 = np.diag([1.0, 2.0, 5.0])


def quad_diag125(x0=(1.0, 1.0, 1.0)):
    return dense_quadratic(DIAG125, np.zeros(3), np.array(x0), "diag125")


def wrap_nonlinear(qp):
    return NonlinearProblem(qp.name, qp.n, qp.value, qp.gradient, qp.x0)


class TestCauchyStep:
    def test_identity(self):
        assert cauchy_step(np.array([3.0, 4.0]), np.eye(2)) == pytest.approx(1.0)

    def test_direct_formula(self):
        assert cauchy_step(np.array([1.0, 1.0]), np.diag([1.0, 4.0])) == pytest.approx(2.0 / 5.0)

    def test_strict_decrease(self, rng):
        for _ in range(20):
            q, _ = np.linalg.qr(rng.standard_normal((6, 6)))
            a = q @ np.diag(rng.uniform(0.5, 9.0, 6)) @ q.T
            x = rng.standard_normal(6)
            g = a @ x
            beta = cauchy_step(g, a)
            f = lambda z: 0.5 * z @ a @ z
            assert f(x - beta * g) < f(x)

    def test_non_positive_curvature(self):
        with pytest.raises(NonPositiveCurvature):
            cauchy_step(np.array([1.0, 0.0]), np.diag([-1.0, 1.0]))


class TestSolveQuadratic:
    def test_identity_hessian_one_step(self):
        qp = dense_quadratic(np.eye(4), np.zeros(4), np.full(4, 2.5), "eye")
        report = solve_quadratic(qp, SolverConfig(engine="lmsd-g", m=3, beta0=1.0))
        assert report.status == "converged"
        assert report.iterations == 1
        assert report.final_gnorm == 0.0
        assert report.nge >= report.iterations

    def test_memory_one_equals_two_point_method(self):
        # side-by-side transcription of the m=1 sweep with direct formulas
        a = np.diag([1.0, 10.0])
        qp = dense_quadratic(a, np.zeros(2), np.array([10.0, 10.0]), "diag110")
        cfg = SolverConfig(engine="lmsd-g", m=1, tol=1e-12, beta0=1.0, max_iter=60, keep_iterates=True)
        report = solve_quadratic(qp, cfg)

        x = qp.x0.copy()
        g = a @ x
        f_ref = 0.5 * x @ a @ x
        pending = 1.0
        mine = [x.copy()]
        for _ in range(report.iterations):
            nu = pending
            x_new = x - nu * g
            g_new = a @ x_new
            f_new = 0.5 * x_new @ a @ x_new
            if np.linalg.norm(g_new) <= 1e-12 * np.linalg.norm(a @ qp.x0):
                mine.append(x_new)
                break
            if f_new >= f_ref:
                mine.append(x.copy())
                pending = (g @ g) / (g @ (a @ g))
                continue
            mine.append(x_new.copy())
            pending = (g @ g) / (g @ (a @ g))
            f_ref = f_new
            x, g = x_new, g_new
        assert len(mine) == len(report.iterates)
        # pointwise component-relative comparison is ill-posed where a step
        # annihilates a component, so measure against the trajectory scale
        scale = max(np.linalg.norm(z) for z in mine)
        for ours, theirs in zip(report.iterates, mine):
            assert np.linalg.norm(ours - theirs) <= 1e-12 * scale

    def test_reference_value_decreases_across_sweeps(self):
        qp = quad_diag125((4.0, -2.0, 1.0))
        report = solve_quadratic(qp, SolverConfig(engine="lmsd-g", m=3, beta0=1.0, tol=1e-10))
        assert report.status == "converged"
        refs = []
        for rec in report.trajectory:
            if not refs or rec.f_ref != refs[-1]:
                refs.append(rec.f_ref)
        assert all(b < a for a, b in zip(refs, refs[1:]))

    def test_value_drops_below_reference_after_reset(self):
        qp = dense_quadratic(np.diag([1.0, 10.0]), np.zeros(2), np.array([10.0, 10.0]), "diag110")
        report = solve_quadratic(qp, SolverConfig(engine="lmsd-g", m=1, beta0=1.0, tol=1e-10))
        assert report.cauchy_resets > 0
        recs = report.trajectory
        for i, rec in enumerate(recs):
            if rec.event == "reset" and i + 1 < len(recs):
                assert recs[i + 1].f_new < rec.f_ref

    def test_steps_clamped_and_ascending_within_sweeps(self):
        qp = quad_diag125()
        cfg = SolverConfig(engine="lmsd-g", m=3, beta0=0.2, tol=1e-9)
        report = solve_quadratic(qp, cfg)
        steps = [rec.step for rec in report.trajectory]
        assert all(cfg.beta_min <= s <= cfg.beta_max for s in steps)
        # within a sweep (constant reference value) steps are consumed ascending
        by_ref: dict[float, list[float]] = {}
        for rec in report.trajectory:
            by_ref.setdefault(rec.f_ref, []).append(rec.step)
        for chunk in by_ref.values():
            assert all(a <= b for a, b in zip(chunk, chunk[1:]))

    def test_deterministic_hash(self):
        qp = geometric_quadratic(40, 1.1)
        cfg = SolverConfig(engine="lmsd-g-svd", m=5, beta0=1.0)
        first = solve_quadratic(qp, cfg)
        second = solve_quadratic(qp, cfg)
        assert first.trajectory_hash == second.trajectory_hash
        assert first.iterations == second.iterations

    def test_engine_failure_after_three_attempts(self, monkeypatch):
        def broken(history, thresh):
            raise AllNegative("forced")

        monkeypatch.setitem(solvers.STEP_ENGINES, "broken", broken)
        qp = quad_diag125()
        report = solve_quadratic(qp, SolverConfig(engine="broken", m=3, beta0=0.1, max_iter=50))
        assert report.status == "engine_failure"

    def test_single_engine_failure_recovers_with_restart_step(self, monkeypatch):
        calls = {"count": 0}

        def flaky(history, thresh):
            calls["count"] += 1
            if calls["count"] == 1:
                raise AllNegative("first call only")
            return ritz_cholesky(history, thresh)

        monkeypatch.setitem(solvers.STEP_ENGINES, "flaky", flaky)
        qp = quad_diag125()
        report = solve_quadratic(qp, SolverConfig(engine="flaky", m=3, beta0=0.1, tol=1e-8))
        assert report.status == "converged"
        assert calls["count"] > 1


class TestSolveGeneral:
    def test_unit_quadratic_single_step(self):
        problem = NonlinearProblem(
            "half-norm",
            5,
            lambda x: 0.5 * float(x @ x),
            lambda x: x,
            np.full(5, 3.0),
        )
        report = solve_general(problem, SolverConfig(engine="lmsd-chol", m=3, beta0=1.0))
        assert report.status == "converged"
        assert report.iterations == 1
        assert report.backtracks == 0

    def test_matches_quadratic_solver_when_no_safeguard_fires(self):
        qp = quad_diag125()
        cfg = SolverConfig(engine="lmsd-g", m=3, tol=1e-9, beta0=0.2)
        rq = solve_quadratic(qp, cfg)
        rg = solve_general(wrap_nonlinear(qp), cfg)
        assert rq.cauchy_resets == 0
        assert rg.backtracks == 0
        assert rq.status == rg.status == "converged"
        assert len(rq.trajectory) == len(rg.trajectory)
        for a, b in zip(rq.trajectory, rg.trajectory):
            assert a.step == pytest.approx(b.step, rel=1e-12)

    def test_rosenbrock_converges_and_satisfies_sufficient_decrease(self):
        problem = builtin_nonlinear("extended-rosenbrock", 100)
        cfg = SolverConfig(engine="lmsd-lya", m=5)
        report = solve_general(problem, cfg)
        assert report.status == "converged"
        assert report.final_gnorm <= cfg.tol * report.gnorm0
        for rec in report.trajectory:
            assert rec.f_new <= rec.f_ref - cfg.c_ls * rec.step * rec.gnorm_sq

    def test_nan_objective_aborts(self):
        problem = NonlinearProblem(
            "poison",
            2,
            lambda x: float("nan"),
            lambda x: np.ones(2),
            np.zeros(2),
        )
        report = solve_general(problem, SolverConfig(engine="lmsd-chol", m=2, beta0=1.0, max_iter=10))
        assert report.status == "evaluator_failure"

    def test_nan_gradient_aborts(self):
        problem = NonlinearProblem(
            "poison-grad",
            2,
            lambda x: float(x @ x),
            lambda x: np.full(2, np.nan) if x[0] < 0.9 else 2.0 * x,
            np.ones(2),
        )
        report = solve_general(problem, SolverConfig(engine="lmsd-chol", m=2, beta0=1.0, max_iter=10))
        assert report.status == "evaluator_failure"

    def test_deterministic_hash(self):
        problem = builtin_nonlinear("broyden-tridiagonal", 60)
        cfg = SolverConfig(engine="lmsd-pert", m=4)
        assert solve_general(problem, cfg).trajectory_hash == solve_general(problem, cfg).trajectory_hash


class TestAdaptiveTwoPoint:
    def test_bb_stepsizes_formulas(self):
        s = np.array([1.0, 2.0])
        y = np.array([2.0, 2.0])
        bb1, bb2 = bb_stepsizes(s, y)
        assert bb1 == pytest.approx(5.0 / 6.0)
        assert bb2 == pytest.approx(6.0 / 8.0)
        assert bb_stepsizes(s, -y) is None

    def test_min_variant_switches_to_window_minimum(self):
        beta, eta = abb_select("min", bb1=1.0, bb2=0.7, window_min=0.7, eta=0.8)
        assert beta == 0.7
        assert eta == 0.8

    def test_min_variant_keeps_standard_step(self):
        beta, eta = abb_select("min", bb1=1.0, bb2=0.9, window_min=0.7, eta=0.8)
        assert beta == 1.0
        assert eta == 0.8

    def test_adaptive_threshold_update(self):
        beta, eta = abb_select("bon", bb1=1.0, bb2=0.3, window_min=0.3, eta=0.5)
        assert beta == 0.3
        assert eta == pytest.approx(0.45)
        beta, eta = abb_select("bon", bb1=1.0, bb2=0.9, window_min=0.3, eta=0.5)
        assert beta == 1.0
        assert eta == pytest.approx(0.55)

    def test_window_minimum_uses_recent_values(self):
        qp = geometric_quadratic(30, 1.15)
        report = abb_gradient(qp, "min", SolverConfig(m=5, beta0=1.0, max_iter=20000))
        assert report.status == "converged"

    def test_converges_on_mildly_conditioned_quadratic(self):
        qp = geometric_quadratic(100, np.exp(np.log(100) / 99))  # eigenvalues 1..100
        for variant in ("min", "bon"):
            report = abb_gradient(qp, variant, SolverConfig(m=5, beta0=1.0, max_iter=50_000))
            assert report.status == "converged"
            assert report.iterations <= 50_000

    def test_sufficient_decrease_against_recent_maximum(self):
        problem = builtin_nonlinear("chained-rosenbrock", 50)
        cfg = SolverConfig(m=5, m_nonmono=10)
        report = abb_gradient(problem, "min", cfg)
        assert report.status == "converged"
        for rec in report.trajectory:
            assert rec.f_new <= rec.f_ref - cfg.c_ls * rec.step * rec.gnorm_sq

    def test_rejects_unknown_variant(self):
        with pytest.raises(ValueError):
            abb_gradient(quad_diag125(), "median", SolverConfig())


class TestConfigAndRegistry:
    def test_unknown_engine(self):
        from lmsd.history import SweepHistory

        h = SweepHistory(2)
        h.push(np.ones(2))
        h.push(np.zeros(2), inv_step=1.0)
        with pytest.raises(ValueError):
            make_stack("nonexistent", h, 1e-8)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            SolverConfig(m=0)
        with pytest.raises(ValueError):
            SolverConfig(beta_min=1.0, beta_max=0.5)
        with pytest.raises(ValueError):
            SolverConfig(c_ls=2.0)

    def test_restart_step_saturation(self):
        assert restart_step(1e-9) == 1e5
        assert restart_step(10.0) == 1.0
        assert restart_step(1e-3) == 1e3

    def test_report_counts_consistent(self):
        report = solve_quadratic(quad_diag125(), SolverConfig(engine="lmsd-g", m=3, beta0=0.2))
        assert isinstance(report, RunReport)
        assert report.nge >= report.iterations
        assert report.nfe >= report.iterations
