import numpy as np
import pytest

from conftest import fill_nonlinear_history, fill_quadratic_history
from lmsd import general_engines, kernels
from lmsd.general_engines import (
    curtis_guo,
    fletcher_perturbation_report,
    fletcher_tridiag,
    lyapunov_secant,
    lyapunov_secant_H,
    schnabel_pert,
    schnabel_perturbation_report,
    secant_lyapunov_solution,
    _qr_secant_blocks,
)
from lmsd.history import SweepHistory
from lmsd.problems import builtin_nonlinear
from lmsd.quad_engines import harmonic_fletcher, ritz_cholesky


def nonlinear_history(m=3, n=6, name="chained-rosenbrock"):
    problem = builtin_nonlinear(name, n)
    h, _ = fill_nonlinear_history(problem, m, beta0=1e-3)
    return h


def two_gradient_history(g0, g1, beta):
    h = SweepHistory(1)
    h.push(np.asarray(g0, dtype=float))
    h.push(np.asarray(g1, dtype=float), inv_step=1.0 / beta)
    return h


class TestMemoryOneReductions:
    def setup_method(self):
        self.g0 = np.array([2.0, -1.0, 0.5])
        self.g1 = np.array([0.4, 0.3, -0.2])
        self.beta = 0.25
        self.s = -self.beta * self.g0
        self.y = self.g1 - self.g0

    def test_standard_engines(self):
        h = two_gradient_history(self.g0, self.g1, self.beta)
        bb1 = float(self.s @ self.s) / float(self.s @ self.y)
        for engine in (fletcher_tridiag, schnabel_pert):
            assert engine(h).steps[0] == pytest.approx(bb1, rel=1e-12)
        assert lyapunov_secant(h).steps[0] == pytest.approx(bb1, rel=1e-12)

    def test_harmonic_engines(self):
        h = two_gradient_history(self.g0, self.g1, self.beta)
        bb2 = float(self.s @ self.y) / float(self.y @ self.y)
        assert curtis_guo(h).steps[0] == pytest.approx(bb2, rel=1e-12)
        assert lyapunov_secant_H(h).steps[0] == pytest.approx(bb2, rel=1e-12)


class TestQuadraticConsistency:
    def histories(self, rng, count=15):
        out = []
        for _ in range(count):
            m = int(rng.integers(1, 5))
            h, _, _ = fill_quadratic_history(np.diag([1.0, 2.0, 5.0, 7.0, 11.0]), rng.standard_normal(5), m, rng=rng)
            out.append(h)
        return out

    def test_tridiagonalization_matches_quadratic_engine(self, rng):
        for h in self.histories(rng):
            assert np.allclose(fletcher_tridiag(h).steps, ritz_cholesky(h).steps, rtol=1e-8)

    def test_perturbation_vanishes_on_quadratics(self, rng):
        for h in self.histories(rng):
            assert np.allclose(schnabel_pert(h).steps, ritz_cholesky(h).steps, rtol=1e-8)

    def test_harmonic_symmetrization_matches_pencil(self, rng):
        for h in self.histories(rng):
            expected, _ = harmonic_fletcher(h)
            assert np.allclose(curtis_guo(h).steps, expected.steps, rtol=1e-8)


class TestFletcherPerturbation:
    def test_symmetrizes_cross_gramian(self):
        h = nonlinear_history(m=3)
        report, delta = fletcher_perturbation_report(h)
        _, _, s_mat, y_mat, _ = h.assemble()
        y_tilde = y_mat + delta
        cross = y_tilde.T @ s_mat
        assert report.asym_before > 1e-8  # genuinely nonquadratic history
        assert report.asym_after <= 1e-10 * max(1.0, np.linalg.norm(cross))

    def test_projection_eigenvalues_match_perturbed_pencil(self):
        h = nonlinear_history(m=3)
        _, delta = fletcher_perturbation_report(h)
        _, _, s_mat, y_mat, _ = h.assemble()
        y_tilde = y_mat + delta
        oracle = kernels.generalized_eig_oracle(s_mat.T @ y_tilde, s_mat.T @ s_mat)
        got = np.sort(1.0 / fletcher_tridiag(h).steps)
        assert np.allclose(got, oracle[oracle > 0], rtol=1e-8)

    def test_norm_bound_recomputed_independently(self):
        h = nonlinear_history(m=3)
        report, _ = fletcher_perturbation_report(h)
        g_mat, g_next = h.gradient_matrix()
        alphas = h.alphas
        # independent factors: numpy QR instead of the Gramian Cholesky
        q_np, r_np = np.linalg.qr(g_mat)
        jmat = np.zeros((4, 3))
        idx = np.arange(3)
        jmat[idx, idx] = alphas
        jmat[idx + 1, idx] = -alphas
        t_np = np.hstack([r_np, (q_np.T @ g_next)[:, None]]) @ jmat @ np.linalg.inv(r_np)
        t_sym_np = np.tril(t_np, -1) + np.diag(np.diag(t_np)) + np.tril(t_np, -1).T
        bound = np.max(1.0 / alphas) * np.linalg.norm(g_mat, 2) * np.linalg.norm(t_np - t_sym_np, 2)
        assert report.pert_norm_bound == pytest.approx(bound, rel=1e-10)
        assert report.pert_norm <= bound + 1e-10


class TestSchnabelPerturbation:
    def test_symmetrizes_cross_gramian(self):
        h = nonlinear_history(m=3)
        report, delta = schnabel_perturbation_report(h)
        _, _, s_mat, y_mat, _ = h.assemble()
        y_tilde = y_mat + delta
        cross = y_tilde.T @ s_mat
        assert report.asym_after <= 1e-10 * max(1.0, np.linalg.norm(cross))
        assert report.pert_norm <= report.pert_norm_bound + 1e-10

    def test_projection_eigenvalues_match_perturbed_pencil(self):
        h = nonlinear_history(m=3)
        _, delta = schnabel_perturbation_report(h)
        _, _, s_mat, y_mat, _ = h.assemble()
        y_tilde = y_mat + delta
        oracle = kernels.generalized_eig_oracle(s_mat.T @ y_tilde, s_mat.T @ s_mat)
        got = np.sort(1.0 / schnabel_pert(h).steps)
        assert np.allclose(got, oracle[oracle > 0], rtol=1e-8)

    def test_minimum_norm_solution_solves_underdetermined_system(self):
        h = nonlinear_history(m=3)
        _, delta = schnabel_perturbation_report(h)
        _, _, s_mat, y_mat, _ = h.assemble()
        asym = y_mat.T @ s_mat - s_mat.T @ y_mat
        l_mat = -np.tril(asym, -1)
        assert np.allclose(delta.T @ s_mat, l_mat, atol=1e-12 * np.linalg.norm(l_mat))


class TestLyapunovEngines:
    def test_solution_residual_random_pairs(self, rng):
        for _ in range(300):
            m = int(rng.integers(1, 9))
            n = m + int(rng.integers(0, 12))
            s_mat = rng.standard_normal((n, m))
            y_mat = rng.standard_normal((n, m))
            b = secant_lyapunov_solution(s_mat, y_mat)
            assert np.linalg.norm(b - b.T) <= 1e-13 * max(np.linalg.norm(b), 1.0)
            gram = s_mat.T @ s_mat
            cross = s_mat.T @ y_mat
            residual = np.linalg.norm(gram @ b + b @ gram - (cross + cross.T))
            assert residual <= 1e-10 * np.linalg.norm(cross)

    def test_spectrum_containment_under_spd_cross_gramian(self, rng):
        for _ in range(100):
            m = int(rng.integers(1, 7))
            n = m + int(rng.integers(2, 10))
            s_mat = rng.standard_normal((n, m))
            spd = rng.standard_normal((n, n))
            spd = spd @ spd.T + n * np.eye(n)
            y_mat = spd @ s_mat
            b = secant_lyapunov_solution(s_mat, y_mat)
            gram = s_mat.T @ s_mat
            cross = s_mat.T @ y_mat
            bounds = kernels.generalized_eig_oracle(0.5 * (cross + cross.T), gram)
            got = np.linalg.eigvalsh(0.5 * (b + b.T))
            assert got[0] >= bounds[0] - 1e-8 * max(abs(bounds[0]), 1.0)
            assert got[-1] <= bounds[-1] + 1e-8 * max(abs(bounds[-1]), 1.0)

    def test_quadratic_containment_within_hessian_spectrum(self, rng):
        diag = np.array([1.0, 2.0, 4.0, 8.0, 16.0])
        for _ in range(25):
            m = int(rng.integers(1, 5))
            h, _, _ = fill_quadratic_history(np.diag(diag), rng.standard_normal(5), m, rng=rng)
            inv = 1.0 / lyapunov_secant(h).steps
            assert np.all(inv >= diag[0] - 1e-8 * diag[-1])
            assert np.all(inv <= diag[-1] + 1e-8 * diag[-1])
            steps = lyapunov_secant_H(h).steps
            assert np.all(steps >= 1.0 / diag[-1] - 1e-8)
            assert np.all(steps <= 1.0 / diag[0] + 1e-8)

    def test_orthogonal_steps_match_elementwise_solve(self):
        # orthogonal step columns make the coefficient Gramian diagonal
        alphas = np.array([2.0, 1.0, 4.0])
        grads = [
            np.array([2.0, 0.0, 0.0, 0.0]),
            np.array([0.0, 3.0, 0.0, 0.0]),
            np.array([0.0, 0.0, 1.5, 0.0]),
            np.array([0.1, 0.2, 0.3, 0.4]),
        ]
        h = SweepHistory(3)
        h.push(grads[0])
        for g, a in zip(grads[1:], alphas):
            h.push(g, inv_step=float(a))
        _, _, s_mat, y_mat, _ = h.assemble()
        gram = s_mat.T @ s_mat
        assert np.allclose(gram, np.diag(np.diag(gram)), atol=1e-15)
        cross = s_mat.T @ y_mat
        d = np.diag(gram)
        expected = (cross + cross.T) / (d[:, None] + d[None, :])
        got = secant_lyapunov_solution(s_mat, y_mat)
        assert np.allclose(got, expected, rtol=1e-12)
        stack = lyapunov_secant(h, "cholesky-G")
        eigs = np.linalg.eigvalsh(expected)
        assert np.allclose(stack.steps, np.sort(1.0 / eigs[eigs > 0]), rtol=1e-10)

    def test_handlers_agree_without_truncation(self, rng):
        for _ in range(20):
            h, _, _ = fill_quadratic_history(np.diag([1.0, 3.0, 5.0, 9.0, 13.0]), rng.standard_normal(5), 4, rng=rng)
            base = lyapunov_secant(h, "cholesky-G").steps
            assert np.allclose(lyapunov_secant(h, "qr-G").steps, base, rtol=1e-8)
            assert np.allclose(lyapunov_secant(h, "svd-S").steps, base, rtol=1e-8)

    def test_qr_handler_blocks_match_dense_computation(self, rng):
        # permuted cross-Gramian expression validated against a dense rebuild
        for _ in range(20):
            h = nonlinear_history(m=4, n=8)
            e_factor, rhs = _qr_secant_blocks(h, 1e-8)
            _, _, s_mat, y_mat, _ = h.assemble()
            qr = kernels.pivoted_qr(np.column_stack(h.gradients[:-1]), 1e-8)
            sel = qr.perm[: qr.rank]
            s_sel = s_mat[:, sel]
            y_sel = y_mat[:, sel]
            dense_cross = s_sel.T @ y_sel
            dense_rhs = dense_cross + dense_cross.T
            assert np.allclose(rhs, dense_rhs, atol=1e-10 * max(np.linalg.norm(dense_rhs), 1.0))
            dense_gram = s_sel.T @ s_sel
            assert np.allclose(e_factor.T @ e_factor, dense_gram, atol=1e-10 * np.linalg.norm(dense_gram))

    def test_dual_equation_diagonal_closed_form(self, rng):
        h, _, _ = fill_quadratic_history(np.diag([1.0, 2.0, 3.0]), rng.standard_normal(3), 2, rng=rng)
        _, _, s_mat, y_mat, _ = h.assemble()
        gram = y_mat.T @ y_mat
        cross = y_mat.T @ s_mat
        sol = secant_lyapunov_solution(y_mat, s_mat)
        residual = np.linalg.norm(gram @ sol + sol @ gram - (cross + cross.T))
        assert residual <= 1e-10 * np.linalg.norm(cross)
        got = lyapunov_secant_H(h)
        assert np.allclose(np.sort(got.steps), np.sort(np.linalg.eigvalsh(sol)), rtol=1e-8)

    def test_unknown_handler_rejected(self):
        h = nonlinear_history()
        with pytest.raises(ValueError):
            lyapunov_secant(h, handler="nope")


class TestNonquadraticRuns:
    def test_all_engines_emit_positive_finite_stacks(self):
        h = nonlinear_history(m=4, n=10, name="extended-rosenbrock")
        engines = [
            fletcher_tridiag,
            curtis_guo,
            lambda hh: lyapunov_secant(hh, "cholesky-G"),
            lambda hh: lyapunov_secant(hh, "qr-G"),
            lambda hh: lyapunov_secant(hh, "svd-S"),
            lyapunov_secant_H,
            schnabel_pert,
        ]
        for engine in engines:
            steps = engine(h).steps
            assert np.all(np.isfinite(steps))
            assert np.all(steps > 0)
            assert np.all(np.diff(steps) >= 0)
