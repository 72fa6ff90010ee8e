"""Stepsize engines for general nonlinear objectives.

Away from the quadratic case the projected matrices of
:mod:`lmsd.quad_engines` lose their interpretation as Hessian projections and
may have complex eigenvalues.  The engines here restore real spectra in three
ways: tridiagonalizing the projection (which amounts to an implicit
perturbation of the gradient differences), perturbing the differences
explicitly so that multiple secant equations hold at once, or solving the
least-squares secant condition under a symmetry constraint, which is a small
Lyapunov equation.

Every Lyapunov equation is reduced to diagonal form through a truncated SVD
of its effective factor and solved elementwise; the truncation threshold
applies to the squared singular values since the coefficient matrix is the
factor's Gramian.  An extra SVD is applied even after the Cholesky and
pivoted-QR handlers, whose factors do not expose the squared condition number
reliably.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import kernels
from .history import StepStack, SweepHistory, bidiagonal_j, difference_k
from .quad_engines import (
    DEFAULT_THRESH,
    _chol_retry_extended,
    _chol_retry_gram,
    _projection_from_cholesky,
    ritz_matrix_cholesky,
    tridiag_symmetrize,
)

# Eigenvalues at or below this fraction of the largest one are treated as
# numerically zero and discarded alongside the negatives; otherwise roundoff
# can manufacture stepsizes of order 1/eps.
EIG_REL_FLOOR = 1e-16

LYAPUNOV_HANDLERS = ("cholesky-G", "qr-G", "svd-S")


@dataclass(frozen=True)
class LyapunovSystem:
    """Diagonalized projected Lyapunov system and its elementwise solution."""

    sigma: np.ndarray
    v: np.ndarray
    rhs: np.ndarray
    solution: np.ndarray


@dataclass(frozen=True)
class PerturbationReport:
    """Diagnostics for a symmetrizing perturbation of the gradient differences."""

    asym_before: float
    asym_after: float
    pert_norm: float
    pert_norm_bound: float


def _solve_projected_lyapunov(e_factor: np.ndarray, rhs: np.ndarray, thresh: float) -> LyapunovSystem:
    """Solve ``E^T E B + B E^T E = rhs`` projected on the leading singular space of E."""
    sv = kernels.svd(e_factor, math.sqrt(thresh))
    projected = sv.v.T @ rhs @ sv.v
    projected = 0.5 * (projected + projected.T)
    solution = kernels.lyap_diag_solve(sv.sigma, projected)
    return LyapunovSystem(sigma=sv.sigma, v=sv.v, rhs=projected, solution=solution)


def secant_lyapunov_solution(s_mat: np.ndarray, y_mat: np.ndarray, thresh: float = DEFAULT_THRESH) -> np.ndarray:
    """Symmetric solution of the secant Lyapunov equation for explicit factors.

    Solves ``S^T S B + B S^T S = 2 sym(S^T Y)`` on the retained right singular
    space of ``S`` and maps the solution back; with a full-rank ``S`` this is
    the unique solution of the full equation.
    """
    cross = s_mat.T @ y_mat
    system = _solve_projected_lyapunov(s_mat, cross + cross.T, thresh)
    return system.v @ system.solution @ system.v.T


def fletcher_tridiag(history: SweepHistory, thresh: float = DEFAULT_THRESH) -> StepStack:
    """Tridiagonalize the Gramian-based projection and invert its eigenvalues.

    Identical construction to the quadratic Cholesky engine; on quadratics the
    two produce the same stack.
    """
    eigs, _ = kernels.sym_eig(ritz_matrix_cholesky(history).matrix)
    return StepStack.from_hessian_eigenvalues(eigs, rel_floor=EIG_REL_FLOOR)


def curtis_guo(history: SweepHistory, thresh: float = DEFAULT_THRESH) -> StepStack:
    """Harmonic stepsizes from the symmetrized projection and its square.

    The squared projection is rebuilt from the tridiagonalized one plus the
    rank-one tail of the extended Gramian factor, so the pencil is symmetric
    definite whenever that rebuild is SPD; its eigenvalues are stepsizes
    directly.
    """
    factor, g_mat, g_next, alphas = _chol_retry_extended(history)
    q = alphas.size
    r = factor[:q, :q]
    t = _projection_from_cholesky(r, g_mat, g_next, alphas)
    t_sym = tridiag_symmetrize(t)
    xi_row = kernels.rdiv_upper(factor[q : q + 1, :] @ bidiagonal_j(alphas), r)
    p_sym = t_sym.T @ t_sym + xi_row.T @ xi_row
    try:
        eigs = scipy.linalg.eigh(t_sym, p_sym, eigvals_only=True)
    except (scipy.linalg.LinAlgError, np.linalg.LinAlgError) as exc:
        raise kernels.NotSPD(f"squared projection not SPD: {exc}") from exc
    return StepStack.from_inverse_hessian_eigenvalues(eigs, rel_floor=EIG_REL_FLOOR)


def _gram_secant_blocks(history: SweepHistory):
    """Effective factor and right-hand side of the secant Lyapunov equation,
    assembled from the Cholesky factor of the (possibly reduced) Gramian."""
    r, g_mat, g_next, alphas = _chol_retry_gram(history)
    p = alphas.size
    rvec = kernels.solve_rt(r, g_mat.T @ g_next)
    sty = -(r.T @ np.hstack([r, rvec[:, None]]) @ difference_k(p)) / alphas[:, None]
    e_factor = r / alphas[None, :]
    return e_factor, sty + sty.T


def _qr_secant_blocks(history: SweepHistory, thresh: float):
    """Same blocks restricted to the pivoted-QR selection of step columns."""
    g_mat, g_next = history.gradient_matrix()
    alphas = history.alphas
    p = alphas.size
    qr = kernels.pivoted_qr(g_mat, thresh)
    s = qr.rank
    sel = qr.perm[:s]
    d_sel = alphas[sel]
    r_g = qr.r[:s, :s]
    unperm = np.empty((s, p))
    unperm[:, qr.perm] = qr.r[:s, :]
    block = np.hstack([r_g.T @ unperm, (g_mat[:, sel].T @ g_next)[:, None]])
    sty = -(block @ difference_k(p))[:, sel] / d_sel[:, None]
    e_factor = r_g / d_sel[None, :]
    return e_factor, sty + sty.T


def lyapunov_secant(
    history: SweepHistory,
    handler: str = "cholesky-G",
    thresh: float = DEFAULT_THRESH,
) -> StepStack:
    """Symmetry-constrained secant solution; inverse eigenvalues are the steps.

    ``handler`` picks the rank-deficiency treatment: ``cholesky-G`` discards
    the oldest gradients until the Gramian factors, ``qr-G`` keeps the
    pivoted-QR column selection, and ``svd-S`` works on the leading right
    singular space of the step differences directly.
    """
    if handler == "cholesky-G":
        e_factor, rhs = _gram_secant_blocks(history)
    elif handler == "qr-G":
        e_factor, rhs = _qr_secant_blocks(history, thresh)
    elif handler == "svd-S":
        _, _, s_mat, y_mat, _ = history.assemble()
        cross = s_mat.T @ y_mat
        e_factor, rhs = s_mat, cross + cross.T
    else:
        raise ValueError(f"unknown handler {handler!r}; expected one of {LYAPUNOV_HANDLERS}")
    system = _solve_projected_lyapunov(e_factor, rhs, thresh)
    eigs, _ = kernels.sym_eig(system.solution)
    return StepStack.from_hessian_eigenvalues(eigs, rel_floor=EIG_REL_FLOOR)


def lyapunov_secant_H(history: SweepHistory, thresh: float = DEFAULT_THRESH) -> StepStack:
    """Dual secant solution on the gradient differences; eigenvalues are steps.

    The difference Gramian is expressed through the extended Gramian factor,
    so rank handling again discards the oldest gradients.
    """
    factor, g_mat, g_next, alphas = _chol_retry_extended(history)
    q = alphas.size
    r = factor[:q, :q]
    rvec = factor[:q, q]
    sty = -(r.T @ np.hstack([r, rvec[:, None]]) @ difference_k(q)) / alphas[:, None]
    e_factor = factor @ difference_k(q)
    system = _solve_projected_lyapunov(e_factor, sty + sty.T, thresh)
    eigs, _ = kernels.sym_eig(system.solution)
    return StepStack.from_inverse_hessian_eigenvalues(eigs, rel_floor=EIG_REL_FLOOR)


def _schnabel_parts(history: SweepHistory):
    r, g_mat, g_next, alphas = _chol_retry_gram(history)
    s_mat = -g_mat / alphas[None, :]
    y_mat = np.diff(np.column_stack([g_mat, g_next[:, None]]), axis=1)
    asym = y_mat.T @ s_mat - s_mat.T @ y_mat
    l_mat = -np.tril(asym, -1)
    return r, g_mat, g_next, alphas, s_mat, y_mat, l_mat


def schnabel_pert(history: SweepHistory, thresh: float = DEFAULT_THRESH) -> StepStack:
    """Minimum-norm perturbation of the differences, then inverse eigenvalues.

    The perturbation symmetrizes the cross Gramian of steps and differences,
    which guarantees a symmetric approximate Hessian behind the projection;
    the projection itself needs only the Gramian Cholesky factor.
    """
    r, g_mat, g_next, alphas, _, _, l_mat = _schnabel_parts(history)
    t = _projection_from_cholesky(r, g_mat, g_next, alphas)
    core = l_mat.T * np.outer(alphas, alphas)
    z = kernels.rdiv_upper(kernels.solve_rt(r, core), r)
    b = t + z
    eigs, _ = kernels.sym_eig(0.5 * (b + b.T))
    return StepStack.from_hessian_eigenvalues(eigs, rel_floor=EIG_REL_FLOOR)


def _asym_norm(y_mat: np.ndarray, s_mat: np.ndarray) -> float:
    return float(np.linalg.norm(y_mat.T @ s_mat - s_mat.T @ y_mat))


def fletcher_perturbation_report(history: SweepHistory) -> tuple[PerturbationReport, np.ndarray]:
    """Explicit difference perturbation implied by tridiagonalization.

    Returns the diagnostics and the perturbation matrix itself.  The norm
    bound is the largest retained stepsize times the spectral norms of the
    Gramian factor and of the symmetrization gap.
    """
    r, g_mat, g_next, alphas = _chol_retry_gram(history)
    s_mat = -g_mat / alphas[None, :]
    y_mat = np.diff(np.column_stack([g_mat, g_next[:, None]]), axis=1)
    t = _projection_from_cholesky(r, g_mat, g_next, alphas)
    t_sym = tridiag_symmetrize(t)
    q_mat = kernels.rdiv_upper(g_mat, r)
    delta = q_mat @ ((np.triu(t, 1) - np.tril(t, -1).T) @ r) / alphas[None, :]
    bound = float(np.max(1.0 / alphas) * np.linalg.norm(r, 2) * np.linalg.norm(t - t_sym, 2))
    report = PerturbationReport(
        asym_before=_asym_norm(y_mat, s_mat),
        asym_after=_asym_norm(y_mat + delta, s_mat),
        pert_norm=float(np.linalg.norm(delta, 2)),
        pert_norm_bound=bound,
    )
    return report, delta


def schnabel_perturbation_report(history: SweepHistory) -> tuple[PerturbationReport, np.ndarray]:
    """Explicit minimum-norm perturbation solving the symmetrization system."""
    _, _, _, _, s_mat, y_mat, l_mat = _schnabel_parts(history)
    delta = s_mat @ np.linalg.solve(s_mat.T @ s_mat, l_mat.T)
    smallest_sv = float(np.linalg.svd(s_mat, compute_uv=False)[-1])
    report = PerturbationReport(
        asym_before=_asym_norm(y_mat, s_mat),
        asym_after=_asym_norm(y_mat + delta, s_mat),
        pert_norm=float(np.linalg.norm(delta, 2)),
        pert_norm_bound=float(np.linalg.norm(l_mat, 2)) / smallest_sv,
    )
    return report, delta
