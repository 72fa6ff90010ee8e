"""Stepsize engines for strictly convex quadratic objectives.

Each engine projects the (implicit) Hessian or inverse Hessian onto the span
of the stored gradients or gradient differences, extracts eigenvalues of the
small projected matrix, and turns them into a stack of stepsizes.  No product
with the Hessian is ever formed: the coupling matrices from
:mod:`lmsd.history` express everything through stored vectors.

Rank deficiency is handled by exactly one mechanism per engine: the
Cholesky-based engines drop the oldest gradients one at a time until the
Gramian factors, while the pivoted-QR and SVD engines truncate in a single
shot at the given threshold.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import kernels
from .history import (
    StepStack,
    SweepHistory,
    bidiagonal_j,
    lower_ones_jtilde,
)

DEFAULT_THRESH = 1e-8


@dataclass(frozen=True)
class ProjectedMatrix:
    """Small symmetric projection of the Hessian (or its inverse).

    ``basis_kind`` records how the basis was obtained and ``size`` the
    retained dimension after truncation; ``approximates_inverse`` is True when
    the eigenvalues estimate inverse Hessian eigenvalues (and are therefore
    used directly as stepsizes).
    """

    matrix: np.ndarray
    basis_kind: str
    size: int
    approximates_inverse: bool


def _drop_oldest(grads: list[np.ndarray], alphas: np.ndarray, drop: int):
    return grads[drop:], alphas[drop:]


def _min_drop(grads: list[np.ndarray], columns: int) -> int:
    # a Gramian of more than n vectors in dimension n is never SPD
    return max(0, columns - grads[0].size)


def _chol_retry_gram(history: SweepHistory):
    """Cholesky of the gradient Gramian, discarding oldest gradients on failure.

    Returns ``(r, g_mat, g_next, alphas)`` for the retained columns.
    """
    grads = history.gradients
    alphas = history.alphas
    p = history.step_count
    if p < 1:
        raise ValueError("history holds no completed step")
    for drop in range(_min_drop(grads, p), p):
        kept, kept_alphas = _drop_oldest(grads, alphas, drop)
        g_mat = np.column_stack(kept[:-1])
        try:
            r = kernels.cholesky(g_mat.T @ g_mat)
        except kernels.NotSPD:
            continue
        return r, g_mat, kept[-1].copy(), kept_alphas
    raise kernels.NotSPD("gradient Gramian not SPD even for a single gradient")


def _chol_retry_extended(history: SweepHistory):
    """Cholesky-style factor of the extended Gramian ``[grads, newest]``.

    Only the leading block (the Gramian of the older gradients) must be SPD;
    oldest gradients are dropped until it factors.  The trailing pivot is the
    norm of the newest gradient's component outside their span and may be
    zero, e.g. at full memory in a small space.  Returns
    ``(factor, g_mat, g_next, alphas)`` with ``factor`` upper triangular of
    size (q+1) x (q+1) for q retained steps.
    """
    grads = history.gradients
    alphas = history.alphas
    p = history.step_count
    if p < 1:
        raise ValueError("history holds no completed step")
    for drop in range(_min_drop(grads, p), p):
        kept, kept_alphas = _drop_oldest(grads, alphas, drop)
        g_mat = np.column_stack(kept[:-1])
        g_next = kept[-1]
        try:
            r = kernels.cholesky(g_mat.T @ g_mat)
        except kernels.NotSPD:
            continue
        rvec = kernels.solve_rt(r, g_mat.T @ g_next)
        rho = np.sqrt(max(float(g_next @ g_next) - float(rvec @ rvec), 0.0))
        q = len(kept_alphas)
        factor = np.zeros((q + 1, q + 1))
        factor[:q, :q] = r
        factor[:q, q] = rvec
        factor[q, q] = rho
        return factor, g_mat, g_next.copy(), kept_alphas
    raise kernels.NotSPD("gradient Gramian not SPD after dropping all but one gradient")


def _chol_retry_diff_gram(history: SweepHistory):
    """Cholesky of the Gramian of gradient differences, dropping oldest pairs.

    Returns ``(r, y_mat, g_next, alphas)``.
    """
    grads = history.gradients
    alphas = history.alphas
    p = history.step_count
    if p < 1:
        raise ValueError("history holds no completed step")
    for drop in range(_min_drop(grads, p), p):
        kept, kept_alphas = _drop_oldest(grads, alphas, drop)
        y_mat = np.diff(np.column_stack(kept), axis=1)
        try:
            r = kernels.cholesky(y_mat.T @ y_mat)
        except kernels.NotSPD:
            continue
        return r, y_mat, kept[-1].copy(), kept_alphas
    raise kernels.NotSPD("difference Gramian not SPD even for a single column")


def tridiag_symmetrize(t: np.ndarray) -> np.ndarray:
    """Replace the strict upper triangle with the transpose of the lower one."""
    lower = np.tril(t, -1)
    return lower + np.diag(np.diag(t)) + lower.T


def _projection_from_cholesky(r, g_mat, g_next, alphas) -> np.ndarray:
    """Raw tridiagonal-in-exact-arithmetic projection from the Gramian factor."""
    rvec = kernels.solve_rt(r, g_mat.T @ g_next)
    w = np.hstack([r, rvec[:, None]]) @ bidiagonal_j(alphas)
    return kernels.rdiv_upper(w, r)


def ritz_matrix_cholesky(history: SweepHistory) -> ProjectedMatrix:
    """Projected Hessian from the Cholesky factor of the gradient Gramian."""
    r, g_mat, g_next, alphas = _chol_retry_gram(history)
    t = _projection_from_cholesky(r, g_mat, g_next, alphas)
    return ProjectedMatrix(tridiag_symmetrize(t), "cholesky-G", t.shape[0], False)


def ritz_matrix_qr(history: SweepHistory, thresh: float = DEFAULT_THRESH) -> ProjectedMatrix:
    """Projected Hessian on the leading pivoted-QR basis of the gradients."""
    g_mat, g_next = history.gradient_matrix()
    alphas = history.alphas
    p = alphas.size
    qr = kernels.pivoted_qr(g_mat, thresh)
    s = qr.rank
    w = np.empty((s, p))
    w[:, qr.perm] = qr.r[:s, :]
    w = np.hstack([w, (qr.q[:, :s].T @ g_next)[:, None]])
    w = (w @ bidiagonal_j(alphas))[:, qr.perm[:s]]
    b = kernels.rdiv_upper(w, qr.r[:s, :s])
    return ProjectedMatrix(0.5 * (b + b.T), "qr-G", s, False)


def ritz_matrix_svd(history: SweepHistory, thresh: float = DEFAULT_THRESH) -> ProjectedMatrix:
    """Projected Hessian on the leading left-singular basis of the gradients."""
    g_mat, g_next = history.gradient_matrix()
    alphas = history.alphas
    sv = kernels.svd(g_mat, thresh)
    w = np.hstack([sv.sigma[:, None] * sv.v.T, (sv.u.T @ g_next)[:, None]])
    b = (w @ bidiagonal_j(alphas)) @ sv.v / sv.sigma[None, :]
    return ProjectedMatrix(0.5 * (b + b.T), "svd-G", sv.rank, False)


def harmonic_matrix_y_cholesky(history: SweepHistory) -> ProjectedMatrix:
    """Projected inverse Hessian from the Cholesky factor of the difference Gramian."""
    r, y_mat, g_next, alphas = _chol_retry_diff_gram(history)
    rvec = kernels.solve_rt(r, -(y_mat.T @ g_next))
    w = np.hstack([r, rvec[:, None]]) @ lower_ones_jtilde(alphas)
    h = kernels.rdiv_upper(w, r)
    return ProjectedMatrix(0.5 * (h + h.T), "cholesky-Y", h.shape[0], True)


def harmonic_matrix_y_qr(history: SweepHistory, thresh: float = DEFAULT_THRESH) -> ProjectedMatrix:
    """Projected inverse Hessian on the leading pivoted-QR basis of the differences."""
    _, g_next, _, y_mat, _ = history.assemble()
    alphas = history.alphas
    p = alphas.size
    qr = kernels.pivoted_qr(y_mat, thresh)
    s = qr.rank
    w = np.empty((s, p))
    w[:, qr.perm] = qr.r[:s, :]
    w = np.hstack([w, -(qr.q[:, :s].T @ g_next)[:, None]])
    w = (w @ lower_ones_jtilde(alphas))[:, qr.perm[:s]]
    h = kernels.rdiv_upper(w, qr.r[:s, :s])
    return ProjectedMatrix(0.5 * (h + h.T), "qr-Y", s, True)


def harmonic_matrix_y_svd(history: SweepHistory, thresh: float = DEFAULT_THRESH) -> ProjectedMatrix:
    """Projected inverse Hessian on the leading left-singular basis of the differences."""
    _, g_next, _, y_mat, _ = history.assemble()
    alphas = history.alphas
    sv = kernels.svd(y_mat, thresh)
    w = np.hstack([sv.sigma[:, None] * sv.v.T, -(sv.u.T @ g_next)[:, None]])
    h = (w @ lower_ones_jtilde(alphas)) @ sv.v / sv.sigma[None, :]
    return ProjectedMatrix(0.5 * (h + h.T), "svd-Y", sv.rank, True)


def harmonic_pencil(history: SweepHistory) -> tuple[ProjectedMatrix, np.ndarray]:
    """Symmetrized Hessian projection and its squared counterpart.

    Returns the tridiagonalized projection ``t`` and the pentadiagonal
    ``p = w.T @ w`` built from the extended Gramian factor; harmonic Ritz
    values are the eigenvalues of the pencil ``(p, t)``.
    """
    factor, g_mat, g_next, alphas = _chol_retry_extended(history)
    q = alphas.size
    r = factor[:q, :q]
    t = _projection_from_cholesky(r, g_mat, g_next, alphas)
    w = kernels.rdiv_upper(factor @ bidiagonal_j(alphas), r)
    p_mat = w.T @ w
    return ProjectedMatrix(tridiag_symmetrize(t), "harmonic-pencil", q, False), p_mat


def _harmonic_extraction(history: SweepHistory):
    """Harmonic Ritz values/vectors from the pencil of the extended Gramian."""
    t_proj, p_mat = harmonic_pencil(history)
    try:
        theta, vecs = scipy.linalg.eigh(p_mat, t_proj.matrix)
    except (scipy.linalg.LinAlgError, np.linalg.LinAlgError) as exc:
        raise kernels.NotSPD(f"projected Hessian not SPD in harmonic pencil: {exc}") from exc
    return t_proj.matrix, theta, vecs


def ritz_cholesky(history: SweepHistory, thresh: float = DEFAULT_THRESH) -> StepStack:
    """Stack of inverse Ritz values via the gradient Gramian (thresh unused)."""
    eigs, _ = kernels.sym_eig(ritz_matrix_cholesky(history).matrix)
    return StepStack.from_hessian_eigenvalues(eigs)


def ritz_pivoted_qr(history: SweepHistory, thresh: float = DEFAULT_THRESH) -> StepStack:
    """Stack of inverse Ritz values via pivoted QR of the gradients."""
    eigs, _ = kernels.sym_eig(ritz_matrix_qr(history, thresh).matrix)
    return StepStack.from_hessian_eigenvalues(eigs)


def ritz_svd(history: SweepHistory, thresh: float = DEFAULT_THRESH) -> StepStack:
    """Stack of inverse Ritz values via a truncated SVD of the gradients."""
    eigs, _ = kernels.sym_eig(ritz_matrix_svd(history, thresh).matrix)
    return StepStack.from_hessian_eigenvalues(eigs)


def harmonic_fletcher(history: SweepHistory, thresh: float = DEFAULT_THRESH):
    """Stack of inverse harmonic Ritz values, plus the pencil eigenvectors."""
    _, theta, vecs = _harmonic_extraction(history)
    return StepStack.from_hessian_eigenvalues(theta), vecs


def harmonic_rq(history: SweepHistory, thresh: float = DEFAULT_THRESH) -> StepStack:
    """Rayleigh-quotient refinement of the harmonic Ritz vectors.

    The quotient of each harmonic vector against the Hessian projection is
    scale invariant; vectors are normalized to unit length only as hygiene.
    """
    t_sym, _, vecs = _harmonic_extraction(history)
    norms2 = np.sum(vecs * vecs, axis=0)
    quotients = np.einsum("ij,ij->j", vecs, t_sym @ vecs) / norms2
    return StepStack.from_hessian_eigenvalues(quotients)


def harmonic_y_cholesky(history: SweepHistory, thresh: float = DEFAULT_THRESH) -> StepStack:
    """Stack of harmonic stepsizes via the difference Gramian (thresh unused)."""
    eigs, _ = kernels.sym_eig(harmonic_matrix_y_cholesky(history).matrix)
    return StepStack.from_inverse_hessian_eigenvalues(eigs)


def harmonic_y_qr(history: SweepHistory, thresh: float = DEFAULT_THRESH) -> StepStack:
    """Stack of harmonic stepsizes via pivoted QR of the differences."""
    eigs, _ = kernels.sym_eig(harmonic_matrix_y_qr(history, thresh).matrix)
    return StepStack.from_inverse_hessian_eigenvalues(eigs)


def harmonic_y_svd(history: SweepHistory, thresh: float = DEFAULT_THRESH) -> StepStack:
    """Stack of harmonic stepsizes via a truncated SVD of the differences."""
    eigs, _ = kernels.sym_eig(harmonic_matrix_y_svd(history, thresh).matrix)
    return StepStack.from_inverse_hessian_eigenvalues(eigs)
