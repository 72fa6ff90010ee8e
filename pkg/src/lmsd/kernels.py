"""Small dense linear-algebra kernels shared by every stepsize engine.

All routines operate on small matrices (the memory parameter rarely exceeds
15), so dense storage is used throughout and clarity wins over blocking.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

# Relative pivot floor: a Cholesky pivot at or below this fraction of the
# largest diagonal entry is treated as a failure, not only pivots <= 0.
CHOLESKY_PIVOT_FLOOR = 1e-14

# Column norms at or below this are treated as exactly zero.
UNDERFLOW_GUARD = 1e-300

# Relative tolerance within which column norms count as tied during pivoting.
PIVOT_TIE_REL = 1e-14


class NotSPD(Exception):
    """Matrix is numerically not symmetric positive definite."""


class ZeroMatrix(Exception):
    """Every column of the input is numerically zero."""


class NoConvergence(Exception):
    """An iterative eigenvalue or SVD routine failed to converge."""


@dataclass(frozen=True)
class PivotedQrResult:
    """Column-pivoted QR factorization ``mat[:, perm] == q @ r``.

    ``q`` has orthonormal columns, ``r`` is upper triangular with diagonal
    magnitudes nonincreasing, and ``rank`` counts the leading diagonal
    entries above the truncation threshold.
    """

    q: np.ndarray
    r: np.ndarray
    perm: np.ndarray
    rank: int


@dataclass(frozen=True)
class SvdResult:
    """Truncated singular value decomposition ``mat ~= u @ diag(sigma) @ v.T``.

    Only the ``rank`` leading triplets with ``sigma_i >= thresh * sigma_1``
    are kept.
    """

    u: np.ndarray
    sigma: np.ndarray
    v: np.ndarray
    rank: int


def cholesky(mat: np.ndarray) -> np.ndarray:
    """Upper-triangular ``r`` with ``r.T @ r == mat`` for an SPD ``mat``.

    Raises
    ------
    NotSPD
        When any pivot is non-finite or falls at or below
        ``CHOLESKY_PIVOT_FLOOR`` times the largest diagonal entry; this also
        rejects nearly singular Gramians that plain positivity would accept.
    """
    a = np.array(mat, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("cholesky expects a square matrix")
    p = a.shape[0]
    floor = CHOLESKY_PIVOT_FLOOR * float(np.max(np.diag(a)))
    r = np.zeros((p, p))
    for j in range(p):
        pivot = a[j, j] - r[:j, j] @ r[:j, j]
        if not np.isfinite(pivot) or pivot <= floor:
            raise NotSPD(f"pivot {pivot:.3e} at column {j} (floor {floor:.3e})")
        rjj = np.sqrt(pivot)
        r[j, j] = rjj
        if j + 1 < p:
            r[j, j + 1 :] = (a[j, j + 1 :] - r[:j, j] @ r[:j, j + 1 :]) / rjj
    return r


def pivoted_qr(mat: np.ndarray, thresh: float = 1e-8) -> PivotedQrResult:
    """Rank-revealing QR with greedy column pivoting.

    At each step the trailing column of maximal Euclidean norm is chosen;
    norms are recomputed exactly, and ties within ``PIVOT_TIE_REL`` break to
    the lowest column index so runs are deterministic.  The retained rank is
    the number of leading diagonal entries with
    ``|r[i, i]| > thresh * |r[0, 0]|``.

    Raises
    ------
    ZeroMatrix
        When every column norm is at or below the underflow guard.
    """
    a = np.array(mat, dtype=float)
    if a.ndim != 2:
        raise ValueError("pivoted_qr expects a matrix")
    n, m = a.shape
    k = min(n, m)
    perm = np.arange(m)
    if np.all(np.linalg.norm(a, axis=0) <= UNDERFLOW_GUARD):
        raise ZeroMatrix("all columns are numerically zero")

    reflectors: list[tuple[int, np.ndarray]] = []
    for j in range(k):
        norms = np.linalg.norm(a[j:, j:], axis=0)
        best = float(norms.max())
        if best <= UNDERFLOW_GUARD:
            break
        candidates = np.nonzero(norms >= best * (1.0 - PIVOT_TIE_REL))[0]
        piv = j + int(candidates.min())
        if piv != j:
            a[:, [j, piv]] = a[:, [piv, j]]
            perm[[j, piv]] = perm[[piv, j]]
        x = a[j:, j]
        alpha = np.linalg.norm(x)
        if x[0] > 0:
            alpha = -alpha
        v = x.copy()
        v[0] -= alpha
        vnorm = np.linalg.norm(v)
        if vnorm > 0:
            v /= vnorm
            a[j:, j:] -= 2.0 * np.outer(v, v @ a[j:, j:])
            reflectors.append((j, v))
        a[j, j] = alpha
        a[j + 1 :, j] = 0.0

    r = np.triu(a[:k, :])
    q = np.zeros((n, k))
    q[:k, :k] = np.eye(k)
    for j, v in reversed(reflectors):
        q[j:, :] -= 2.0 * np.outer(v, v @ q[j:, :])

    diag = np.abs(np.diag(r))
    rank = int(np.sum(diag > thresh * diag[0]))
    rank = max(rank, 1)
    return PivotedQrResult(q=q, r=r, perm=perm, rank=rank)


def svd(mat: np.ndarray, thresh: float = 1e-8) -> SvdResult:
    """Truncated SVD keeping singular values ``sigma_i >= thresh * sigma_1``."""
    a = np.array(mat, dtype=float)
    try:
        u, sigma, vh = np.linalg.svd(a, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NoConvergence(f"SVD failed: {exc}") from exc
    if sigma[0] <= UNDERFLOW_GUARD:
        raise ZeroMatrix("all singular values are numerically zero")
    rank = int(np.sum(sigma >= thresh * sigma[0]))
    rank = max(rank, 1)
    return SvdResult(u=u[:, :rank], sigma=sigma[:rank], v=vh[:rank, :].T, rank=rank)


def sym_eig(mat: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (ascending) and orthonormal eigenvectors of a symmetric matrix.

    The input is symmetrized defensively as ``(mat + mat.T) / 2`` before
    factoring; callers remain responsible for their own symmetrization policy.
    """
    a = np.asarray(mat, dtype=float)
    a = 0.5 * (a + a.T)
    try:
        vals, vecs = np.linalg.eigh(a)
    except np.linalg.LinAlgError as exc:
        raise NoConvergence(f"symmetric eigensolver failed: {exc}") from exc
    return vals, vecs


def generalized_eig_oracle(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Eigenvalues of the pencil ``(a, b)`` with ``b`` SPD, ascending.

    Reduces to a standard symmetric problem through the Cholesky factor of
    ``b`` (``a`` is symmetrized first).  Intended as an independent test
    oracle for the engines, not as a production path.
    """
    r = cholesky(np.asarray(b, dtype=float))
    a_sym = np.asarray(a, dtype=float)
    a_sym = 0.5 * (a_sym + a_sym.T)
    w = scipy.linalg.solve_triangular(r, a_sym, trans="T", lower=False)
    x = scipy.linalg.solve_triangular(r, w.T, trans="T", lower=False).T
    vals, _ = sym_eig(x)
    return vals


def lyap_diag_solve(sigma: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve ``diag(sigma^2) @ b + b @ diag(sigma^2) == rhs`` elementwise.

    All ``sigma`` entries must be positive (caller-enforced).  The result is
    bit-exactly symmetric whenever ``rhs`` is.
    """
    s2 = np.asarray(sigma, dtype=float) ** 2
    return np.asarray(rhs, dtype=float) / (s2[:, None] + s2[None, :])


def solve_rt(r: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve ``r.T @ x == rhs`` for upper-triangular ``r``."""
    return scipy.linalg.solve_triangular(r, rhs, trans="T", lower=False)


def rdiv_upper(mat: np.ndarray, r: np.ndarray) -> np.ndarray:
    """Right-divide by an upper-triangular factor: ``mat @ inv(r)``."""
    return scipy.linalg.solve_triangular(r, np.atleast_2d(mat).T, trans="T", lower=False).T
