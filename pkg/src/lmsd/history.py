"""Rolling gradient memory and the small matrices derived from it.

A sweep history stores up to ``capacity + 1`` consecutive gradients together
with the inverse stepsizes of the moves that connect them.  Everything the
stepsize engines consume (the gradient matrix, step/gradient differences,
bidiagonal coupling matrices, Gramians) is assembled from this record.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class AllNegative(Exception):
    """Every candidate eigenvalue was discarded as nonpositive."""


@dataclass
class StepStack:
    """Ordered stepsizes produced by one engine call, consumed one per iteration."""

    steps: np.ndarray
    cursor: int = 0

    def __post_init__(self) -> None:
        self.steps = np.sort(np.asarray(self.steps, dtype=float))
        if self.steps.size and (not np.all(np.isfinite(self.steps)) or np.any(self.steps <= 0)):
            raise ValueError("stack steps must be positive and finite")

    @classmethod
    def from_hessian_eigenvalues(cls, eigs: np.ndarray, rel_floor: float = 0.0) -> "StepStack":
        """Stack of reciprocals of the positive eigenvalues of a projected Hessian."""
        kept = _keep_positive(eigs, rel_floor)
        return cls(np.sort(1.0 / kept))

    @classmethod
    def from_inverse_hessian_eigenvalues(cls, eigs: np.ndarray, rel_floor: float = 0.0) -> "StepStack":
        """Stack of the positive eigenvalues of a projected inverse Hessian."""
        return cls(np.sort(_keep_positive(eigs, rel_floor)))

    def __len__(self) -> int:
        return int(self.steps.size)

    @property
    def exhausted(self) -> bool:
        return self.cursor >= self.steps.size

    def next_step(self) -> float:
        if self.exhausted:
            raise IndexError("step stack exhausted")
        value = float(self.steps[self.cursor])
        self.cursor += 1
        return value


def _keep_positive(eigs: np.ndarray, rel_floor: float) -> np.ndarray:
    eigs = np.asarray(eigs, dtype=float)
    finite = eigs[np.isfinite(eigs)]
    floor = rel_floor * float(finite.max()) if finite.size and finite.max() > 0 else 0.0
    kept = finite[finite > floor]
    if kept.size == 0:
        raise AllNegative("no positive eigenvalue to turn into a stepsize")
    return kept


def bidiagonal_j(inv_steps: np.ndarray) -> np.ndarray:
    """(p+1) x p lower bidiagonal with ``alpha_i`` on and ``-alpha_i`` below the diagonal.

    Couples the gradient matrix to the scaled gradient differences:
    column ``i`` of ``[grads, newest] @ J`` equals ``-alpha_i * y_i``.
    """
    alphas = np.asarray(inv_steps, dtype=float)
    p = alphas.size
    j = np.zeros((p + 1, p))
    idx = np.arange(p)
    j[idx, idx] = alphas
    j[idx + 1, idx] = -alphas
    return j


def difference_k(p: int) -> np.ndarray:
    """(p+1) x p matrix turning stacked gradients into consecutive differences."""
    k = np.zeros((p + 1, p))
    idx = np.arange(p)
    k[idx, idx] = -1.0
    k[idx + 1, idx] = 1.0
    return k


def lower_ones_jtilde(inv_steps: np.ndarray) -> np.ndarray:
    """(p+1) x p all-ones lower-triangular pattern scaled by the stepsizes.

    Column ``j`` carries ``1/alpha_j`` in rows ``j`` through ``p``; it expresses
    each column of ``-grads @ inv(D)`` through ``[diffs, -newest]``.
    """
    alphas = np.asarray(inv_steps, dtype=float)
    p = alphas.size
    jt = np.tril(np.ones((p + 1, p)))
    jt[p, :] = 1.0
    return jt / alphas[None, :]


@dataclass
class SweepHistory:
    """Ring of the most recent gradients with their inverse stepsizes.

    Each stored inverse stepsize pairs with the move that produced the
    gradient at the same position; the oldest gradient therefore has no
    paired entry and ``len(inv_steps) == len(gradients) - 1`` always holds.
    A history belongs to exactly one solver instance.
    """

    capacity: int
    gradients: list[np.ndarray] = field(default_factory=list)
    inv_steps: list[float] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.capacity < 1:
            raise ValueError("capacity must be at least 1")

    def __len__(self) -> int:
        return len(self.gradients)

    @property
    def step_count(self) -> int:
        """Number of completed moves on record (columns of the gradient matrix)."""
        return len(self.inv_steps)

    @property
    def full(self) -> bool:
        return len(self.gradients) == self.capacity + 1

    def push(self, gradient: np.ndarray, inv_step: float | None = None) -> None:
        """Append a gradient; evicts the oldest entry beyond ``capacity + 1``.

        ``inv_step`` is the inverse of the stepsize just applied; it is
        ignored for the very first gradient, which no move produced.
        """
        g = np.asarray(gradient, dtype=float)
        if not np.all(np.isfinite(g)):
            raise ValueError("gradient must be finite")
        if self.gradients:
            if inv_step is None or not np.isfinite(inv_step) or inv_step <= 0:
                raise ValueError("a positive finite inverse stepsize is required")
            self.inv_steps.append(float(inv_step))
        self.gradients.append(g)
        while len(self.gradients) > self.capacity + 1:
            self.gradients.pop(0)
            self.inv_steps.pop(0)

    def clear(self) -> None:
        self.gradients.clear()
        self.inv_steps.clear()

    def keep_last(self, count: int) -> None:
        """Retain only the ``count`` most recent gradients (and matching steps)."""
        count = max(1, min(count, len(self.gradients)))
        self.gradients = self.gradients[-count:]
        self.inv_steps = self.inv_steps[len(self.inv_steps) - (count - 1) :]

    @property
    def alphas(self) -> np.ndarray:
        return np.asarray(self.inv_steps, dtype=float)

    def gradient_matrix(self) -> tuple[np.ndarray, np.ndarray]:
        """All gradients but the newest as columns, plus the newest separately."""
        if self.step_count < 1:
            raise ValueError("history holds no completed step")
        g_mat = np.column_stack(self.gradients[:-1])
        return g_mat, self.gradients[-1].copy()

    def build_j(self) -> np.ndarray:
        self._require_step()
        return bidiagonal_j(self.alphas)

    def build_k(self) -> np.ndarray:
        self._require_step()
        return difference_k(self.step_count)

    def build_jtilde(self) -> np.ndarray:
        self._require_step()
        return lower_ones_jtilde(self.alphas)

    def assemble(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Return ``(g_mat, g_next, s_mat, y_mat, d_diag)``.

        ``s_mat = -g_mat @ inv(d_diag)`` holds the iterate differences and
        ``y_mat`` the consecutive gradient differences.
        """
        g_mat, g_next = self.gradient_matrix()
        alphas = self.alphas
        s_mat = -g_mat / alphas[None, :]
        stacked = np.column_stack(self.gradients)
        y_mat = np.diff(stacked, axis=1)
        return g_mat, g_next, s_mat, y_mat, np.diag(alphas)

    def _require_step(self) -> None:
        if self.step_count < 1:
            raise ValueError("history holds no completed step")
