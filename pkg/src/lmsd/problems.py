"""Problem sources: synthetic quadratics, Matrix-Market ingestion, and a small
collection of differentiable test functions with analytic gradients."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse


class ParseError(Exception):
    """Malformed Matrix-Market header or entries."""


class NotSymmetric(Exception):
    """Matrix-Market header does not declare a symmetric matrix."""


class UnknownProblem(Exception):
    """No built-in test function under the requested name."""


@dataclass(frozen=True)
class QuadraticProblem:
    """Strictly convex quadratic ``0.5 x.Ax - b.x`` given through its operator."""

    name: str
    n: int
    hessian: Callable[[np.ndarray], np.ndarray]
    b: np.ndarray
    x0: np.ndarray
    spectrum_bounds: tuple[float, float] | None = None

    def value(self, x: np.ndarray) -> float:
        return 0.5 * float(x @ self.hessian(x)) - float(self.b @ x)

    def gradient(self, x: np.ndarray) -> np.ndarray:
        return self.hessian(x) - self.b


@dataclass(frozen=True)
class NonlinearProblem:
    """Differentiable objective with an analytic gradient evaluator."""

    name: str
    n: int
    value: Callable[[np.ndarray], float]
    gradient: Callable[[np.ndarray], np.ndarray]
    x0: np.ndarray


def geometric_quadratic(n: int, omega: float) -> QuadraticProblem:
    """Diagonal quadratic with eigenvalues ``1, omega, ..., omega**(n-1)``.

    The linear term is zero and the start point is the all-ones vector, so the
    spectrum bounds are exact by construction.
    """
    if n < 2:
        raise ValueError("need n >= 2")
    if omega <= 1:
        raise ValueError("need omega > 1")
    diag = omega ** np.arange(n)
    return QuadraticProblem(
        name=f"geometric(n={n},omega={omega:g})",
        n=n,
        hessian=lambda x: diag * x,
        b=np.zeros(n),
        x0=np.ones(n),
        spectrum_bounds=(1.0, float(omega ** (n - 1))),
    )


def dense_quadratic(a: np.ndarray, b: np.ndarray, x0: np.ndarray, name: str = "dense") -> QuadraticProblem:
    """Wrap an explicit SPD matrix; convenient for tests and small studies."""
    mat = np.asarray(a, dtype=float)
    return QuadraticProblem(
        name=name,
        n=mat.shape[0],
        hessian=lambda x: mat @ x,
        b=np.asarray(b, dtype=float),
        x0=np.asarray(x0, dtype=float),
    )


def load_matrix_market(path, rhs_policy: str = "ones-solution") -> QuadraticProblem:
    """Read a real symmetric coordinate Matrix-Market file as a quadratic.

    Only one triangle may be stored; the operator is symmetrized on read.
    The right-hand side makes the all-ones vector the solution and the start
    point is ten times that vector.

    Raises
    ------
    ParseError
        Malformed header, size line, indices, or values; also array format,
        which is intentionally unsupported.
    NotSymmetric
        Header does not carry the symmetric qualifier.
    """
    if rhs_policy != "ones-solution":
        raise ValueError(f"unsupported rhs policy {rhs_policy!r}")
    path = str(path)
    with open(path, "r", encoding="ascii", errors="replace") as handle:
        header = handle.readline()
        tokens = header.strip().split()
        if len(tokens) != 5 or tokens[0] != "%%MatrixMarket" or tokens[1].lower() != "matrix":
            raise ParseError(f"bad Matrix-Market header: {header.strip()!r}")
        fmt, domain, symmetry = (t.lower() for t in tokens[2:5])
        if fmt == "array":
            raise ParseError("array format is not supported; use coordinate format")
        if fmt != "coordinate":
            raise ParseError(f"unknown format {fmt!r}")
        if domain != "real":
            raise ParseError(f"only real matrices are supported, got {domain!r}")
        if symmetry != "symmetric":
            raise NotSymmetric(f"header declares {symmetry!r}, need 'symmetric'")

        size_line = None
        for line in handle:
            stripped = line.strip()
            if not stripped or stripped.startswith("%"):
                continue
            size_line = stripped
            break
        if size_line is None:
            raise ParseError("missing size line")
        parts = size_line.split()
        if len(parts) != 3:
            raise ParseError(f"bad size line: {size_line!r}")
        try:
            rows, cols, nnz = (int(p) for p in parts)
        except ValueError as exc:
            raise ParseError(f"bad size line: {size_line!r}") from exc
        if rows != cols or rows < 1:
            raise ParseError(f"need a square matrix, got {rows}x{cols}")

        ii: list[int] = []
        jj: list[int] = []
        vv: list[float] = []
        seen = 0
        for line in handle:
            stripped = line.strip()
            if not stripped or stripped.startswith("%"):
                continue
            parts = stripped.split()
            if len(parts) != 3:
                raise ParseError(f"bad entry line: {stripped!r}")
            try:
                i, j, v = int(parts[0]), int(parts[1]), float(parts[2])
            except ValueError as exc:
                raise ParseError(f"bad entry line: {stripped!r}") from exc
            if not (1 <= i <= rows and 1 <= j <= cols):
                raise ParseError(f"entry ({i}, {j}) out of range for {rows}x{cols}")
            ii.append(i - 1)
            jj.append(j - 1)
            vv.append(v)
            if i != j:
                ii.append(j - 1)
                jj.append(i - 1)
                vv.append(v)
            seen += 1
        if seen != nnz:
            raise ParseError(f"expected {nnz} entries, found {seen}")

    a = scipy.sparse.coo_matrix((vv, (ii, jj)), shape=(rows, cols)).tocsr()
    ones = np.ones(rows)
    import os

    return QuadraticProblem(
        name=os.path.splitext(os.path.basename(path))[0],
        n=rows,
        hessian=lambda x: a @ x,
        b=a @ ones,
        x0=10.0 * ones,
    )


def _extended_rosenbrock(n: int) -> NonlinearProblem:
    if n % 2:
        raise ValueError("extended-rosenbrock needs even n")

    def value(x):
        odd, even = x[0::2], x[1::2]
        return float(np.sum(100.0 * (even - odd**2) ** 2 + (1.0 - odd) ** 2))

    def gradient(x):
        g = np.zeros_like(x)
        odd, even = x[0::2], x[1::2]
        t = even - odd**2
        g[0::2] = -400.0 * odd * t - 2.0 * (1.0 - odd)
        g[1::2] = 200.0 * t
        return g

    x0 = np.empty(n)
    x0[0::2] = -1.2
    x0[1::2] = 1.0
    return NonlinearProblem("extended-rosenbrock", n, value, gradient, x0)


def _chained_rosenbrock(n: int) -> NonlinearProblem:
    def value(x):
        t = x[1:] - x[:-1] ** 2
        return float(np.sum(100.0 * t**2 + (1.0 - x[:-1]) ** 2))

    def gradient(x):
        g = np.zeros_like(x)
        t = x[1:] - x[:-1] ** 2
        g[:-1] += -400.0 * x[:-1] * t - 2.0 * (1.0 - x[:-1])
        g[1:] += 200.0 * t
        return g

    x0 = np.ones(n)
    x0[0::2] = -1.2
    return NonlinearProblem("chained-rosenbrock", n, value, gradient, x0)


def _diagonal_quartic(n: int) -> NonlinearProblem:
    weights = np.arange(1, n + 1, dtype=float)

    def value(x):
        return float(np.sum(weights * x**4) / 4.0)

    def gradient(x):
        return weights * x**3

    return NonlinearProblem("diagonal-quartic", n, value, gradient, np.ones(n))


def _trigonometric(n: int) -> NonlinearProblem:
    idx = np.arange(1, n + 1, dtype=float)

    def residuals(x):
        return n - np.sum(np.cos(x)) + idx * (1.0 - np.cos(x)) - np.sin(x)

    def value(x):
        return float(np.sum(residuals(x) ** 2))

    def gradient(x):
        r = residuals(x)
        return 2.0 * (np.sin(x) * np.sum(r) + r * (idx * np.sin(x) - np.cos(x)))

    return NonlinearProblem("trigonometric", n, value, gradient, np.full(n, 1.0 / n))


def _broyden_tridiagonal(n: int) -> NonlinearProblem:
    def residuals(x):
        r = (3.0 - 2.0 * x) * x + 1.0
        r[1:] -= x[:-1]
        r[:-1] -= 2.0 * x[1:]
        return r

    def value(x):
        return float(np.sum(residuals(x) ** 2))

    def gradient(x):
        r = residuals(x)
        g = 2.0 * r * (3.0 - 4.0 * x)
        g[:-1] -= 2.0 * r[1:]
        g[1:] -= 4.0 * r[:-1]
        return g

    return NonlinearProblem("broyden-tridiagonal", n, value, gradient, -np.ones(n))


_BUILTINS: dict[str, Callable[[int], NonlinearProblem]] = {
    "extended-rosenbrock": _extended_rosenbrock,
    "chained-rosenbrock": _chained_rosenbrock,
    "diagonal-quartic": _diagonal_quartic,
    "trigonometric": _trigonometric,
    "broyden-tridiagonal": _broyden_tridiagonal,
}

BUILTIN_NAMES = tuple(sorted(_BUILTINS))


def builtin_nonlinear(name: str, n: int = 100) -> NonlinearProblem:
    """Instantiate one of the built-in test functions at dimension ``n``."""
    try:
        factory = _BUILTINS[name]
    except KeyError:
        raise UnknownProblem(f"no built-in problem {name!r}; choose from {BUILTIN_NAMES}") from None
    return factory(n)


def gradient_check(
    problem: NonlinearProblem,
    points: int = 10,
    h: float = 1e-5,
    seed: int = 0,
) -> float:
    """Worst relative mismatch between analytic and central-difference gradients.

    Points are sampled around the start point with a seeded generator; the
    relative error at each point is measured against the analytic gradient
    norm (floored at 1 to keep near-stationary points meaningful).
    """
    if not (1e-8 <= h <= 1e-4):
        raise ValueError("finite-difference step outside [1e-8, 1e-4]")
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(points):
        x = problem.x0 + rng.standard_normal(problem.n) * 0.5
        analytic = np.asarray(problem.gradient(x), dtype=float)
        if not np.all(np.isfinite(analytic)):
            raise ValueError("gradient evaluator returned non-finite entries")
        fd = np.empty_like(analytic)
        for i in range(problem.n):
            step = np.zeros(problem.n)
            step[i] = h
            f_plus = problem.value(x + step)
            f_minus = problem.value(x - step)
            if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
                raise ValueError("objective returned non-finite values during check")
            fd[i] = (f_plus - f_minus) / (2.0 * h)
        scale = max(float(np.linalg.norm(analytic)), 1.0)
        worst = max(worst, float(np.linalg.norm(fd - analytic)) / scale)
    return worst
