import numpy as np
import pytest

from lmsd.history import SweepHistory


def fill_quadratic_history(a, x0, m, betas=None, rng=None):
    """Run plain gradient steps on the quadratic 0.5 x.Ax - b.x (b = 0) until the
    history of memory m is full, and return (history, hessian matrix, final x)."""
    a = np.asarray(a, dtype=float)
    x = np.asarray(x0, dtype=float).copy()
    h = SweepHistory(m)
    g = a @ x
    h.push(g)
    for k in range(m):
        if betas is not None:
            beta = float(betas[k])
        else:
            ag = a @ g
            beta = float(g @ g) / float(g @ ag)
            if rng is not None:
                beta *= float(rng.uniform(0.5, 1.5))
        x = x - beta * g
        g = a @ x
        h.push(g, inv_step=1.0 / beta)
    return h, a, x


def fill_nonlinear_history(problem, m, steps=None, beta0=None):
    """Run plain gradient steps on a nonlinear problem; returns (history, x)."""
    x = problem.x0.copy()
    g = problem.gradient(x)
    h = SweepHistory(m)
    h.push(g)
    beta = beta0 if beta0 is not None else 1.0 / np.linalg.norm(g)
    for k in range(m):
        if steps is not None:
            beta = float(steps[k])
        x = x - beta * g
        g_new = problem.gradient(x)
        h.push(g_new, inv_step=1.0 / beta)
        pair = (g_new - g) @ (-beta * g)
        if pair > 0:
            beta = float((beta * g) @ (beta * g)) / pair
        g = g_new
    return h, x


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
