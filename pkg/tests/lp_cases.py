"""Seeded LP generators shared by the lp and acceptance tests."""
import numpy as np

from meshpush.lp import LinearProgram


def random_lp(rng, n_max=6, m_max=10):
    """Feasible by construction, bounded because the objective is positive."""
    n = int(rng.integers(1, n_max + 1))
    m = int(rng.integers(0, m_max + 1))
    c = rng.uniform(0.1, 3.0, size=n)
    lb = rng.integers(-3, 4, size=n).astype(float)
    a = rng.integers(-3, 4, size=(m, n)).astype(float)
    x0 = lb + rng.uniform(0, 2, size=n)
    rhs = np.round(a @ x0 - rng.uniform(0, 1.5, size=m), 3)
    return LinearProgram.from_dense(c, lb, a, rhs)


def infeasible_lp(rng):
    """``x_k >= lo + gap`` and ``-x_k >= -(lo + 1)`` cannot both hold."""
    n = int(rng.integers(1, 6))
    k = int(rng.integers(n))
    lb = rng.normal(size=n)
    gap = rng.uniform(1.5, 4.0)
    rows = [([k], [1.0], lb[k] + gap), ([k], [-1.0], -(lb[k] + 1.0))]
    for _ in range(int(rng.integers(0, 4))):
        idx = rng.choice(n, size=int(rng.integers(1, n + 1)), replace=False)
        rows.append((idx, rng.uniform(0.5, 2.0, size=len(idx)), float(rng.normal())))
    return LinearProgram(n, rng.uniform(0.5, 2.0, size=n), lb, tuple(rows))


def unbounded_lp(rng):
    """A negative-cost variable that every row lets grow without limit."""
    n = int(rng.integers(1, 6))
    k = int(rng.integers(n))
    c = rng.uniform(0.5, 2.0, size=n)
    c[k] = -rng.uniform(0.5, 2.0)
    rows = []
    for _ in range(int(rng.integers(0, 4))):
        idx = rng.choice(n, size=int(rng.integers(1, n + 1)), replace=False)
        coef = rng.uniform(-2.0, 2.0, size=len(idx))
        coef[idx == k] = abs(coef[idx == k]) + 0.1
        rows.append((idx, coef, float(rng.normal()) - 10.0))
    return LinearProgram(n, c, rng.normal(size=n), tuple(rows))
