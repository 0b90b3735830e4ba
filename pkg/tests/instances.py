"""Random problem instances shared by the core and acceptance tests."""

import numpy as np

from curetime.core import CtmProblem
from conftest import make_dataset


def random_problem(rng, family, n=30, p=3, with_status2=True):
    x = np.column_stack([np.ones(n), rng.normal(0, 0.5, (n, p - 1))])
    beta = np.concatenate([[rng.uniform(0.5, 2.0)], rng.normal(0, 0.2, p - 1)])
    tau = np.exp(x @ beta)
    z = rng.uniform(0.05, 2.0, n) * tau
    delta = rng.integers(0, 4, n)
    if not with_status2:
        delta[delta == 2] = 1
    # keep status-2 records feasible so the objective is finite
    z[delta == 2] = np.minimum(z[delta == 2], 0.9 * tau[delta == 2])
    d = make_dataset(z, delta, x, age=rng.integers(40, 80, n), sex=rng.integers(0, 2, n))
    alpha = np.concatenate([rng.normal(0, 0.3, p), rng.normal(1.0, 0.3, p)])
    return d, alpha, beta


def central_difference(f, x, h):
    g = np.empty(x.size)
    for j in range(x.size):
        e = np.zeros(x.size)
        e[j] = h
        g[j] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def relative_gap(g, ref):
    return float(np.linalg.norm(g - ref) / max(np.linalg.norm(ref), 1e-12))
