"""Cohorts drawn directly from the cure-time representation, for nonparametric checks."""

import numpy as np

from curetime.excess import inverse_survival
from conftest import make_dataset


def cured_cohort(lt, n, tau, seed, shape=1.0, scale=3.0, follow=20.0, excess=True):
    rng = np.random.default_rng(seed)
    age = rng.integers(45, 70, n)
    sex = rng.integers(0, 2, n)
    O = lt.sample(np.full(n, 2000), age, sex, rng.random(n))
    D = inverse_survival("weibull", rng.random(n), np.log(shape), np.log(scale))
    if excess:
        T = np.where(D <= tau, np.minimum(O, D), O)
    else:
        T = O
    z = np.minimum(T, follow)
    delta = np.where(T > follow, 0, np.where((T == D) & (D <= tau), 2, 1))
    return make_dataset(z, delta, age=age, sex=sex), D, O
