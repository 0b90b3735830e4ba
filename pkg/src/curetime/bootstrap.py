"""Parametric bootstrap for the cure time model.

Replicates are drawn from the fitted model: censoring from a Weibull fitted
to the censored records, background deaths from the life table, disease
deaths from the fitted excess family truncated at the fitted cure time.
Each replicate is refitted; the spread of the refits gives standard errors.
"""

from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy import optimize, special, stats

from .data import Dataset, status_mix
from .excess import inverse_survival
from .lifetable import LifeTable
from .optimizer import CtmFit, OptimizerConfig, fit as fit_ctm

log = logging.getLogger(__name__)

FAILURE_LIMIT = 0.2


@dataclass(frozen=True)
class CensoringModel:
    """Weibull censoring time; ``degenerate`` means no censoring was seen (C = inf)."""

    shape: float
    scale: float
    degenerate: bool = False

    def sample(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if self.degenerate:
            return np.full(u.shape, np.inf)
        return self.scale * (-np.log(u)) ** (1.0 / self.shape)

    @property
    def median(self) -> float:
        return float(self.scale * np.log(2.0) ** (1.0 / self.shape)) if not self.degenerate else np.inf


def fit_censoring_model(d: Dataset) -> CensoringModel:
    """Weibull MLE with status 0 as the event and every death as censored.

    The scale is profiled out in closed form; the shape is found by a bounded
    scalar search on log-shape in [log 0.01, log 1e4].
    """
    events = d.delta == 0
    r = int(events.sum())
    if r == 0:
        return CensoringModel(np.nan, np.nan, degenerate=True)
    logz = np.log(d.z)
    sum_log_events = float(logz[events].sum())

    def negprof(log_k):
        k = np.exp(log_k)
        log_s = special.logsumexp(k * logz)
        return -(r * log_k - r * (log_s - np.log(r)) + (k - 1.0) * sum_log_events - r)

    res = optimize.minimize_scalar(negprof, bounds=(np.log(0.01), np.log(1e4)), method="bounded",
                                   options={"xatol": 1e-10})
    k = float(np.exp(res.x))
    scale = float(np.exp((special.logsumexp(k * logz) - np.log(r)) / k))
    return CensoringModel(k, scale)


def generate_replicate(fit: CtmFit, cens: CensoringModel, d: Dataset, lt: LifeTable, seed,
                       p_t: float | None = None) -> Dataset:
    """One dataset drawn from the fitted model with the covariates of ``d``.

    ``p_t`` is the probability that an observed death is recorded with
    unknown cause; by default the share of status 3 among the deaths of ``d``.
    """
    rng = np.random.default_rng(seed)
    n = d.n
    x1 = d.x if fit.x1_cols is None else d.x[:, fit.x1_cols]
    x2 = d.x if fit.x2_cols is None else d.x[:, fit.x2_cols]
    if p_t is None:
        _, q_o, q_d, q_t = status_mix(d)
        p_t = q_t / (q_o + q_d + q_t)
    u = np.clip(rng.random((n, 4)), 1e-300, 1.0 - 1e-16)
    C = cens.sample(u[:, 0])
    O = lt.sample(d.diag_year, d.age, d.sex, u[:, 1])
    D = inverse_survival(fit.family, u[:, 2], x1 @ fit.alpha1, x1 @ fit.alpha2, fit.mu_link)
    tau = np.exp(x2 @ fit.beta)
    T = np.where(D <= tau, np.minimum(O, D), O)
    censored = C < T
    unknown = u[:, 3] < p_t
    delta = np.where(censored, 0, np.where(unknown, 3, np.where((T == D) & (D <= tau), 2, 1)))
    z = np.where(censored, C, T)
    return d.replace(z=z, delta=delta)


def parametric_bootstrap(estimator: Callable, generator: Callable, B: int, seed,
                         threads: int = 1):
    """Run ``estimator(generator(stream))`` for ``B`` independent streams.

    Stream ``b`` is seeded with ``(seed, b)``. Returns the stacked estimates
    (NaN rows for failures) and the list of failure messages, both in
    replicate order whatever the worker count.
    """
    if B < 2:
        raise ValueError("B must be at least 2")
    base = list(np.atleast_1d(seed).tolist())
    jobs = [(estimator, generator, base + [b]) for b in range(B)]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            out = list(pool.map(_one_replicate, jobs))
    else:
        out = [_one_replicate(j) for j in jobs]
    width = next((np.size(v) for v, _ in out if v is not None), 0)
    est = np.full((B, width), np.nan)
    failures = []
    for b, (v, err) in enumerate(out):
        if v is None:
            failures.append(f"replicate {b}: {err}")
        else:
            est[b] = v
    return est, failures


def _one_replicate(job):
    estimator, generator, stream = job
    try:
        value = estimator(generator(stream))
    except (ValueError, FloatingPointError, np.linalg.LinAlgError) as exc:
        return None, str(exc)
    if value is None:
        return None, "estimator reported no convergence"
    return np.atleast_1d(np.asarray(value, dtype=float)), None


@dataclass
class BootstrapResult:
    names: list
    estimate: np.ndarray
    replicates: np.ndarray
    se: np.ndarray
    p_normal: np.ndarray
    p_percentile: np.ndarray
    failed_replicates: int
    flags: list = field(default_factory=list)
    failures: list = field(default_factory=list)
    censoring: CensoringModel | None = None
    B: int = 0
    seed: object = None

    @property
    def reliable(self) -> bool:
        return self.failed_replicates <= FAILURE_LIMIT * self.B

    def to_dict(self) -> dict:
        params = {}
        for j, name in enumerate(self.names):
            params[name] = {"estimate": _num(self.estimate[j]), "se": _num(self.se[j]),
                            "p_normal": _num(self.p_normal[j]), "p_percentile": _num(self.p_percentile[j])}
        cens = None
        if self.censoring is not None:
            cens = {"shape": _num(self.censoring.shape), "scale": _num(self.censoring.scale),
                    "degenerate": self.censoring.degenerate}
        return {"B": self.B, "seed": self.seed, "failed_replicates": self.failed_replicates,
                "reliable": self.reliable, "flags": self.flags, "censoring_model": cens,
                "parameters": params, "failures": self.failures}

    def write_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")

    def write_replicates(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["replicate"] + list(self.names))
            for b, row in enumerate(self.replicates):
                w.writerow([b] + ["NA" if not np.isfinite(v) else repr(float(v)) for v in row])


def _num(v):
    v = float(v)
    return v if np.isfinite(v) else None


def summarize(names, estimate, replicates, B, failures) -> BootstrapResult:
    """Standard errors and two-sided p-values from a replicate matrix."""
    ok = np.all(np.isfinite(replicates), axis=1)
    good = replicates[ok]
    k = len(names)
    flags = []
    if good.shape[0] >= 2:
        se = good.std(axis=0, ddof=1)
    else:
        se = np.full(k, np.nan)
        flags.append("fewer than two usable replicates")
    with np.errstate(divide="ignore", invalid="ignore"):
        p_normal = np.where(se > 0, 2.0 * stats.norm.sf(np.abs(estimate) / se), np.nan)
    if np.any(se == 0):
        flags.append("zero replicate spread: p-values undefined for "
                     + ", ".join(n for n, s in zip(names, se) if s == 0))
    if good.shape[0]:
        below = np.mean(good <= 0, axis=0)
        above = np.mean(good >= 0, axis=0)
        p_pct = np.minimum(1.0, 2.0 * np.minimum(below, above))
        p_pct = np.where(se > 0, p_pct, np.nan)
    else:
        p_pct = np.full(k, np.nan)
    failed = int(np.sum(~ok))
    if failed > FAILURE_LIMIT * B:
        flags.append(f"unreliable: {failed} of {B} replicates failed")
    return BootstrapResult(list(names), np.asarray(estimate, float), replicates, se, p_normal,
                           p_pct, failed, flags, failures, B=B)


class _CtmEstimator:
    """Picklable refit of the cure time model; returns None when not converged."""

    def __init__(self, fit: CtmFit, lt: LifeTable, cfg: OptimizerConfig):
        self.fit, self.lt, self.cfg = fit, lt, cfg

    def __call__(self, d: Dataset):
        f = fit_ctm(d, self.lt, self.fit.family, self.cfg, kappa=self.fit.kappa,
                    sigma_n=self.fit.sigma_n, x1_cols=self.fit.x1_cols,
                    x2_cols=self.fit.x2_cols, mu_link=self.fit.mu_link)
        return f.theta if f.converged else None


class _CtmGenerator:
    def __init__(self, fit: CtmFit, cens: CensoringModel, d: Dataset, lt: LifeTable):
        self.fit, self.cens, self.d, self.lt = fit, cens, d, lt
        _, q_o, q_d, q_t = status_mix(d)
        self.p_t = q_t / (q_o + q_d + q_t)

    def __call__(self, stream):
        return generate_replicate(self.fit, self.cens, self.d, self.lt, stream, self.p_t)


def bootstrap(fit: CtmFit, d: Dataset, lt: LifeTable, B: int = 200, seed=0,
              optimizer: OptimizerConfig | None = None, threads: int = 1) -> BootstrapResult:
    """Standard errors and p-values for every coefficient of ``fit``."""
    if B < 2:
        raise ValueError("B must be at least 2")
    cfg = optimizer or OptimizerConfig()
    cens = fit_censoring_model(d)
    reps, failures = parametric_bootstrap(_CtmEstimator(fit, lt, cfg), _CtmGenerator(fit, cens, d, lt),
                                          B, seed, threads)
    res = summarize(fit.parameter_names(), fit.theta, reps, B, failures)
    if cens.degenerate:
        res.flags.append("no censored records: replicates are uncensored")
    res.censoring = cens
    res.seed = list(np.atleast_1d(seed).tolist())
    return res
