"""Simulated cohorts with a known cure time, and replication studies.

Each subject gets correlated normal covariates, a disease time ``D`` from the
excess family, a background time ``O`` from the life table and a censoring
time ``C`` from a Weibull. The observed event time is

    T = min(O, D) if D <= tau else O,      tau = exp(beta @ x)

so disease deaths never occur after the cure time.
"""

from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .data import Dataset, DegradeScope, degrade_status
from .excess import ExcessModel
from .lifetable import LifeTable, synthetic_lifetable
from .optimizer import CtmFit, OptimizerConfig, fit

log = logging.getLogger(__name__)

COVARIATE_NAMES = ("intercept", "x1", "x2")


@dataclass(frozen=True)
class SimDesign:
    """Generator truth plus post-processing of the status labels.

    ``censor_scale=None`` means no censoring; ``target_q_c`` instead tunes
    the scale so that the expected censored share hits the target.
    ``convert_scope``/``convert_fraction`` recode uncensored records to
    status 3 after the optional 1<->2 label swap.
    """

    name: str
    alpha1: tuple
    alpha2: tuple
    beta: tuple
    n: int = 500
    reps: int = 50
    family: str = "weibull"
    correlation: float = 0.5
    censor_shape: float = 3.0
    censor_scale: float | None = None
    target_q_c: float | None = None
    swap_fraction: float = 0.0
    convert_scope: str | None = None
    convert_fraction: float = 0.0
    age_range: tuple = (40, 80)
    diag_year: int = 2000

    def __post_init__(self):
        p = len(self.beta)
        if len(self.alpha1) != p or len(self.alpha2) != p or p != 3:
            raise ValueError("alpha1, alpha2 and beta must each have 3 entries (intercept, x1, x2)")
        if not -1.0 < self.correlation < 1.0:
            raise ValueError("covariate correlation must lie in (-1, 1)")
        for name in ("swap_fraction", "convert_fraction"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.target_q_c is not None and not 0.0 < self.target_q_c < 1.0:
            raise ValueError("target_q_c must lie in (0, 1)")
        if self.convert_scope is not None:
            DegradeScope(self.convert_scope)
        if self.n < 1 or self.reps < 1:
            raise ValueError("n and reps must be positive")

    @property
    def covariance(self) -> np.ndarray:
        return np.array([[1.0, self.correlation], [self.correlation, 1.0]])

    @property
    def model(self) -> ExcessModel:
        return ExcessModel(self.family, self.alpha1, self.alpha2)

    @property
    def theta(self) -> np.ndarray:
        return np.concatenate([self.alpha1, self.alpha2, self.beta]).astype(float)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True, eq=False)
class SimTruth:
    """Latent times behind one generated dataset."""

    O: np.ndarray
    D: np.ndarray
    C: np.ndarray
    tau: np.ndarray
    T: np.ndarray
    delta: np.ndarray


# --- presets ------------------------------------------------------------------------

_S1 = dict(alpha1=(-0.693, -0.110, 0.040), alpha2=(1.946, 0.130, 0.070), beta=(1.792, 0.250, -0.300))
_S2 = dict(alpha1=(-0.693, -0.110, 0.040), alpha2=(3.401, 0.300, -0.400), beta=(2.303, 0.25, -0.3))
_S3 = dict(alpha1=(0.405, -0.110, 0.040), alpha2=(2.303, 0.130, 0.070), beta=(2.303, 0.25, -0.3))

PRESETS: dict[str, SimDesign] = {
    "s1-1": SimDesign("s1-1", **_S1, target_q_c=0.01),
    "s1-2": SimDesign("s1-2", **_S1, target_q_c=0.34),
    "s1-3": SimDesign("s1-3", **{**_S1, "alpha2": (3.912, 0.130, 0.070)}, target_q_c=0.03),
    "s1-4": SimDesign("s1-4", **_S1, target_q_c=0.02, convert_scope="all_uncensored",
                      convert_fraction=0.69 / 0.98),
    "s2-1": SimDesign("s2-1", **_S2, target_q_c=0.02),
    "s2-2": SimDesign("s2-2", **_S2, target_q_c=0.02, swap_fraction=0.05),
    "s2-3": SimDesign("s2-3", **_S2, target_q_c=0.02, swap_fraction=0.05,
                      convert_scope="disease_only", convert_fraction=0.5),
    "s2-4": SimDesign("s2-4", **_S2, target_q_c=0.02, swap_fraction=0.05,
                      convert_scope="all_uncensored", convert_fraction=1.0),
    "s3-1": SimDesign("s3-1", **_S3, target_q_c=0.01),
    "s3-2": SimDesign("s3-2", **_S3, target_q_c=0.01, convert_scope="all_uncensored",
                      convert_fraction=1.0),
    "s3-3": SimDesign("s3-3", **_S3, target_q_c=0.41),
    "s3-4": SimDesign("s3-4", **_S3, target_q_c=0.41, convert_scope="all_uncensored",
                      convert_fraction=1.0),
}


def preset(name: str, **overrides) -> SimDesign:
    try:
        design = PRESETS[name.lower()]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}") from None
    return replace(design, **overrides) if overrides else design


# --- generation ------------------------------------------------------------------------

def _draw_latent(design: SimDesign, lt: LifeTable, rng: np.random.Generator, n: int):
    chol = np.linalg.cholesky(design.covariance)
    xs = rng.standard_normal((n, 2)) @ chol.T
    x = np.column_stack([np.ones(n), xs])
    lo, hi = design.age_range
    age = rng.integers(lo, hi + 1, size=n)
    sex = rng.integers(0, 2, size=n)
    year = np.full(n, design.diag_year)
    u = rng.random((n, 3))
    # guard the open interval of the inverse-cdf samplers
    u = np.clip(u, 1e-300, 1.0 - 1e-16)
    D = design.model.sample(x, u[:, 0])
    O = lt.sample(year, age, sex, u[:, 1])
    tau = np.exp(x @ np.asarray(design.beta, float))
    T = np.where(D <= tau, np.minimum(O, D), O)
    return x, age, sex, year, D, O, tau, T, u[:, 2]


def _censor_times(u, shape, scale):
    if scale is None:
        return np.full(u.shape, np.inf)
    return scale * (-np.log(u)) ** (1.0 / shape)


def tune_censoring(design: SimDesign, lt: LifeTable, n_pilot: int = 20000, seed: int = 20240101,
                   iters: int = 60) -> float:
    """Weibull censoring scale giving an expected censored share of ``target_q_c``.

    Bisection on the log scale over a fixed pilot cohort, so the answer is
    deterministic. The share is monotone decreasing in the scale.
    """
    if design.target_q_c is None:
        raise ValueError("design has no censoring target")
    rng = np.random.default_rng(seed)
    *_, T, uc = _draw_latent(design, lt, rng, n_pilot)
    base = (-np.log(uc)) ** (1.0 / design.censor_shape)

    def share(log_scale):
        return float(np.mean(np.exp(log_scale) * base < T))

    lo, hi = -10.0, 10.0
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if share(mid) > design.target_q_c:
            lo = mid
        else:
            hi = mid
    return float(math.exp(0.5 * (lo + hi)))


def resolve_censoring(design: SimDesign, lt: LifeTable) -> SimDesign:
    if design.censor_scale is None and design.target_q_c is not None:
        return replace(design, censor_scale=tune_censoring(design, lt))
    return design


def generate_one(design: SimDesign, lt: LifeTable, seed) -> tuple[Dataset, SimTruth]:
    """One dataset with exact latent times; ``design`` must have a resolved scale."""
    rng = np.random.default_rng(seed)
    x, age, sex, year, D, O, tau, T, uc = _draw_latent(design, lt, rng, design.n)
    C = _censor_times(uc, design.censor_shape, design.censor_scale)
    censored = C < T
    z = np.where(censored, C, T)
    delta = np.where(censored, 0, np.where((T == D) & (D <= tau), 2, 1))
    d = Dataset(z=z, delta=delta, x=x, diag_year=year, age=age, sex=sex,
                covariate_names=COVARIATE_NAMES)
    truth = SimTruth(O=O, D=D, C=C, tau=tau, T=T, delta=delta.copy())
    sub = np.random.default_rng([*np.atleast_1d(seed).tolist(), 1])
    if design.swap_fraction > 0:
        d = apply_mislabel((d, truth), design.swap_fraction, sub.integers(2**32))
    if design.convert_scope is not None and design.convert_fraction > 0:
        d = degrade_status(d, design.convert_fraction, design.convert_scope, sub.integers(2**32))
    return d, truth


def generate(design: SimDesign, lt: LifeTable, seed: int) -> list[tuple[Dataset, SimTruth]]:
    """``design.reps`` datasets; replicate ``r`` uses the stream ``(seed, r)``."""
    design = resolve_censoring(design, lt)
    return [generate_one(design, lt, [seed, r]) for r in range(design.reps)]


def apply_mislabel(pair, swap_fraction: float, seed) -> Dataset:
    """Flip 1 <-> 2 on floor(fraction * eligible) uniformly chosen status 1/2 records."""
    if not 0.0 <= swap_fraction <= 1.0:
        raise ValueError("swap_fraction must lie in [0, 1]")
    d = pair[0] if isinstance(pair, tuple) else pair
    eligible = np.flatnonzero((d.delta == 1) | (d.delta == 2))
    k = int(np.floor(swap_fraction * eligible.size))
    if k == 0:
        return d
    chosen = eligible if k == eligible.size else np.random.default_rng(seed).choice(
        eligible, size=k, replace=False)
    delta = d.delta.copy()
    delta[chosen] = 3 - delta[chosen]
    return d.replace(delta=delta)


# --- replication studies ----------------------------------------------------------------

def parameter_labels(p: int = 3) -> list[str]:
    return ([f"alpha1{j}" for j in range(p)] + [f"alpha2{j}" for j in range(p)]
            + [f"beta{j}" for j in range(p)])


@dataclass
class StudyResult:
    design: SimDesign
    fit_family: str
    truth: np.ndarray            # NaN where the fitted family does not share the parameter
    estimates: np.ndarray        # reps x params, NaN rows for failed fits
    converged: np.ndarray
    boot_se: np.ndarray | None = None
    fits: list = field(default_factory=list)
    status_mix: np.ndarray | None = None

    @property
    def ok(self) -> np.ndarray:
        return self.converged & np.all(np.isfinite(self.estimates), axis=1)

    @property
    def failed(self) -> int:
        return int(np.sum(~self.ok))

    def summary_rows(self) -> list[dict]:
        est = self.estimates[self.ok]
        m = est.shape[0]
        mean = est.mean(axis=0) if m else np.full(self.truth.size, np.nan)
        sd = est.std(axis=0, ddof=1) if m >= 2 else np.full(self.truth.size, np.nan)
        # bias-variance form with the same ddof=1 spread, so SMSE >= SD holds exactly
        smse = np.sqrt((mean - self.truth) ** 2 + sd ** 2)
        if self.boot_se is not None:
            se = np.nanmean(self.boot_se[self.ok], axis=0) if m else np.full(self.truth.size, np.nan)
        else:
            se = np.full(self.truth.size, np.nan)
        return [{"Parameter": name, "True": self.truth[j], "Mean": mean[j], "SD": sd[j],
                 "SE": se[j], "SMSE": smse[j]}
                for j, name in enumerate(parameter_labels(self.truth.size // 3))]

    def write_csv(self, path) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["Parameter", "True", "Mean", "SD", "SE", "SMSE"])
            for row in self.summary_rows():
                w.writerow([row["Parameter"]] + [_fmt_csv(row[k]) for k in ("True", "Mean", "SD", "SE", "SMSE")])

    def write_estimates(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["rep", "converged"] + parameter_labels(self.truth.size // 3))
            for r, row in enumerate(self.estimates):
                w.writerow([r, int(self.converged[r])] + [_fmt_csv(v) for v in row])

    def table(self) -> str:
        """Aligned text in the Parameter / True / Mean / SD / SE / SMSE layout."""
        head = f"{'Parameter':<10}" + "".join(f"{c:>9}" for c in ("True", "Mean", "SD", "SE", "SMSE"))
        lines = [f"{self.design.name} fitted {self.fit_family}", head]
        if self.status_mix is not None:
            q = self.status_mix
            lines.insert(1, "(q_C, q_O, q_D, q_T) = (" + ", ".join(f"{100 * v:.0f}%" for v in q) + ")")
        for row in self.summary_rows():
            lines.append(f"{row['Parameter']:<10}" + "".join(
                f"{_fmt_txt(row[c]):>9}" for c in ("True", "Mean", "SD", "SE", "SMSE")))
        ok = int(np.sum(self.ok))
        lines.append(f"replicates used: {ok} of {self.estimates.shape[0]}")
        if ok < 2:
            lines.append("SD and SMSE unavailable: fewer than two usable replicates")
        return "\n".join(lines)


def _fmt_csv(v) -> str:
    return "NA" if not np.isfinite(v) else repr(float(v))


def _fmt_txt(v) -> str:
    return "NA" if not np.isfinite(v) else f"{v:.3f}"


@dataclass(frozen=True)
class StudyConfig:
    fit_family: str | None = None
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    bootstrap_B: int = 0
    threads: int = 1
    keep_fits: bool = False


def _run_rep(args):
    design, lt, seed, r, study = args
    d, _ = generate_one(design, lt, [seed, r])
    family = study.fit_family or design.family
    counts = np.bincount(d.delta, minlength=4) / d.n
    try:
        f = fit(d, lt, family, study.optimizer)
    except (ValueError, FloatingPointError) as exc:
        log.warning("replicate %d failed: %s", r, exc)
        return None, None, counts
    se = None
    if study.bootstrap_B:
        from .bootstrap import bootstrap
        res = bootstrap(f, d, lt, study.bootstrap_B, [seed, r, 2], optimizer=study.optimizer)
        se = res.se
    return f, se, counts


def run_study(design: SimDesign, lt: LifeTable | None = None, seed: int = 1,
              study: StudyConfig | None = None) -> StudyResult:
    """Fit every replicate of ``design`` and collect the estimates.

    Results are ordered by replicate regardless of ``study.threads``.
    """
    study = study or StudyConfig()
    lt = lt or synthetic_lifetable()
    design = resolve_censoring(design, lt)
    jobs = [(design, lt, seed, r, study) for r in range(design.reps)]
    if study.threads > 1:
        with ProcessPoolExecutor(max_workers=study.threads) as pool:
            out = list(pool.map(_run_rep, jobs))
    else:
        out = [_run_rep(j) for j in jobs]
    family = study.fit_family or design.family
    truth = design.theta.copy()
    if family != design.family:
        truth[:6] = np.nan
    k = truth.size
    est = np.full((design.reps, k), np.nan)
    conv = np.zeros(design.reps, dtype=bool)
    boot = np.full((design.reps, k), np.nan) if study.bootstrap_B else None
    fits = []
    for r, (f, se, _) in enumerate(out):
        if f is None:
            fits.append(None)
            continue
        est[r] = f.theta
        conv[r] = f.converged
        if boot is not None and se is not None:
            boot[r] = se
        fits.append(f if study.keep_fits else None)
    mix = np.mean([c for *_, c in out], axis=0)
    return StudyResult(design, family, truth, est, conv, boot, fits, mix)
