"""Parametric families for the disease (excess) event time.

Each family has two parameters tied to covariates through linear predictors
``eta1 = alpha1 @ x`` and ``eta2 = alpha2 @ x``:

* Weibull:      shape ``exp(eta1)``, scale ``exp(eta2)``, S(t) = exp(-(t/scale)^shape)
* LogNormal:    location ``eta1`` (or ``exp(eta1)``), sd ``exp(eta2)`` on log t
* LogLogistic:  shape ``exp(eta1)``, scale ``exp(eta2)``, S(t) = 1 / (1 + (t/scale)^shape)

All quantities are evaluated in log space together with their derivatives
with respect to ``(eta1, eta2)``; gradients in alpha follow by the chain rule.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import special

FAMILIES = ("weibull", "lognormal", "loglogistic")
_LOG_SQRT_2PI = 0.5 * np.log(2 * np.pi)


class LogEval(NamedTuple):
    """Log survival/density/hazard and their (2, n) derivatives in (eta1, eta2)."""

    log_surv: np.ndarray
    log_dens: np.ndarray
    log_haz: np.ndarray
    d_log_surv: np.ndarray
    d_log_dens: np.ndarray
    d_log_haz: np.ndarray


def _weibull(logt, eta1, eta2):
    k = np.exp(eta1)
    w = logt - eta2
    kw = k * w
    cumhaz = np.exp(kw)
    log_surv = -cumhaz
    log_haz = eta1 - eta2 + (k - 1.0) * w
    d_surv = np.stack([-cumhaz * kw, cumhaz * k])
    d_haz = np.stack([1.0 + kw, -k])
    return log_surv, log_haz, d_surv, d_haz


def _lognormal(logt, eta1, eta2, mu_link):
    mu = np.exp(eta1) if mu_link == "log" else eta1
    dmu = mu if mu_link == "log" else np.ones_like(mu)
    s = np.exp(eta2)
    w = (logt - mu) / s
    log_surv = special.log_ndtr(-w)
    log_pdf = -0.5 * w * w - _LOG_SQRT_2PI
    log_dens = log_pdf - eta2 - logt
    log_haz = log_dens - log_surv
    mills = np.exp(log_pdf - log_surv)
    d_surv = np.stack([mills / s * dmu, mills * w])
    d_dens = np.stack([w / s * dmu, w * w - 1.0])
    return log_surv, log_haz, d_surv, d_dens - d_surv


def _loglogistic(logt, eta1, eta2):
    k = np.exp(eta1)
    u = k * (logt - eta2)
    log_surv = -np.logaddexp(0.0, u)
    log_haz = eta1 - logt - np.logaddexp(0.0, -u)
    p, q = special.expit(u), special.expit(-u)
    d_surv = np.stack([-p * u, p * k])
    d_haz = np.stack([1.0 + q * u, -q * k])
    return log_surv, log_haz, d_surv, d_haz


def evaluate(family: str, t, eta1, eta2, mu_link: str = "identity") -> LogEval:
    """Vectorized log-space evaluation at times ``t`` (> 0)."""
    t, eta1, eta2 = np.broadcast_arrays(np.asarray(t, float), np.asarray(eta1, float),
                                        np.asarray(eta2, float))
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        logt = np.log(t)
        if family == "weibull":
            ls, lh, ds, dh = _weibull(logt, eta1, eta2)
        elif family == "lognormal":
            ls, lh, ds, dh = _lognormal(logt, eta1, eta2, mu_link)
        elif family == "loglogistic":
            ls, lh, ds, dh = _loglogistic(logt, eta1, eta2)
        else:
            raise ValueError(f"unknown family {family!r}; expected one of {FAMILIES}")
        return LogEval(ls, lh + ls, lh, ds, dh + ds, dh)


def log_survival_only(family: str, t, eta1, eta2, mu_link: str = "identity") -> np.ndarray:
    """Cheap log S without derivatives."""
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        logt = np.log(np.asarray(t, float))
        if family == "weibull":
            return -np.exp(np.exp(eta1) * (logt - eta2))
        if family == "lognormal":
            mu = np.exp(eta1) if mu_link == "log" else eta1
            return special.log_ndtr(-(logt - mu) / np.exp(eta2))
        if family == "loglogistic":
            return -np.logaddexp(0.0, np.exp(eta1) * (logt - eta2))
    raise ValueError(f"unknown family {family!r}")


def inverse_survival(family: str, u, eta1, eta2, mu_link: str = "identity") -> np.ndarray:
    """Time ``t`` with ``S(t) = u``; used for sampling by inversion."""
    u = np.asarray(u, float)
    if family == "weibull":
        return np.exp(eta2) * (-np.log(u)) ** np.exp(-eta1)
    if family == "lognormal":
        mu = np.exp(eta1) if mu_link == "log" else eta1
        return np.exp(mu + np.exp(eta2) * special.ndtri(1.0 - u))
    if family == "loglogistic":
        return np.exp(eta2) * ((1.0 - u) / u) ** np.exp(-eta1)
    raise ValueError(f"unknown family {family!r}")


@dataclass(frozen=True, eq=False)
class ExcessModel:
    family: str
    alpha1: np.ndarray
    alpha2: np.ndarray
    mu_link: str = "identity"

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}; expected one of {FAMILIES}")
        if self.mu_link not in ("identity", "log"):
            raise ValueError("mu_link must be 'identity' or 'log'")
        a1 = np.array(self.alpha1, dtype=float).ravel()
        a2 = np.array(self.alpha2, dtype=float).ravel()
        if a1.shape != a2.shape:
            raise ValueError("alpha1 and alpha2 must have equal length")
        object.__setattr__(self, "alpha1", a1)
        object.__setattr__(self, "alpha2", a2)

    @property
    def alpha(self) -> np.ndarray:
        return np.concatenate([self.alpha1, self.alpha2])

    @classmethod
    def from_vector(cls, family: str, alpha, mu_link: str = "identity") -> "ExcessModel":
        alpha = np.asarray(alpha, dtype=float)
        p = alpha.size // 2
        return cls(family, alpha[:p], alpha[p:], mu_link)

    def predictors(self, x):
        x = np.asarray(x, dtype=float)
        return x @ self.alpha1, x @ self.alpha2

    def evaluate(self, t, x) -> LogEval:
        eta1, eta2 = self.predictors(x)
        return evaluate(self.family, t, eta1, eta2, self.mu_link)

    def sample(self, x, u) -> np.ndarray:
        eta1, eta2 = self.predictors(x)
        return inverse_survival(self.family, u, eta1, eta2, self.mu_link)


def survival(m: ExcessModel, t, x) -> np.ndarray:
    return np.exp(m.evaluate(t, x).log_surv)


def density(m: ExcessModel, t, x) -> np.ndarray:
    return np.exp(m.evaluate(t, x).log_dens)


def hazard(m: ExcessModel, t, x) -> np.ndarray:
    return np.exp(m.evaluate(t, x).log_haz)


def grad_alpha(m: ExcessModel, t: float, x, which: str = "survival") -> np.ndarray:
    """Gradient of S, f or h at a single ``(t, x)`` with respect to (alpha1, alpha2)."""
    x = np.asarray(x, dtype=float)
    ev = m.evaluate(t, x)
    if which == "survival":
        value, d = ev.log_surv, ev.d_log_surv
    elif which == "density":
        value, d = ev.log_dens, ev.d_log_dens
    elif which == "hazard":
        value, d = ev.log_haz, ev.d_log_haz
    else:
        raise ValueError("which must be 'survival', 'density' or 'hazard'")
    scale = float(np.exp(value))
    return scale * np.concatenate([float(d[0]) * x, float(d[1]) * x])
