"""Cure time model likelihood, its sigmoid-smoothed surrogate, and gradients.

Under the model the total hazard is ``h_O(t) + h_D(t|x) * I(t <= tau(x))``
with ``tau(x) = exp(beta @ x)``. Per observation the log-likelihood terms
that depend on the parameters are

* status 0, 1: ``log U_D(z)`` where ``U_D(z) = S_D(min(z, tau))``
* status 2:    ``log f_D(z)`` if ``z <= tau`` else ``-inf``
* status 3:    ``log h_T(z) + log U_D(z)``

The smoothed surrogate replaces ``I(z <= tau)`` by the sigmoid
``R(tau - z; sigma)`` for statuses 0, 1 and 3; status-2 records only enter as
the linear constraints ``log z <= beta @ x``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import special

from .data import Dataset, Observation
from .excess import ExcessModel, LogEval, evaluate
from .lifetable import LifeTable

# Slack on the log scale for the status-2 feasibility test.
FEASIBILITY_SLACK = 1e-9


def sigmoid(u, sigma: float):
    """R(u; sigma) = 1 / (1 + exp(-u / sigma))."""
    return special.expit(np.asarray(u, dtype=float) / sigma)


@dataclass(frozen=True, eq=False)
class CtmProblem:
    """Arrays needed to evaluate the objective for one dataset.

    ``x1`` feeds the excess-time parameters, ``x2`` the cure time; ``h_o``
    holds the background hazard at each observed time.
    """

    z: np.ndarray
    delta: np.ndarray
    x1: np.ndarray
    x2: np.ndarray
    h_o: np.ndarray
    family: str
    kappa: float
    sigma_n: float
    mu_link: str = "identity"

    def __post_init__(self):
        object.__setattr__(self, "logz", np.log(self.z))
        with np.errstate(divide="ignore"):
            object.__setattr__(self, "log_h_o", np.log(self.h_o))
        object.__setattr__(self, "is2", self.delta == 2)
        object.__setattr__(self, "is3", self.delta == 3)
        object.__setattr__(self, "smooth_idx", np.flatnonzero(self.delta != 2))

    @classmethod
    def build(cls, d: Dataset, lt: LifeTable, family: str, kappa: float | None = None,
              sigma_n: float | None = None, x1_cols: Sequence[int] | None = None,
              x2_cols: Sequence[int] | None = None, mu_link: str = "identity") -> "CtmProblem":
        n = d.n
        x1 = d.x if x1_cols is None else d.x[:, list(x1_cols)]
        x2 = d.x if x2_cols is None else d.x[:, list(x2_cols)]
        h_o = lt.hazard_at(d.diag_year, d.age, d.sex, d.z)
        return cls(z=np.asarray(d.z, float), delta=np.asarray(d.delta), x1=x1, x2=x2, h_o=h_o,
                   family=family, kappa=1.0 / n if kappa is None else float(kappa),
                   sigma_n=n ** -0.5 if sigma_n is None else float(sigma_n), mu_link=mu_link)

    @property
    def n(self) -> int:
        return self.z.size

    @property
    def p1(self) -> int:
        return self.x1.shape[1]

    @property
    def p2(self) -> int:
        return self.x2.shape[1]

    def split_alpha(self, alpha):
        alpha = np.asarray(alpha, dtype=float)
        return alpha[: self.p1], alpha[self.p1:]

    def eval_at(self, alpha, t) -> LogEval:
        a1, a2 = self.split_alpha(alpha)
        return evaluate(self.family, t, self.x1 @ a1, self.x1 @ a2, self.mu_link)

    def eval_z(self, alpha) -> LogEval:
        return self.eval_at(alpha, self.z)

    def penalty(self, beta) -> float:
        beta = np.asarray(beta, dtype=float)
        return 0.5 * self.n * self.kappa * float(beta @ beta)

    def constraint_slack(self, beta) -> np.ndarray:
        """``beta @ x - log z`` for each status-2 record (feasible when >= 0)."""
        return self.x2[self.is2] @ np.asarray(beta, float) - self.logz[self.is2]


def exact_terms(prob: CtmProblem, alpha, beta, ez: LogEval | None = None) -> np.ndarray:
    """Per-observation log-likelihood contributions (``-inf`` marks an infeasible status 2)."""
    ez = prob.eval_z(alpha) if ez is None else ez
    lin = prob.x2 @ np.asarray(beta, float)
    tau = np.exp(lin)
    et = prob.eval_at(alpha, tau)
    live = prob.z <= tau
    out = np.where(live, ez.log_surv, et.log_surv)
    feasible = prob.logz <= lin + FEASIBILITY_SLACK
    out = np.where(prob.is2, np.where(feasible, ez.log_dens, -np.inf), out)
    log_ht = np.where(live, np.logaddexp(prob.log_h_o, ez.log_haz), prob.log_h_o)
    return np.where(prob.is3, out + log_ht, out)


def objective_value(prob: CtmProblem, alpha, beta, penalized: bool = True) -> float:
    value = float(np.sum(exact_terms(prob, alpha, beta)))
    return value - prob.penalty(beta) if penalized else value


def alpha_value_grad(prob: CtmProblem, alpha, beta, ez: LogEval | None = None):
    """Exact log-likelihood at fixed beta and its gradient in alpha."""
    ez = prob.eval_z(alpha) if ez is None else ez
    lin = prob.x2 @ np.asarray(beta, float)
    tau = np.exp(lin)
    et = prob.eval_at(alpha, tau)
    live = prob.z <= tau
    value = np.where(live, ez.log_surv, et.log_surv)
    g = np.where(live, ez.d_log_surv, et.d_log_surv)

    feasible = prob.logz <= lin + FEASIBILITY_SLACK
    value = np.where(prob.is2, np.where(feasible, ez.log_dens, -np.inf), value)
    g = np.where(prob.is2, ez.d_log_dens, g)

    live3 = prob.is3 & live
    # a trial point with -inf value can carry nan terms; the line search rejects it
    with np.errstate(invalid="ignore", over="ignore"):
        log_ht = np.logaddexp(prob.log_h_o, ez.log_haz)
        value = np.where(live3, value + log_ht, value)
        value = np.where(prob.is3 & ~live, value + prob.log_h_o, value)
        share = np.where(live3, np.exp(ez.log_haz - log_ht), 0.0)
        g = g + share * ez.d_log_haz
        grad = np.concatenate([prob.x1.T @ g[0], prob.x1.T @ g[1]])
    return float(np.sum(value)), grad


def beta_value_grad(prob: CtmProblem, alpha, beta, sigma: float | None = None,
                    ez: LogEval | None = None):
    """Smoothed, penalized objective in beta and its gradient.

    Status-2 records are excluded; they act only through the constraints.
    """
    sigma = prob.sigma_n if sigma is None else sigma
    beta = np.asarray(beta, dtype=float)
    ez = prob.eval_z(alpha) if ez is None else ez
    # extreme trial steps overflow tau; the line search rejects the resulting non-finite values
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        idx = prob.smooth_idx
        x2 = prob.x2[idx]
        tau = np.exp(x2 @ beta)
        a1, a2 = prob.split_alpha(alpha)
        x1 = prob.x1[idx]
        et = evaluate(prob.family, tau, x1 @ a1, x1 @ a2, prob.mu_link)

        u = (tau - prob.z[idx]) / sigma
        r, rc = special.expit(u), special.expit(-u)
        dr = r * rc / sigma
        ls_z, ls_t = ez.log_surv[idx], et.log_surv
        top = np.maximum(ls_z, ls_t)
        a, b = np.exp(ls_z - top), np.exp(ls_t - top)
        us = a * r + b * rc
        value = np.sum(top + np.log(us))
        dlog = ((a - b) * dr - np.exp(et.log_haz) * b * rc) / us

        is3 = prob.is3[idx]
        if np.any(is3):
            h_d = np.exp(ez.log_haz[idx][is3])
            hs = prob.h_o[idx][is3] + h_d * r[is3]
            value += np.sum(np.log(hs))
            dlog[is3] += h_d * dr[is3] / hs

        grad = x2.T @ (dlog * tau) - prob.n * prob.kappa * beta
    return float(value) - prob.penalty(beta), grad


# --- parameter-level API ---------------------------------------------------------

@dataclass(frozen=True, eq=False)
class CtmParams:
    """Excess model plus cure-time coefficients and tuning constants.

    ``kappa`` and ``sigma_n`` left as ``None`` resolve to ``1/n`` and
    ``n ** -0.5`` for the dataset they are used with.
    """

    model: ExcessModel
    beta: np.ndarray
    kappa: float | None = None
    sigma_n: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "beta", np.array(self.beta, dtype=float).ravel())
        if self.kappa is not None and self.kappa < 0:
            raise ValueError("kappa must be non-negative")
        if self.sigma_n is not None and self.sigma_n <= 0:
            raise ValueError("sigma_n must be positive")

    @property
    def alpha(self) -> np.ndarray:
        return self.model.alpha

    def tau(self, x) -> np.ndarray:
        return np.exp(np.asarray(x, float) @ self.beta)


def _problem(params: CtmParams, d: Dataset, lt: LifeTable) -> CtmProblem:
    return CtmProblem.build(d, lt, params.model.family, params.kappa, params.sigma_n,
                            mu_link=params.model.mu_link)


def u_d(params: CtmParams, t, x) -> np.ndarray:
    """Improper net survival: S_D(t) up to tau, constant S_D(tau) afterwards."""
    x = np.asarray(x, dtype=float)
    tau = params.tau(x)
    t = np.minimum(np.asarray(t, dtype=float), tau)
    eta1, eta2 = params.model.predictors(x)
    return np.exp(evaluate(params.model.family, t, eta1, eta2, params.model.mu_link).log_surv)


def loglik_contribution(params: CtmParams, obs: Observation, lt: LifeTable) -> float:
    d = Dataset.from_observations([obs])
    prob = _problem(params, d, lt)
    return float(exact_terms(prob, params.alpha, params.beta)[0])


def objective(params: CtmParams, d: Dataset, lt: LifeTable) -> float:
    """Exact log-likelihood minus the ridge penalty ``(n/2) kappa |beta|^2``."""
    return objective_value(_problem(params, d, lt), params.alpha, params.beta)


def smoothed_beta_objective(params: CtmParams, d: Dataset, lt: LifeTable) -> float:
    return beta_value_grad(_problem(params, d, lt), params.alpha, params.beta)[0]


def grad_beta_smoothed(params: CtmParams, d: Dataset, lt: LifeTable) -> np.ndarray:
    return beta_value_grad(_problem(params, d, lt), params.alpha, params.beta)[1]


def grad_alpha_given_beta(params: CtmParams, d: Dataset, lt: LifeTable) -> np.ndarray:
    return alpha_value_grad(_problem(params, d, lt), params.alpha, params.beta)[1]


def baseline_cure_survival(kind: str, pi: float, fn, t):
    """Net-survival factor of the classical cure models.

    ``kind='mixture'``: ``pi + (1 - pi) * fn(t)`` with ``fn`` the survival of
    the uncured. ``kind='nonmixture'``: ``pi ** fn(t)`` with ``fn`` the cdf
    of the promotion time.
    """
    if not 0.0 < pi < 1.0:
        raise ValueError("pi must lie in (0, 1)")
    value = fn(t)
    if kind == "mixture":
        return pi + (1.0 - pi) * value
    if kind == "nonmixture":
        return pi ** value
    raise ValueError("kind must be 'mixture' or 'nonmixture'")
