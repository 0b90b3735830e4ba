"""Alternating maximum-likelihood estimation of the cure time model.

The alpha half-step is unconstrained gradient ascent with Armijo
backtracking. The beta half-step maximizes the sigmoid-smoothed, ridge
penalized objective by Rosen's gradient projection under the linear
constraints ``log z_i <= beta @ x_i`` of the status-2 records. An
intercept-only cure time can instead be profiled on a grid.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy import linalg

from .core import (FEASIBILITY_SLACK, CtmProblem, alpha_value_grad, beta_value_grad,
                   objective_value)
from .data import DataError, Dataset
from .excess import ExcessModel, log_survival_only
from .lifetable import LifeTable

log = logging.getLogger(__name__)


@dataclass
class OptimizerConfig:
    max_outer_iters: int = 200
    max_inner_iters: int = 500
    tol_obj: float = 1e-9
    tol_param: float = 1e-7
    tol_grad: float = 1e-6
    armijo_c: float = 1e-4
    backtrack: float = 0.5
    initial_step: float = 1.0
    constraint_slack: float = 1e-9
    # beta-step starts from a coarser sigmoid and tightens by this factor
    sigma_start_factor: float = 64.0
    sigma_shrink: float = 4.0
    # global search, used only when status-3 records are present
    scan_points: int = 40
    restarts: int = 20
    restart_scale: float = 0.1
    restart_seed: int = 0
    grid_min: float | None = None
    grid_max: float | None = None
    grid_points: int = 400
    grid_refine: int = 10

    def __post_init__(self):
        for name in ("tol_obj", "tol_param", "tol_grad", "constraint_slack"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.backtrack < 1 or not 0 < self.armijo_c < 1:
            raise ValueError("Armijo constants must lie in (0, 1)")
        if self.grid_min is not None and self.grid_min <= 0:
            raise ValueError("grid_min must be positive")
        if self.scan_points < 0 or self.restarts < 0 or self.restart_scale <= 0:
            raise ValueError("scan_points and restarts must be >= 0, restart_scale > 0")
        if self.grid_points < 1 or self.grid_refine < 1:
            raise ValueError("grid sizes must be positive")
        if self.sigma_start_factor < 1 or self.sigma_shrink <= 1:
            raise ValueError("sigma schedule must start at or above sigma_n and shrink")

    @classmethod
    def from_mapping(cls, values: dict) -> "OptimizerConfig":
        types = {f.name: f.type for f in fields(cls)}
        out = {}
        for key, raw in values.items():
            if key not in types:
                raise KeyError(f"unknown optimizer option {key!r}")
            if raw is None or (isinstance(raw, str) and raw.lower() in ("none", "")):
                out[key] = None
            elif "int" in str(types[key]):
                out[key] = int(raw)
            else:
                out[key] = float(raw)
        return cls(**out)

    @classmethod
    def from_file(cls, path) -> "OptimizerConfig":
        return cls.from_mapping(read_key_values(path))

    def to_dict(self) -> dict:
        return asdict(self)


def read_key_values(path) -> dict:
    """Parse a ``key = value`` file; ``#`` starts a comment."""
    values = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        values[key] = value
    return values


@dataclass
class InnerResult:
    x: np.ndarray
    value: float
    iterations: int
    converged: bool
    trace: list = field(default_factory=list)
    active: np.ndarray | None = None


# --- alpha step ------------------------------------------------------------------

def _converged(f_old, f_new, step, x, cfg) -> bool:
    small_f = abs(f_new - f_old) <= cfg.tol_obj * (1.0 + abs(f_old))
    small_x = np.max(np.abs(step), initial=0.0) <= cfg.tol_param * (1.0 + np.max(np.abs(x), initial=0.0))
    return small_f and small_x


def _bb_step(s, y, t, cfg) -> float:
    sy = float(s @ y)
    # ascent on a locally concave function gives s @ y < 0
    step = float(s @ s) / -sy if sy < 0 else 2.0 * t
    return min(max(step, 1e-12), 1e12)


def gradient_ascent(fg: Callable, x0, cfg: OptimizerConfig) -> InnerResult:
    """Steepest ascent with Armijo backtracking.

    The first trial step is ``cfg.initial_step``; later trials start from the
    Barzilai-Borwein estimate and are halved until the Armijo condition holds,
    so accepted objective values never decrease.
    """
    x = np.array(x0, dtype=float)
    f, g = fg(x)
    if not np.isfinite(f):
        raise FloatingPointError("objective is not finite at the starting point")
    trace = [f]
    step = cfg.initial_step
    for it in range(cfg.max_inner_iters):
        if np.max(np.abs(g)) <= cfg.tol_grad * (1.0 + abs(f)):
            return InnerResult(x, f, it, True, trace)
        gg = float(g @ g)
        t = step
        while True:
            xn = x + t * g
            fn, gn = fg(xn)
            if np.isfinite(fn) and fn >= f + cfg.armijo_c * t * gg:
                break
            t *= cfg.backtrack
            if t * np.max(np.abs(g)) < 1e-15 * (1.0 + np.max(np.abs(x))):
                # no representable ascent step remains
                return InnerResult(x, f, it, True, trace)
        s = xn - x
        step = _bb_step(s, gn - g, t, cfg)
        done = _converged(f, fn, s, x, cfg)
        x, f, g = xn, fn, gn
        trace.append(f)
        if done:
            return InnerResult(x, f, it + 1, True, trace)
    return InnerResult(x, f, cfg.max_inner_iters, False, trace)


def fit_alpha(prob: CtmProblem, alpha0, beta, cfg: OptimizerConfig | None = None) -> InnerResult:
    """Maximize the exact log-likelihood over alpha at fixed, feasible beta."""
    cfg = cfg or OptimizerConfig()
    beta = np.asarray(beta, dtype=float)
    return gradient_ascent(lambda a: alpha_value_grad(prob, a, beta), alpha0, cfg)


# --- gradient projection -------------------------------------------------------------

@dataclass
class Projection:
    direction: np.ndarray
    active: np.ndarray        # indices (into the supplied rows) kept active
    multipliers: np.ndarray   # KKT multipliers of the kept rows, >= 0 at optimality
    dropped: list


def _project(g, rows):
    if rows.shape[0] == 0:
        return g.copy(), np.arange(0), np.zeros(0)
    q, r, piv = linalg.qr(rows.T, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    rank = int(np.sum(diag > 1e-10 * max(diag[0], 1e-300)))
    q = q[:, :rank]
    keep = np.sort(piv[:rank])
    d = g - q @ (q.T @ g)
    d -= q @ (q.T @ d)
    a = rows[keep]
    lam = np.linalg.solve(a @ a.T, a @ g)
    return d, keep, -lam


def project_direction(g, active_rows, tol: float = 1e-10) -> Projection:
    """Project ``g`` onto the null space of the active constraint rows.

    Constraints are ``a @ beta >= b`` and the objective is maximized, so a
    negative multiplier means the gradient points into the feasible interior
    of that constraint. When the projected direction vanishes the row with the
    most negative multiplier is released and the projection repeated.
    Linearly dependent rows are discarded by pivoted QR.
    """
    g = np.asarray(g, dtype=float)
    rows = np.atleast_2d(np.asarray(active_rows, dtype=float)) if np.size(active_rows) else np.zeros((0, g.size))
    index = np.arange(rows.shape[0])
    dropped = []
    while True:
        d, keep, mult = _project(g, rows[index])
        index = index[keep]
        if np.max(np.abs(d), initial=0.0) > tol or index.size == 0 or np.min(mult) >= -tol:
            return Projection(d, index, mult, dropped)
        j = int(np.argmin(mult))
        dropped.append(int(index[j]))
        index = np.delete(index, j)


@dataclass(frozen=True)
class ConstraintSet:
    """Rows ``A`` and bounds ``b`` of ``A @ beta >= b``."""

    A: np.ndarray
    b: np.ndarray

    @classmethod
    def from_problem(cls, prob: CtmProblem) -> "ConstraintSet":
        return cls(prob.x2[prob.is2], prob.logz[prob.is2])

    def slack(self, beta) -> np.ndarray:
        return self.A @ beta - self.b

    def active(self, beta) -> np.ndarray:
        return np.flatnonzero(self.slack(beta) <= 1e-8 * (1.0 + np.abs(self.b)))

    def make_feasible(self, beta, margin: float = 0.0) -> np.ndarray:
        """Raise the intercept until every constraint holds (``x[0] == 1``)."""
        beta = np.array(beta, dtype=float)
        if self.b.size:
            worst = -np.min(self.slack(beta))
            if worst > -margin:
                beta[0] += worst + margin
        return beta


def _beta_ascent(prob, alpha, beta, sigma, cons: ConstraintSet, cfg: OptimizerConfig, ez):
    fg = lambda b: beta_value_grad(prob, alpha, b, sigma, ez)
    f, g = fg(beta)
    trace = [f]
    step = cfg.initial_step
    active = cons.active(beta)
    for it in range(cfg.max_inner_iters):
        tol = cfg.tol_grad * (1.0 + abs(f))
        proj = project_direction(g, cons.A[active], tol)
        active = active[proj.active]
        d = proj.direction
        if np.max(np.abs(d), initial=0.0) <= tol:
            return InnerResult(beta, f, it, True, trace, active)
        slack = cons.slack(beta)
        ad = cons.A @ d
        blocking = ad < -1e-14 * np.max(np.abs(d))
        blocking[active] = False
        t_max = np.min(np.maximum(slack[blocking], 0.0) / -ad[blocking]) if blocking.any() else np.inf
        gd = float(g @ d)
        t = min(step, t_max)
        while True:
            bn = beta + t * d
            fn, gn = fg(bn)
            if np.isfinite(fn) and fn >= f + cfg.armijo_c * t * gd:
                break
            t *= cfg.backtrack
            if t * np.max(np.abs(d)) < 1e-15 * (1.0 + np.max(np.abs(beta))):
                return InnerResult(beta, f, it, True, trace, active)
        if t == t_max:
            hit = np.flatnonzero(blocking)[np.argmin(np.maximum(slack[blocking], 0.0) / -ad[blocking])]
            active = np.union1d(active, [hit])
        active = np.union1d(active, cons.active(bn))
        s = bn - beta
        step = _bb_step(s, gn - g, t, cfg)
        done = _converged(f, fn, s, beta, cfg)
        beta, f, g = bn, fn, gn
        trace.append(f)
        if done:
            return InnerResult(beta, f, it + 1, True, trace, active)
    return InnerResult(beta, f, cfg.max_inner_iters, False, trace, active)


def fit_beta(prob: CtmProblem, alpha, beta0, cfg: OptimizerConfig | None = None,
             sigmas: Sequence[float] | None = None) -> InnerResult:
    """Projected-gradient ascent on the smoothed penalized objective.

    ``sigmas`` is a decreasing bandwidth schedule ending at the problem's
    ``sigma_n``; each stage warm-starts the next.
    """
    cfg = cfg or OptimizerConfig()
    cons = ConstraintSet.from_problem(prob)
    beta = np.asarray(beta0, dtype=float)
    if cons.b.size and np.min(cons.slack(beta)) < 0:
        beta = cons.make_feasible(beta, margin=0.01)
    ez = prob.eval_z(alpha)
    sigmas = [prob.sigma_n] if sigmas is None else list(sigmas)
    total, trace, res = 0, [], None
    for sigma in sigmas:
        res = _beta_ascent(prob, alpha, beta, sigma, cons, cfg, ez)
        beta = res.x
        total += res.iterations
        trace.extend(res.trace)
    beta = cons.make_feasible(beta)
    return InnerResult(beta, res.value, total, res.converged, trace, res.active)


def sigma_schedule(prob: CtmProblem, cfg: OptimizerConfig) -> list[float]:
    sigmas = [prob.sigma_n]
    while sigmas[-1] * cfg.sigma_shrink <= prob.sigma_n * cfg.sigma_start_factor * (1 + 1e-12):
        sigmas.append(sigmas[-1] * cfg.sigma_shrink)
    return sigmas[::-1]


# --- full fit --------------------------------------------------------------------------

@dataclass
class CtmFit:
    family: str
    alpha1: np.ndarray
    alpha2: np.ndarray
    beta: np.ndarray
    kappa: float
    sigma_n: float
    loglik: float
    penalized_loglik: float
    n: int
    iterations: int
    converged: bool
    active_constraints: int
    tau: np.ndarray
    cure_rate: np.ndarray
    max_followup: float
    mu_link: str = "identity"
    x1_cols: list | None = None
    x2_cols: list | None = None
    covariate_names: list | None = None
    trace: list = field(default_factory=list)

    @property
    def alpha(self) -> np.ndarray:
        return np.concatenate([self.alpha1, self.alpha2])

    @property
    def theta(self) -> np.ndarray:
        """All estimated coefficients: alpha1, alpha2, beta."""
        return np.concatenate([self.alpha1, self.alpha2, self.beta])

    @property
    def model(self) -> ExcessModel:
        return ExcessModel(self.family, self.alpha1, self.alpha2, self.mu_link)

    @property
    def cure_rate_mean(self) -> float:
        return float(np.mean(self.cure_rate))

    @property
    def followup_limited(self) -> bool:
        """Some cure time lies within one year of the last observed time."""
        return bool(np.max(self.tau) >= self.max_followup - 1.0)

    def parameter_names(self) -> list[str]:
        names1 = _select_names(self.covariate_names, self.x1_cols, len(self.alpha1))
        names2 = _select_names(self.covariate_names, self.x2_cols, len(self.beta))
        return ([f"alpha1[{n}]" for n in names1] + [f"alpha2[{n}]" for n in names1]
                + [f"beta[{n}]" for n in names2])

    def strata(self, x1: np.ndarray, x2: np.ndarray, max_strata: int = 50) -> list[dict]:
        """Cure time and cure rate for each distinct covariate pattern."""
        joint = np.column_stack([x1, x2])
        uniq, first = np.unique(joint, axis=0, return_index=True)
        if len(uniq) > max_strata:
            return []
        out = []
        for i in np.sort(first):
            out.append({"x1": x1[i].tolist(), "x2": x2[i].tolist(),
                        "tau": float(self.tau[i]), "cure_rate": float(self.cure_rate[i])})
        return out

    def to_dict(self) -> dict:
        return {
            "family": self.family, "mu_link": self.mu_link,
            "alpha1": self.alpha1.tolist(), "alpha2": self.alpha2.tolist(),
            "beta": self.beta.tolist(), "kappa": self.kappa, "sigma_n": self.sigma_n,
            "loglik": self.loglik, "penalized_loglik": self.penalized_loglik, "n": self.n,
            "iterations": self.iterations, "converged": self.converged,
            "active_constraints": self.active_constraints,
            "tau": self.tau.tolist(), "cure_rate": self.cure_rate.tolist(),
            "cure_rate_mean": self.cure_rate_mean, "max_followup": self.max_followup,
            "followup_limited": self.followup_limited,
            "x1_cols": self.x1_cols, "x2_cols": self.x2_cols,
            "covariate_names": self.covariate_names,
            "parameter_names": self.parameter_names(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CtmFit":
        return cls(
            family=d["family"], alpha1=np.array(d["alpha1"], float), alpha2=np.array(d["alpha2"], float),
            beta=np.array(d["beta"], float), kappa=d["kappa"], sigma_n=d["sigma_n"],
            loglik=d["loglik"], penalized_loglik=d["penalized_loglik"], n=d["n"],
            iterations=d["iterations"], converged=d["converged"],
            active_constraints=d["active_constraints"], tau=np.array(d["tau"], float),
            cure_rate=np.array(d["cure_rate"], float), max_followup=d["max_followup"],
            mu_link=d.get("mu_link", "identity"), x1_cols=d.get("x1_cols"),
            x2_cols=d.get("x2_cols"), covariate_names=d.get("covariate_names"))


def _select_names(names, cols, p):
    if names is None:
        names = [f"x{j}" for j in range(p if cols is None else max(cols) + 1)]
    if cols is None:
        return list(names)[:p]
    return [names[j] for j in cols]


def initial_alpha(prob: CtmProblem, cfg: OptimizerConfig) -> np.ndarray:
    """Fit the family ignoring cure, with every death treated as a disease event."""
    events = prob.delta > 0
    logz = prob.logz
    a1 = np.zeros(prob.p1)
    a2 = np.zeros(prob.p1)
    if prob.family == "lognormal":
        m = float(np.mean(logz[events])) if events.any() else float(np.mean(logz))
        sd = float(np.std(logz)) or 1.0
        a1[0] = np.log(m) if prob.mu_link == "log" and m > 0 else m
        a2[0] = np.log(sd)
    else:
        a2[0] = float(np.median(logz))
    naive = CtmProblem(z=prob.z, delta=np.where(events, 2, 0), x1=prob.x1, x2=prob.x2[:, :1],
                       h_o=prob.h_o, family=prob.family, kappa=0.0, sigma_n=prob.sigma_n,
                       mu_link=prob.mu_link)
    beta_inf = np.array([float(np.max(logz)) + 30.0])
    res = fit_alpha(naive, np.concatenate([a1, a2]), beta_inf, cfg)
    return res.x


def initial_beta(prob: CtmProblem) -> np.ndarray:
    beta = np.zeros(prob.p2)
    if prob.is2.any():
        beta[0] = float(np.max(prob.logz[prob.is2])) + 0.01
    else:
        beta[0] = float(np.log(np.quantile(prob.z, 0.95))) + 0.01
    return ConstraintSet.from_problem(prob).make_feasible(beta, margin=0.01)


def _check_intercept(prob: CtmProblem):
    if not np.all(prob.x2[:, 0] == 1.0):
        raise DataError("the cure-time design must start with the intercept column")


def fit(d: Dataset, lt: LifeTable, family: str = "weibull", cfg: OptimizerConfig | None = None,
        init: tuple | None = None, kappa: float | None = None, sigma_n: float | None = None,
        x1_cols: Sequence[int] | None = None, x2_cols: Sequence[int] | None = None,
        mu_link: str = "identity") -> CtmFit:
    """Alternate alpha and beta half-steps until the penalized objective settles."""
    cfg = cfg or OptimizerConfig()
    prob = CtmProblem.build(d, lt, family, kappa, sigma_n, x1_cols, x2_cols, mu_link)
    return fit_problem(prob, cfg, init, covariate_names=list(d.covariate_names),
                       x1_cols=None if x1_cols is None else list(x1_cols),
                       x2_cols=None if x2_cols is None else list(x2_cols))


def fit_problem(prob: CtmProblem, cfg: OptimizerConfig | None = None, init: tuple | None = None,
                covariate_names=None, x1_cols=None, x2_cols=None) -> CtmFit:
    """Fit a prepared problem.

    Without ``init`` and with status-3 records present, the start comes from
    an intercept scan and the converged point is challenged by seeded
    restarts; the exact objective is rugged in beta when deaths of unknown
    cause dominate.
    """
    cfg = cfg or OptimizerConfig()
    if not np.any(prob.delta > 0):
        raise DataError("no uncensored observations: the model is not estimable")
    _check_intercept(prob)
    search = init is None and bool(prob.is3.any())
    if init is None:
        alpha, beta = initial_alpha(prob, cfg), initial_beta(prob)
        if search and cfg.scan_points > 0:
            alpha, beta = intercept_scan(prob, cfg, alpha, beta)
    else:
        alpha, beta = (np.array(v, dtype=float) for v in init)
        beta = ConstraintSet.from_problem(prob).make_feasible(beta, margin=0.0)
    state = _alternate(prob, cfg, alpha, beta)
    if search and cfg.restarts > 0:
        state = _restart(prob, cfg, state)
    alpha, beta, outer, converged, active, trace = state
    if not converged:
        log.warning("cure time fit did not converge in %d outer iterations", cfg.max_outer_iters)
    return _make_fit(prob, alpha, beta, outer, converged, active, trace,
                     covariate_names, x1_cols, x2_cols)


def _alternate(prob, cfg, alpha, beta):
    f_old = objective_value(prob, alpha, beta)
    trace = []
    converged = False
    outer = 0
    active = np.zeros(0, dtype=int)
    for outer in range(1, cfg.max_outer_iters + 1):
        ra = fit_alpha(prob, alpha, beta, cfg)
        f_mid = objective_value(prob, ra.x, beta)
        sigmas = sigma_schedule(prob, cfg) if outer == 1 else None
        rb = fit_beta(prob, ra.x, beta, cfg, sigmas)
        f_new = objective_value(prob, ra.x, rb.x)
        rejected = outer > 1 and f_new < f_mid - cfg.tol_obj * (1.0 + abs(f_mid))
        if rejected:
            # the surrogate disagrees with the exact objective; keep beta so the
            # alternation stays monotone instead of cycling
            rb = InnerResult(beta, rb.value, rb.iterations, True, rb.trace,
                             ConstraintSet.from_problem(prob).active(beta))
            f_new = f_mid
        trace.append({"alpha_half": f_mid, "beta_half": f_new, "alpha_iters": ra.iterations,
                      "beta_iters": rb.iterations, "beta_smoothed": rb.value,
                      "beta_rejected": rejected})
        change = max(np.max(np.abs(ra.x - alpha)), np.max(np.abs(rb.x - beta)))
        alpha, beta, active = ra.x, rb.x, rb.active
        if (abs(f_new - f_old) <= cfg.tol_obj * (1.0 + abs(f_old)) and change <= cfg.tol_param
                and ra.converged and rb.converged):
            converged = True
            break
        f_old = f_new
    return alpha, beta, outer, converged, active, trace


def intercept_scan(prob: CtmProblem, cfg: OptimizerConfig, alpha, beta):
    """Best constant cure time on a log-spaced grid, alpha profiled at each point."""
    cons = ConstraintSet.from_problem(prob)
    lo = float(np.log(np.quantile(prob.z, 0.05)))
    hi = float(np.log(np.max(prob.z)))
    if prob.is2.any():
        lo = max(lo, float(np.max(prob.logz[prob.is2])))
    best = (objective_value(prob, alpha, beta), np.asarray(alpha, float), np.asarray(beta, float))
    a = best[1]
    for c in np.linspace(lo, max(lo, hi), cfg.scan_points):
        b = np.zeros(prob.p2)
        b[0] = c
        b = cons.make_feasible(b)
        a = fit_alpha(prob, a, b, cfg).x
        v = objective_value(prob, a, b)
        if v > best[0]:
            best = (v, a.copy(), b)
    return best[1], best[2]


def _restart(prob, cfg, state):
    """Perturb beta around the incumbent; keep any start that raises the exact objective."""
    alpha, beta = state[0], state[1]
    cons = ConstraintSet.from_problem(prob)
    rng = np.random.default_rng(cfg.restart_seed)
    incumbent = objective_value(prob, alpha, beta)
    best_beta = None
    short = [prob.sigma_n * 16.0, prob.sigma_n * 4.0, prob.sigma_n]
    for _ in range(cfg.restarts):
        b = cons.make_feasible(beta + rng.normal(0.0, cfg.restart_scale, prob.p2))
        b = fit_beta(prob, alpha, b, cfg, short).x
        v = objective_value(prob, alpha, b)
        if v > incumbent + cfg.tol_obj * (1.0 + abs(incumbent)):
            incumbent, best_beta = v, b
    if best_beta is None:
        return state
    challenger = _alternate(prob, cfg, alpha, best_beta)
    if objective_value(prob, challenger[0], challenger[1]) > objective_value(prob, alpha, beta):
        a, b, outer, conv, active, trace = challenger
        return a, b, state[2] + outer, conv, active, state[5] + trace
    return state


def _make_fit(prob, alpha, beta, iterations, converged, active, trace,
              covariate_names=None, x1_cols=None, x2_cols=None) -> CtmFit:
    a1, a2 = prob.split_alpha(alpha)
    tau = np.exp(prob.x2 @ beta)
    cure = np.exp(log_survival_only(prob.family, tau, prob.x1 @ a1, prob.x1 @ a2, prob.mu_link))
    loglik = objective_value(prob, alpha, beta, penalized=False)
    return CtmFit(
        family=prob.family, alpha1=a1.copy(), alpha2=a2.copy(), beta=np.array(beta, float),
        kappa=prob.kappa, sigma_n=prob.sigma_n, loglik=loglik,
        penalized_loglik=loglik - prob.penalty(beta), n=prob.n, iterations=iterations,
        converged=converged, active_constraints=int(np.size(active)), tau=tau, cure_rate=cure,
        max_followup=float(np.max(prob.z)), mu_link=prob.mu_link, x1_cols=x1_cols,
        x2_cols=x2_cols, covariate_names=covariate_names, trace=trace)


# --- grid search ------------------------------------------------------------------------

@dataclass
class GridResult:
    tau: float
    alpha: np.ndarray
    taus: np.ndarray
    profile: np.ndarray
    fit: CtmFit


def grid_search_tau(d: Dataset, lt: LifeTable, family: str = "weibull",
                    cfg: OptimizerConfig | None = None, kappa: float | None = None,
                    x1_cols: Sequence[int] | None = None, mu_link: str = "identity") -> GridResult:
    """Profile the exact penalized objective over a constant cure time.

    Returns the smallest grid value attaining the maximum after one local
    refinement, together with the full (coarse + refined) profile.
    """
    cfg = cfg or OptimizerConfig()
    prob = CtmProblem.build(d, lt, family, kappa, None, x1_cols, [0], mu_link)
    if not np.any(prob.delta > 0):
        raise DataError("no uncensored observations: the model is not estimable")
    lo = cfg.grid_min if cfg.grid_min is not None else float(np.min(prob.z)) * 1.01
    hi = cfg.grid_max if cfg.grid_max is not None else float(np.max(prob.z)) * 1.2
    coarse = np.linspace(lo, hi, cfg.grid_points)
    alpha0 = initial_alpha(prob, cfg)

    def profile(taus, alpha):
        values = np.full(taus.size, -np.inf)
        alphas = [None] * taus.size
        zmax2 = float(np.max(prob.z[prob.is2])) if prob.is2.any() else 0.0
        for i, tau in enumerate(taus):
            if tau < zmax2:
                continue
            beta = np.array([np.log(tau)])
            res = fit_alpha(prob, alpha, beta, cfg)
            alpha = res.x
            values[i] = objective_value(prob, alpha, beta)
            alphas[i] = alpha
        return values, alphas

    values, alphas = profile(coarse, alpha0)
    if not np.isfinite(values).any():
        raise ValueError("every grid point violates a status-2 constraint; widen the grid")
    k = int(np.argmax(values))
    step = coarse[1] - coarse[0] if coarse.size > 1 else 0.0
    taus, all_values = coarse, values
    if step > 0:
        fine = np.linspace(max(coarse[max(k - 1, 0)], lo), coarse[min(k + 1, coarse.size - 1)],
                           2 * cfg.grid_refine + 1)
        start = alphas[k] if alphas[k] is not None else alpha0
        fvalues, falphas = profile(fine, start)
        j = int(np.argmax(fvalues))
        if fvalues[j] >= values[k]:
            best_tau, best_alpha = fine[j], falphas[j]
        else:
            best_tau, best_alpha = coarse[k], alphas[k]
        taus = np.concatenate([coarse, fine])
        all_values = np.concatenate([values, fvalues])
    else:
        best_tau, best_alpha = coarse[k], alphas[k]
    order = np.argsort(taus, kind="stable")
    beta = np.array([np.log(best_tau)])
    fit_ = _make_fit(prob, best_alpha, beta, 1, True, ConstraintSet.from_problem(prob).active(beta),
                     [], list(d.covariate_names), None if x1_cols is None else list(x1_cols), [0])
    return GridResult(float(best_tau), best_alpha, taus[order], all_values[order], fit_)
