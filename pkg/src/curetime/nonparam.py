"""Kaplan-Meier, relative survival, conditional curves and CRS cure times.

These need no parametric model and serve two purposes: screening whether a
cohort reaches statistical cure at all, and the conditional-relative-survival
comparator cure times (CRS95, CRS99).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .data import Dataset
from .lifetable import LifeTable, subject_survival_matrix

DEFAULT_PROBES = (1.0, 3.0, 5.0, 7.0, 10.0)


@dataclass(frozen=True, eq=False)
class StepCurve:
    """Right-continuous product-limit curve.

    ``values[j]`` holds on ``[times[j], times[j+1])``; the curve is 1 before
    the first jump. ``var_terms[j]`` is the Greenwood increment at the jump.
    """

    times: np.ndarray
    values: np.ndarray
    at_risk: np.ndarray
    events: np.ndarray
    var_terms: np.ndarray

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.times, t, side="right") - 1
        vals = np.concatenate([[1.0], self.values])
        return vals[idx + 1]

    def greenwood_sum(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.times, t, side="right") - 1
        cum = np.concatenate([[0.0], np.cumsum(self.var_terms)])
        return cum[idx + 1]

    def se(self, t) -> np.ndarray:
        """Greenwood standard error; 0 once the curve has reached 0."""
        s = self(t)
        with np.errstate(invalid="ignore"):
            out = s * np.sqrt(self.greenwood_sum(t))
        return np.where(s > 0, out, 0.0)

    def at_risk_at(self, z: np.ndarray, t) -> np.ndarray:
        """Number of observed times ``>= t`` in ``z``."""
        z = np.sort(np.asarray(z, float))
        return z.size - np.searchsorted(z, np.asarray(t, float), side="left")


def kaplan_meier(d: Dataset, events: Sequence[int] = (1, 2, 3)) -> StepCurve:
    """Product-limit estimator; records whose status is not in ``events`` are censored."""
    if d.n == 0:
        raise ValueError("empty dataset")
    is_event = np.isin(d.delta, list(events))
    order = np.argsort(d.z, kind="stable")
    z, e = d.z[order], is_event[order]
    times = np.unique(z[e])
    n_risk = z.size - np.searchsorted(z, times, side="left")
    n_event = np.zeros(0)
    if times.size:
        uniq, first = np.unique(z, return_index=True)
        counts = np.add.reduceat(e.astype(float), first)
        n_event = counts[np.searchsorted(uniq, times)]
    frac = 1.0 - n_event / n_risk
    values = np.cumprod(frac)
    with np.errstate(divide="ignore", invalid="ignore"):
        var = np.where(n_risk > n_event, n_event / (n_risk * (n_risk - n_event)), np.inf)
    return StepCurve(times, values, n_risk.astype(float), n_event, var)


@dataclass(frozen=True, eq=False)
class Curve:
    """Values on an explicit grid, with pointwise standard errors."""

    t: np.ndarray
    value: np.ndarray
    se: np.ndarray
    at_risk: np.ndarray | None = None

    def write_csv(self, path) -> None:
        write_curves_csv(path, self.t, {"value": self.value, "se": self.se})


def default_grid(d: Dataset, step: float = 0.1) -> np.ndarray:
    top = float(np.max(d.z))
    return np.round(np.arange(0.0, top + step / 2, step), 10)


def _expected_matrix(d: Dataset, lt: LifeTable, grid) -> np.ndarray:
    return subject_survival_matrix(lt, d.diag_year, d.age, d.sex, grid)


def relative_survival(d: Dataset, lt: LifeTable, grid=None) -> Curve:
    """All-cause Kaplan-Meier divided by the cohort's expected survival (not clipped)."""
    grid = default_grid(d) if grid is None else np.asarray(grid, dtype=float)
    km = kaplan_meier(d)
    expected = _expected_matrix(d, lt, grid).mean(axis=0)
    return Curve(grid, km(grid) / expected, km.se(grid) / expected, km.at_risk_at(d.z, grid))


@dataclass(frozen=True, eq=False)
class ConditionalPair:
    k: float
    t: np.ndarray
    observed: np.ndarray      # S_T(t | k)
    expected: np.ndarray      # S_O(t | k) over the subjects still at risk at k
    se: np.ndarray
    at_risk: np.ndarray

    @property
    def gap(self) -> np.ndarray:
        return np.abs(self.observed - self.expected)


def conditional_curves(d: Dataset, lt: LifeTable, k: float, grid=None) -> ConditionalPair:
    """Observed and expected survival renormalized at ``k`` on grid points ``t >= k``."""
    grid = default_grid(d) if grid is None else np.asarray(grid, dtype=float)
    grid = grid[grid >= k]
    if k > 0:
        grid = np.unique(np.concatenate([[k], grid]))
    risk = d.z > k if k > 0 else np.ones(d.n, dtype=bool)
    if not risk.any():
        raise ValueError(f"no subjects at risk at t={k}")
    km = kaplan_meier(d)
    s_k = float(km(k))
    if s_k <= 0:
        raise ValueError(f"survival estimate is zero at t={k}")
    observed = km(grid) / s_k
    # the Greenwood sum is inf once the curve hits 0; those points get se 0
    with np.errstate(invalid="ignore"):
        se = observed * np.sqrt(np.maximum(km.greenwood_sum(grid) - km.greenwood_sum(k), 0.0))
    se = np.where(observed > 0, se, 0.0)
    sub = d.subset(risk)
    mat = subject_survival_matrix(lt, sub.diag_year, sub.age, sub.sex, np.concatenate([[k], grid]))
    expected = (mat[:, 1:] / mat[:, :1]).mean(axis=0)
    return ConditionalPair(float(k), grid, observed, expected, se, km.at_risk_at(d.z, grid))


# --- CRS comparator ---------------------------------------------------------------------

def crs_from_curve(grid, rs, threshold: float = 0.95) -> float | None:
    """Smallest grid time ``k`` with ``rs(t) / rs(k) > threshold`` for all grid ``t >= k``.

    The last grid point never qualifies (nothing follows it), nor does a
    point where ``rs`` is zero.
    """
    grid = np.asarray(grid, dtype=float)
    rs = np.asarray(rs, dtype=float)
    if grid.size < 2:
        return None
    # suffix minimum lets every k be tested in one pass
    suffix_min = np.minimum.accumulate(rs[::-1])[::-1]
    for i in range(grid.size - 1):
        if rs[i] > 0 and suffix_min[i] / rs[i] > threshold:
            return float(grid[i])
    return None


def crs_cure_time(d: Dataset, lt: LifeTable, threshold: float = 0.95, grid=None,
                  min_at_risk: int = 10) -> float | None:
    """CRS cure time on the part of ``grid`` with at least ``min_at_risk`` subjects.

    The tail of a relative survival curve rests on a handful of subjects and
    drops to 0 whenever the last one dies, which would veto every ``k``.
    """
    curve = relative_survival(d, lt, grid)
    keep = curve.at_risk >= min_at_risk
    return crs_from_curve(curve.t[keep], curve.value[keep], threshold)


# --- graphical cure check ---------------------------------------------------------------

@dataclass
class ProbeResult:
    c: float
    n_at_risk: int
    sup_gap: float
    band: float
    supported: bool
    pair: ConditionalPair | None = None


@dataclass
class CureCheckReport:
    probes: list
    tau_hat: float | None
    max_followup: float
    verdict: str
    flags: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict, "flags": self.flags, "tau_hat": self.tau_hat,
            "max_followup": self.max_followup,
            "probes": [{"c": p.c, "n_at_risk": p.n_at_risk, "sup_gap": p.sup_gap, "band": p.band,
                        "supported": p.supported} for p in self.probes],
        }


def probe_gap(pair: ConditionalPair, min_at_risk: int = 10, band_width: float = 2.0):
    """Largest ``|S_T(t|c) - S_O(t|c)|`` past ``c`` against the Greenwood band.

    Only grid points with at least ``min_at_risk`` subjects are used. The
    band is ``band_width`` times the largest pointwise standard error over
    those points; comparing every point with its own band would flag most
    genuinely cured cohorts by multiplicity alone.
    """
    use = (pair.t > pair.k) & (pair.at_risk >= min_at_risk)
    if not use.any():
        return np.nan, np.nan, True
    gap = float(np.max(pair.gap[use]))
    band = band_width * float(np.max(pair.se[use]))
    return gap, band, gap <= band


def cure_check_report(d: Dataset, lt: LifeTable, tau_hat: float | None = None,
                      probes: Sequence[float] = DEFAULT_PROBES, grid=None,
                      min_at_risk: int = 10, band_width: float = 2.0) -> CureCheckReport:
    """Conditional-curve comparison at each probe time (and at ``tau_hat``).

    The verdict uses the largest probe that still has ``min_at_risk``
    subjects: "cure supported" when its gap stays inside the band, else
    "no statistical cure".
    """
    grid = default_grid(d) if grid is None else np.asarray(grid, dtype=float)
    times = sorted(set(float(c) for c in probes) | ({float(tau_hat)} if tau_hat is not None else set()))
    results = []
    flags = []
    for c in times:
        n_risk = int(np.count_nonzero(d.z > c)) if c > 0 else d.n
        if n_risk < min_at_risk:
            flags.append(f"probe {c:g}: only {n_risk} at risk, skipped")
            continue
        pair = conditional_curves(d, lt, c, grid)
        gap, band, ok = probe_gap(pair, min_at_risk, band_width)
        results.append(ProbeResult(c, n_risk, gap, band, ok, pair))
    evaluable = [p for p in results if np.isfinite(p.sup_gap)]
    if not evaluable:
        verdict = "undetermined"
    else:
        verdict = "cure supported" if evaluable[-1].supported else "no statistical cure"
    max_z = float(np.max(d.z))
    if tau_hat is not None and tau_hat >= max_z - 1.0:
        flags.append("cure time within 1 year of the last follow-up: estimate may be unstable")
    return CureCheckReport(results, tau_hat, max_z, verdict, flags)


# --- output -----------------------------------------------------------------------------

def write_curves_csv(path, t, columns: dict) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t"] + list(columns))
        for i, ti in enumerate(np.asarray(t, float)):
            w.writerow([repr(float(ti))] + [repr(float(np.asarray(v)[i])) for v in columns.values()])


def write_pair_csv(path, pair: ConditionalPair) -> None:
    write_curves_csv(path, pair.t, {"observed": pair.observed, "expected": pair.expected,
                                    "se": pair.se, "at_risk": pair.at_risk.astype(float)})


def plot_pair_svg(path, pair: ConditionalPair, title: str = "") -> None:
    """One observed/expected conditional survival pair as a vector graphic."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    with matplotlib.rc_context({"svg.hashsalt": "curetime", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(5, 3.5))
        ax.step(pair.t, pair.observed, where="post", label="observed S_T(t|c)")
        ax.plot(pair.t, pair.expected, "--", label="expected S_O(t|c)")
        ax.fill_between(pair.t, pair.observed - 2 * pair.se, pair.observed + 2 * pair.se,
                        step="post", alpha=0.2, linewidth=0)
        ax.set_xlabel("years since diagnosis")
        ax.set_ylabel("conditional survival")
        ax.set_ylim(0, 1.05)
        ax.set_title(title or f"c = {pair.k:g}")
        ax.legend(loc="lower left", fontsize=8)
        fig.tight_layout()
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
