"""Background mortality from a calendar-year x age x sex hazard surface.

The hazard is piecewise constant on (year, integer age) cells. A subject
diagnosed in year ``y`` at age ``a`` sits in cell ``(y + k, a + k)`` during
follow-up interval ``[k, k + 1)``, so cumulative hazards and their inverse are
closed-form. Lookups outside the table clamp to the nearest year and to age
100.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .data import DataError, Sex, _SEX_CODES

MAX_AGE = 100


@dataclass(frozen=True)
class SubjectBackground:
    diag_year: int
    age_at_diag: int
    sex: Sex


@dataclass(frozen=True, eq=False)
class LifeTable:
    """Annual hazard rates ``hazard[year - first_year, age, sex]``."""

    first_year: int
    hazard: np.ndarray

    def __post_init__(self):
        h = np.array(self.hazard, dtype=float)
        if h.ndim != 3 or h.shape[1] != MAX_AGE + 1 or h.shape[2] != 2:
            raise DataError(f"hazard surface must have shape (years, 101, 2); got {h.shape}")
        if not np.all(np.isfinite(h) & (h >= 0)):
            raise DataError("hazards must be finite and non-negative")
        h.setflags(write=False)
        object.__setattr__(self, "hazard", h)

    @property
    def last_year(self) -> int:
        return self.first_year + self.hazard.shape[0] - 1

    def _paths(self, year, age, sex):
        """Per-subject hazard on each unit follow-up interval.

        Returns ``(rates, cum, K)`` with ``rates[:, k]`` the hazard on ``[k, k+1)``
        for ``k < K`` and ``rates[:, K]`` the constant hazard thereafter, and
        ``cum[:, k]`` the cumulative hazard at time ``k``.
        """
        year = np.atleast_1d(np.asarray(year, dtype=np.int64))
        age = np.atleast_1d(np.asarray(age, dtype=np.int64))
        sex = np.atleast_1d(np.asarray(sex, dtype=np.int64))
        year, age, sex = np.broadcast_arrays(year, age, sex)
        horizon = max(int(np.max(MAX_AGE - age, initial=0)),
                      int(np.max(self.last_year - year, initial=0)), 0) + 1
        k = np.arange(horizon + 1)
        yi = np.clip(year[:, None] + k - self.first_year, 0, self.hazard.shape[0] - 1)
        ai = np.clip(age[:, None] + k, 0, MAX_AGE)
        rates = self.hazard[yi, ai, sex[:, None]]
        cum = np.zeros_like(rates)
        np.cumsum(rates[:, :-1], axis=1, out=cum[:, 1:])
        return rates, cum, horizon

    def _flat(self, year, age, sex, t):
        arrs = np.broadcast_arrays(*(np.asarray(v) for v in (year, age, sex, t)))
        shape = arrs[0].shape
        year, age, sex = (a.ravel().astype(np.int64) for a in arrs[:3])
        t = arrs[3].ravel().astype(float)
        rates, cum, horizon = self._paths(year, age, sex)
        k = np.clip(np.floor(t).astype(np.int64), 0, horizon)
        return shape, rates, cum, k, t

    def hazard_at(self, year, age, sex, t) -> np.ndarray:
        """Right-continuous background hazard at follow-up time ``t``."""
        shape, rates, _, k, _ = self._flat(year, age, sex, t)
        return rates[np.arange(k.size), k].reshape(shape)

    def cumulative_hazard(self, year, age, sex, t) -> np.ndarray:
        shape, rates, cum, k, t = self._flat(year, age, sex, t)
        rows = np.arange(k.size)
        return (cum[rows, k] + rates[rows, k] * (t - k)).reshape(shape)

    def survival(self, year, age, sex, t) -> np.ndarray:
        return np.exp(-self.cumulative_hazard(year, age, sex, t))

    def sample(self, year, age, sex, u) -> np.ndarray:
        """Generalized inverse: smallest ``t`` with ``S_O(t) <= u``."""
        arrs = np.broadcast_arrays(*(np.asarray(v) for v in (year, age, sex, u)))
        shape = arrs[0].shape
        year, age, sex = (a.ravel().astype(np.int64) for a in arrs[:3])
        u = arrs[3].ravel().astype(float)
        rates, cum, horizon = self._paths(year, age, sex)
        target = -np.log(u)
        # last knot whose cumulative hazard is strictly below the target
        k = np.clip(np.sum(cum < target[:, None], axis=1) - 1, 0, horizon)
        rows = np.arange(u.size)
        with np.errstate(divide="ignore", invalid="ignore"):
            t = k + (target - cum[rows, k]) / rates[rows, k]
        t = np.where(target <= 0, 0.0, t)
        # zero tail hazard: survival never falls to u, cap at the horizon
        t = np.where(np.isfinite(t), t, float(horizon))
        return t.reshape(shape)


# --- scalar convenience wrappers --------------------------------------------

def background_hazard(lt: LifeTable, subj: SubjectBackground, t: float) -> float:
    return float(lt.hazard_at(subj.diag_year, subj.age_at_diag, int(subj.sex), float(t)))


def background_survival(lt: LifeTable, subj: SubjectBackground, t: float) -> float:
    if t < 0:
        raise ValueError("t must be non-negative")
    return float(lt.survival(subj.diag_year, subj.age_at_diag, int(subj.sex), float(t)))


def conditional_background_survival(lt: LifeTable, subj: SubjectBackground, t: float, k: float) -> float:
    """S_O(t | k) = S_O(t) / S_O(k) for t >= k."""
    h = lt.cumulative_hazard(subj.diag_year, subj.age_at_diag, int(subj.sex), np.array([t, k], dtype=float))
    return float(np.exp(-(h[0] - h[1])))


def sample_background_time(lt: LifeTable, subj: SubjectBackground, u: float) -> float:
    if not 0.0 < u < 1.0:
        raise ValueError("u must lie in (0, 1)")
    return float(lt.sample(subj.diag_year, subj.age_at_diag, int(subj.sex), u))


def cohort_expected_survival(lt: LifeTable, subjects, grid) -> np.ndarray:
    """Unweighted mean of individual background survival curves on ``grid``.

    ``subjects`` is a sequence of :class:`SubjectBackground` or a tuple of
    ``(years, ages, sexes)`` arrays.
    """
    years, ages, sexes = _unpack(subjects)
    if len(years) == 0:
        raise ValueError("empty cohort")
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    rates, cum, horizon = lt._paths(years, ages, sexes)
    k = np.clip(np.floor(grid).astype(np.int64), 0, horizon)
    h = cum[:, k] + rates[:, k] * (grid - k)
    return np.exp(-h).mean(axis=0)


def _unpack(subjects):
    if isinstance(subjects, tuple) and len(subjects) == 3 and not isinstance(subjects[0], SubjectBackground):
        years, ages, sexes = (np.atleast_1d(np.asarray(a)) for a in subjects)
        return years, ages, sexes
    subjects = list(subjects)
    return (np.array([s.diag_year for s in subjects], dtype=np.int64),
            np.array([s.age_at_diag for s in subjects], dtype=np.int64),
            np.array([int(s.sex) for s in subjects], dtype=np.int64))


def subject_survival_matrix(lt: LifeTable, years, ages, sexes, grid) -> np.ndarray:
    """Background survival of each subject (rows) on ``grid`` (columns)."""
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    rates, cum, horizon = lt._paths(years, ages, sexes)
    k = np.clip(np.floor(grid).astype(np.int64), 0, horizon)
    return np.exp(-(cum[:, k] + rates[:, k] * (grid - k)))


# --- construction -------------------------------------------------------------

def constant_lifetable(rate: float, first_year: int = 1985, last_year: int = 2017) -> LifeTable:
    n = last_year - first_year + 1
    return LifeTable(first_year, np.full((n, MAX_AGE + 1, 2), float(rate)))


def synthetic_lifetable(first_year: int = 1985, last_year: int = 2017) -> LifeTable:
    """Smooth Gompertz-Makeham rates with a mild secular decline.

    Stands in for national vital statistics in tests and simulations.
    """
    years = np.arange(first_year, last_year + 1)
    ages = np.arange(MAX_AGE + 1)
    base = 5e-4 + 2.5e-5 * np.exp(0.095 * ages)
    trend = 0.99 ** (years - first_year)
    female = base[None, :] * trend[:, None]
    male = 1.35 * female
    return LifeTable(first_year, np.stack([female, male], axis=-1))


def load_lifetable(path, probabilities: bool = False) -> LifeTable:
    """Load ``year, age, sex, hazard`` rows and check grid completeness.

    With ``probabilities=True`` the last column holds annual death
    probabilities q, converted to rates by ``-log(1 - q)``.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise DataError("empty life table")
    cells = {}
    for i, row in enumerate(rows, start=1):
        try:
            y, a = int(row["year"]), int(row["age"])
            s = _SEX_CODES[row["sex"].strip().lower()]
            v = float(row["hazard"])
        except (KeyError, ValueError, AttributeError):
            raise DataError(f"malformed life-table row {i}") from None
        if probabilities:
            if not 0 <= v < 1:
                raise DataError(f"death probability outside [0, 1), row {i}")
            v = -np.log1p(-v)
        cells[(y, a, int(s))] = v
    years = sorted({k[0] for k in cells})
    first, last = years[0], years[-1]
    h = np.full((last - first + 1, MAX_AGE + 1, 2), np.nan)
    for (y, a, s), v in cells.items():
        if not 0 <= a <= MAX_AGE:
            raise DataError(f"age {a} outside 0..{MAX_AGE}")
        h[y - first, a, s] = v
    if np.isnan(h).any():
        y, a, s = np.argwhere(np.isnan(h))[0]
        raise DataError(f"life table incomplete: missing year {first + y}, age {a}, sex {'FM'[s]}")
    return LifeTable(first, h)


def write_lifetable(lt: LifeTable, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["year", "age", "sex", "hazard"])
        for yi in range(lt.hazard.shape[0]):
            for a in range(MAX_AGE + 1):
                for s in (0, 1):
                    w.writerow([lt.first_year + yi, a, "FM"[s], repr(float(lt.hazard[yi, a, s]))])
