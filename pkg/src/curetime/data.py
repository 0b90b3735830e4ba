"""Observation records, the canonical dataset CSV, and status manipulation."""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np


class CensoringStatus(enum.IntEnum):
    CENSORED = 0
    OTHER_CAUSE = 1
    DISEASE = 2
    ANY_DEATH = 3


class Sex(enum.IntEnum):
    FEMALE = 0
    MALE = 1


_SEX_CODES = {"f": Sex.FEMALE, "female": Sex.FEMALE, "0": Sex.FEMALE,
              "m": Sex.MALE, "male": Sex.MALE, "1": Sex.MALE}


class DataError(ValueError):
    """Raised for malformed or inconsistent input records."""


@dataclass(frozen=True)
class Observation:
    z: float
    delta: CensoringStatus
    x: tuple[float, ...]
    diag_year: int
    age_at_diag: int
    sex: Sex


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    """Column-oriented, immutable collection of observations.

    ``x`` carries the intercept explicitly in column 0. ``labels`` keeps the
    raw values of categorical source columns so that data can be stratified
    after indicator expansion.
    """

    z: np.ndarray
    delta: np.ndarray
    x: np.ndarray
    diag_year: np.ndarray
    age: np.ndarray
    sex: np.ndarray
    covariate_names: tuple[str, ...]
    labels: Mapping[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.z)
        object.__setattr__(self, "z", _readonly(np.asarray(self.z, dtype=float)))
        object.__setattr__(self, "delta", _readonly(np.asarray(self.delta, dtype=np.int64)))
        x = np.asarray(self.x, dtype=float)
        if x.ndim != 2 or x.shape[0] != n:
            raise DataError(f"covariate matrix must have shape (n, p); got {x.shape}")
        object.__setattr__(self, "x", _readonly(x))
        for name in ("diag_year", "age", "sex"):
            arr = np.asarray(getattr(self, name), dtype=np.int64)
            if arr.shape != (n,):
                raise DataError(f"{name} must have length {n}")
            object.__setattr__(self, name, _readonly(arr))
        object.__setattr__(self, "covariate_names", tuple(self.covariate_names))
        if len(self.covariate_names) != x.shape[1]:
            raise DataError("covariate_names must match the number of columns of x")
        object.__setattr__(self, "labels", {k: _readonly(np.asarray(v)) for k, v in self.labels.items()})
        self._validate()

    def _validate(self):
        bad = np.flatnonzero(~(np.isfinite(self.z) & (self.z > 0)))
        if bad.size:
            raise DataError(f"non-positive time, row {bad[0] + 1}")
        bad = np.flatnonzero((self.delta < 0) | (self.delta > 3))
        if bad.size:
            raise DataError(f"invalid status {self.delta[bad[0]]}, row {bad[0] + 1}")
        if self.n and not np.all(self.x[:, 0] == 1.0):
            raise DataError("first covariate column must be the intercept (all ones)")
        bad = np.flatnonzero((self.age < 0) | (self.age > 100))
        if bad.size:
            raise DataError(f"age outside [0, 100], row {bad[0] + 1}")
        bad = np.flatnonzero((self.sex != 0) & (self.sex != 1))
        if bad.size:
            raise DataError(f"invalid sex code, row {bad[0] + 1}")

    @property
    def n(self) -> int:
        return len(self.z)

    @property
    def p(self) -> int:
        return self.x.shape[1]

    def __len__(self):
        return self.n

    @property
    def observations(self) -> list[Observation]:
        return [
            Observation(float(self.z[i]), CensoringStatus(int(self.delta[i])),
                        tuple(float(v) for v in self.x[i]), int(self.diag_year[i]),
                        int(self.age[i]), Sex(int(self.sex[i])))
            for i in range(self.n)
        ]

    @classmethod
    def from_observations(cls, observations: Sequence[Observation],
                          covariate_names: Sequence[str] | None = None) -> "Dataset":
        if not observations:
            raise DataError("no observations")
        p = len(observations[0].x)
        if any(len(o.x) != p for o in observations):
            raise DataError("all observations must share the covariate dimension")
        names = covariate_names or ["intercept"] + [f"x{j}" for j in range(1, p)]
        return cls(
            z=[o.z for o in observations],
            delta=[int(o.delta) for o in observations],
            x=[o.x for o in observations],
            diag_year=[o.diag_year for o in observations],
            age=[o.age_at_diag for o in observations],
            sex=[int(o.sex) for o in observations],
            covariate_names=names,
        )

    def replace(self, **changes) -> "Dataset":
        fields = dict(z=self.z, delta=self.delta, x=self.x, diag_year=self.diag_year,
                      age=self.age, sex=self.sex, covariate_names=self.covariate_names,
                      labels=self.labels)
        fields.update(changes)
        return Dataset(**fields)

    def subset(self, mask) -> "Dataset":
        idx = np.asarray(mask)
        return self.replace(z=self.z[idx], delta=self.delta[idx], x=self.x[idx],
                            diag_year=self.diag_year[idx], age=self.age[idx],
                            sex=self.sex[idx],
                            labels={k: v[idx] for k, v in self.labels.items()})

    def column(self, name: str) -> np.ndarray:
        """Raw label column or covariate column by name."""
        if name in self.labels:
            return self.labels[name]
        if name in self.covariate_names:
            return self.x[:, self.covariate_names.index(name)]
        raise KeyError(name)


def status_mix(d: Dataset) -> tuple[float, float, float, float]:
    """Empirical proportions (q_C, q_O, q_D, q_T) of the four status levels."""
    if d.n == 0:
        raise DataError("empty dataset")
    counts = np.bincount(d.delta, minlength=4)
    q = counts / d.n
    return float(q[0]), float(q[1]), float(q[2]), float(q[3])


class DegradeScope(str, enum.Enum):
    DISEASE_ONLY = "disease_only"
    ALL_UNCENSORED = "all_uncensored"


def degrade_status(d: Dataset, fraction: float, scope: DegradeScope | str = DegradeScope.DISEASE_ONLY,
                   seed=None) -> Dataset:
    """Recode floor(fraction * eligible) uncensored records to status 3.

    Eligible records are those with status 2 (``disease_only``) or status 1
    or 2 (``all_uncensored``). Selection is uniform without replacement.
    """
    if not 0.0 <= fraction <= 1.0:
        raise ValueError("fraction must lie in [0, 1]")
    scope = DegradeScope(scope)
    if scope is DegradeScope.DISEASE_ONLY:
        eligible = np.flatnonzero(d.delta == 2)
    else:
        eligible = np.flatnonzero((d.delta == 1) | (d.delta == 2))
    k = int(np.floor(fraction * eligible.size))
    if k == 0:
        return d
    if k == eligible.size:
        chosen = eligible
    else:
        rng = np.random.default_rng(seed)
        chosen = rng.choice(eligible, size=k, replace=False)
    delta = d.delta.copy()
    delta[chosen] = 3
    return d.replace(delta=delta)


# --- canonical CSV -------------------------------------------------------

_FIXED = ("z", "delta", "diag_year", "age", "sex")


@dataclass
class Schema:
    """Maps dataset roles to CSV column names.

    ``covariates=None`` takes every column not used by a fixed role, in file
    order. Columns listed in ``categorical`` (or any non-numeric covariate
    column) are expanded to reference-coded indicators; the mapping value is
    the reference level, ``None`` meaning the first level in sorted order.
    """

    z: str = "z"
    delta: str = "delta"
    diag_year: str = "diag_year"
    age: str = "age"
    sex: str = "sex"
    covariates: Sequence[str] | None = None
    categorical: Mapping[str, str | None] = field(default_factory=dict)


def _parse_float(value: str, row: int, name: str) -> float:
    try:
        return float(value)
    except ValueError:
        raise DataError(f"malformed value {value!r} in field {name!r}, row {row}") from None


def _parse_int(value: str, row: int, name: str) -> int:
    v = _parse_float(value, row, name)
    if v != int(v):
        raise DataError(f"non-integer value {value!r} in field {name!r}, row {row}")
    return int(v)


def _is_numeric(values: Iterable[str]) -> bool:
    try:
        for v in values:
            float(v)
    except ValueError:
        return False
    return True


def load_dataset(path, schema: Schema | None = None) -> Dataset:
    schema = schema or Schema()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = [h.strip() for h in (reader.fieldnames or [])]
        reader.fieldnames = header
        rows = list(reader)
    roles = {r: getattr(schema, r) for r in _FIXED}
    missing = [c for c in roles.values() if c not in header]
    if missing:
        raise DataError(f"missing columns: {', '.join(missing)}")
    cov_cols = list(schema.covariates) if schema.covariates is not None else [
        c for c in header if c not in roles.values()]
    missing = [c for c in cov_cols if c not in header]
    if missing:
        raise DataError(f"missing covariate columns: {', '.join(missing)}")

    z, delta, year, age, sex = [], [], [], [], []
    for i, row in enumerate(rows, start=1):
        if None in row or any(row.get(c) is None for c in header):
            raise DataError(f"malformed row {i}: wrong number of fields")
        zi = _parse_float(row[roles["z"]], i, "z")
        if not (np.isfinite(zi) and zi > 0):
            raise DataError(f"non-positive time, row {i}")
        di = _parse_int(row[roles["delta"]], i, "delta")
        if di not in (0, 1, 2, 3):
            raise DataError(f"invalid status {di}, row {i}")
        s = row[roles["sex"]].strip().lower()
        if s not in _SEX_CODES:
            raise DataError(f"malformed value {row[roles['sex']]!r} in field 'sex', row {i}")
        z.append(zi)
        delta.append(di)
        year.append(_parse_int(row[roles["diag_year"]], i, "diag_year"))
        age.append(_parse_int(row[roles["age"]], i, "age"))
        sex.append(int(_SEX_CODES[s]))

    columns = [np.ones(len(rows))]
    names = ["intercept"]
    labels = {}
    for c in cov_cols:
        raw = [row[c].strip() for row in rows]
        if c in schema.categorical or not _is_numeric(raw):
            levels = sorted(set(raw))
            ref = schema.categorical.get(c) or levels[0]
            if ref not in levels:
                raise DataError(f"reference level {ref!r} not found in column {c!r}")
            labels[c] = np.array(raw, dtype=object)
            for lev in levels:
                if lev == ref:
                    continue
                columns.append(np.array([v == lev for v in raw], dtype=float))
                names.append(f"{c}={lev}")
        else:
            columns.append(np.array([_parse_float(v, i, c) for i, v in enumerate(raw, start=1)]))
            names.append(c)
    x = np.column_stack(columns) if rows else np.ones((0, 1))
    return Dataset(z=z, delta=delta, x=x, diag_year=year, age=age, sex=sex,
                   covariate_names=names, labels=labels)


def write_dataset(d: Dataset, path) -> None:
    """Write the canonical CSV; floats use ``repr`` so reloading is exact."""
    names = list(d.covariate_names[1:])
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(_FIXED) + names)
        for i in range(d.n):
            w.writerow([repr(float(d.z[i])), int(d.delta[i]), int(d.diag_year[i]), int(d.age[i]),
                        "M" if d.sex[i] == Sex.MALE else "F"]
                       + [repr(float(v)) for v in d.x[i, 1:]])
