import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from curetime.data import DataError, Sex
from curetime.lifetable import (LifeTable, MAX_AGE, SubjectBackground, background_hazard,
                                background_survival, cohort_expected_survival,
                                conditional_background_survival, load_lifetable,
                                sample_background_time, write_lifetable)

SUBJ = SubjectBackground(2000, 60, Sex.FEMALE)


def test_survival_at_zero(lt):
    assert background_survival(lt, SUBJ, 0.0) == 1.0


def test_constant_hazard_closed_forms(lt_const):
    assert background_survival(lt_const, SUBJ, 10.0) == pytest.approx(np.exp(-0.1), abs=1e-12)
    assert conditional_background_survival(lt_const, SUBJ, 5.0, 3.0) == pytest.approx(np.exp(-0.02), abs=1e-12)
    assert background_hazard(lt_const, SUBJ, 7.3) == pytest.approx(0.01)


def _two_cell_table():
    h = np.full((40, MAX_AGE + 1, 2), 0.01)
    h[:, 61:, :] = 0.02
    return LifeTable(1985, h)


def test_hazard_cell_lookup_and_right_continuity():
    lt = _two_cell_table()
    assert background_hazard(lt, SUBJ, 1.5) == pytest.approx(0.02)
    assert background_hazard(lt, SUBJ, 0.999) == pytest.approx(0.01)
    assert background_hazard(lt, SUBJ, 1.0) == pytest.approx(0.02)


def test_sampling_inversion(lt_const):
    assert sample_background_time(lt_const, SUBJ, np.exp(-0.1)) == pytest.approx(10.0, abs=1e-9)
    assert sample_background_time(lt_const, SUBJ, 1.0 - 1e-15) < 1e-9


@settings(max_examples=60)
@given(st.floats(1e-6, 1 - 1e-6), st.integers(0, 100), st.integers(1985, 2017), st.sampled_from([0, 1]))
def test_sample_round_trip(lt, u, age, year, sex):
    s = SubjectBackground(year, age, Sex(sex))
    t = sample_background_time(lt, s, u)
    assert background_survival(lt, s, t) == pytest.approx(u, rel=1e-10, abs=1e-12)


def test_cohort_average(lt, lt_const):
    grid = np.array([0.0, 1.0, 4.5, 12.0])
    single = cohort_expected_survival(lt, [SUBJ], grid)
    np.testing.assert_allclose(single, [background_survival(lt, SUBJ, t) for t in grid], rtol=1e-14)
    other = SubjectBackground(1990, 75, Sex.MALE)
    pair = cohort_expected_survival(lt, [SUBJ, other], grid)
    np.testing.assert_allclose(pair, 0.5 * (single + cohort_expected_survival(lt, [other], grid)))
    np.testing.assert_allclose(cohort_expected_survival(lt_const, [SUBJ, other], grid),
                               np.exp(-0.01 * grid), rtol=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31))
def test_survival_matches_integrated_hazard(seed):
    rng = np.random.default_rng(seed)
    lt = LifeTable(1995, rng.uniform(0, 0.2, size=(10, MAX_AGE + 1, 2)))
    s = SubjectBackground(int(rng.integers(1995, 2005)), int(rng.integers(0, 90)), Sex(int(rng.integers(2))))
    t = rng.uniform(0, 30)
    cum = -np.log(background_survival(lt, s, t))
    steps = np.arange(int(np.floor(t)) + 1)
    exact = sum(background_hazard(lt, s, k + 0.5) * (min(k + 1, t) - k) for k in steps if k < t)
    assert cum == pytest.approx(exact, rel=1e-10, abs=1e-12)
    ts = np.sort(rng.uniform(0, 30, 20))
    vals = np.array([background_survival(lt, s, v) for v in ts])
    assert np.all(np.diff(vals) <= 0)


def test_table_round_trip_and_incomplete(tmp_path, lt):
    write_lifetable(lt, tmp_path / "lt.csv")
    back = load_lifetable(tmp_path / "lt.csv")
    np.testing.assert_array_equal(back.hazard, lt.hazard)
    lines = (tmp_path / "lt.csv").read_text().splitlines()
    (tmp_path / "bad.csv").write_text("\n".join(lines[:100] + lines[101:]) + "\n")
    with pytest.raises(DataError, match="incomplete"):
        load_lifetable(tmp_path / "bad.csv")


def test_probabilities_are_converted(tmp_path):
    rows = ["year,age,sex,hazard"] + [f"2000,{a},{s},0.01" for a in range(MAX_AGE + 1) for s in "MF"]
    (tmp_path / "q.csv").write_text("\n".join(rows) + "\n")
    lt = load_lifetable(tmp_path / "q.csv", probabilities=True)
    assert background_survival(lt, SUBJ, 1.0) == pytest.approx(0.99, rel=1e-12)
