import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from curetime.nonparam import (conditional_curves, crs_cure_time, crs_from_curve,
                               cure_check_report, default_grid, kaplan_meier, plot_pair_svg,
                               relative_survival, write_pair_csv)
from cohorts import cured_cohort
from conftest import make_dataset


def crs_oracle(grid, rs, threshold):
    for i in range(len(grid) - 1):
        if rs[i] <= 0:
            continue
        if all(rs[j] / rs[i] > threshold for j in range(i, len(grid))):
            return float(grid[i])
    return None


def test_km_hand_cases():
    km = kaplan_meier(make_dataset([1, 2, 3], [1, 1, 1]))
    np.testing.assert_allclose(km([1, 2, 3]), [2 / 3, 1 / 3, 0])
    km = kaplan_meier(make_dataset([1, 2, 3], [1, 0, 1]))
    np.testing.assert_allclose(km([1, 2.5, 3]), [2 / 3, 2 / 3, 0])
    km = kaplan_meier(make_dataset([1, 2, 3], [0, 0, 0]))
    np.testing.assert_array_equal(km([0.5, 5.0]), [1.0, 1.0])


@given(st.lists(st.floats(0.01, 100), min_size=1, max_size=40), st.floats(0, 120))
def test_km_without_censoring_is_empirical(zs, t):
    z = np.asarray(zs)
    km = kaplan_meier(make_dataset(z, np.ones(z.size, int)))
    assert float(km(t)) == pytest.approx(np.mean(z > t), abs=1e-12)


def test_relative_survival_null_excess(lt):
    d, *_ = cured_cohort(lt, 5000, 0.0, 1, excess=False)
    rs = relative_survival(d, lt, np.arange(0, 20.5, 1.0))
    assert np.all(np.abs(rs.value - 1) <= 3 * rs.se + 1e-12)


def test_relative_survival_flat_after_tau(lt):
    d, D, _ = cured_cohort(lt, 20000, 4.0, 2)
    rs = relative_survival(d, lt, np.arange(4.0, 12.01, 0.5))
    base = rs.value[0]
    assert np.all(np.abs(rs.value - base) <= 3 * np.hypot(rs.se, rs.se[0]))


def test_relative_survival_single_event(lt):
    rs = relative_survival(make_dataset([0.5], [2]), lt, [0.0, 0.4, 0.6, 2.0])
    np.testing.assert_allclose(rs.value[2:], 0.0)


def test_conditional_identities(lt):
    d, *_ = cured_cohort(lt, 500, 3.0, 3)
    grid = default_grid(d, 0.5)
    pair0 = conditional_curves(d, lt, 0.0, grid)
    rs = relative_survival(d, lt, grid)
    km = kaplan_meier(d)
    np.testing.assert_array_equal(pair0.observed, km(grid))
    np.testing.assert_allclose(pair0.observed / pair0.expected, rs.value, rtol=1e-12)
    pair = conditional_curves(d, lt, 2.3, grid)
    assert pair.t[0] == 2.3 and pair.observed[0] == 1.0 and pair.expected[0] == 1.0


def test_conditional_gap_after_cure(lt):
    d, *_ = cured_cohort(lt, 20000, 5.0, 4)
    pair = conditional_curves(d, lt, 10.0, np.arange(10.0, 19.01, 0.25))
    assert np.max(pair.gap[1:]) <= 2 * np.max(pair.se[1:])


def test_conditional_errors(lt):
    d = make_dataset([1.0, 2.0], [1, 1])
    with pytest.raises(ValueError):
        conditional_curves(d, lt, 5.0)


def test_crs_examples():
    grid = np.arange(0, 5.01, 0.5)
    assert crs_from_curve(grid, np.ones(grid.size)) == 0.0
    assert crs_from_curve(grid, np.linspace(1, 0, grid.size)) is None
    step = np.where(grid < 2, 1.0, 0.9)
    assert crs_from_curve(grid, step, 0.95) == 2.0
    assert crs_oracle(grid, step, 0.95) == 2.0


@settings(max_examples=200)
@given(st.lists(st.floats(0, 1.2, allow_subnormal=False), min_size=1, max_size=30), st.sampled_from([0.95, 0.99, 0.8]))
def test_crs_matches_double_loop(values, threshold):
    rs = np.asarray(values)
    grid = np.arange(rs.size) * 0.25
    assert crs_from_curve(grid, rs, threshold) == crs_oracle(grid, rs, threshold)


def test_crs_on_cured_cohort(lt):
    d, *_ = cured_cohort(lt, 20000, 4.0, 5)
    k = crs_cure_time(d, lt, 0.95, np.arange(0, 20.01, 0.5))
    assert k is not None and 1.0 <= k <= 6.0


def test_cure_check_verdicts(lt):
    cured, *_ = cured_cohort(lt, 5000, 4.0, 6)
    rep = cure_check_report(cured, lt, tau_hat=4.0)
    assert rep.verdict == "cure supported"
    never, *_ = cured_cohort(lt, 5000, np.inf, 7, scale=8.0)
    assert cure_check_report(never, lt).verdict == "no statistical cure"
    null, *_ = cured_cohort(lt, 3000, 0.0, 8, excess=False)
    rep = cure_check_report(null, lt, probes=[0.0])
    assert rep.verdict == "cure supported" and rep.probes[0].c == 0.0


def test_cure_check_follow_up_flag(lt):
    d, *_ = cured_cohort(lt, 500, 4.0, 9)
    rep = cure_check_report(d, lt, tau_hat=float(d.z.max()) - 0.5)
    assert any("within 1 year" in f for f in rep.flags)


def test_cure_check_skips_empty_probe(lt):
    d, *_ = cured_cohort(lt, 200, 4.0, 10, follow=8.0)
    rep = cure_check_report(d, lt, probes=[1.0, 50.0])
    assert [p.c for p in rep.probes] == [1.0]
    assert any("probe 50" in f for f in rep.flags)


def test_svg_and_csv_are_reproducible(lt, tmp_path):
    d, *_ = cured_cohort(lt, 300, 3.0, 11)
    pair = conditional_curves(d, lt, 1.0, default_grid(d, 0.5))
    for name in ("a", "b"):
        plot_pair_svg(tmp_path / f"{name}.svg", pair)
        write_pair_csv(tmp_path / f"{name}.csv", pair)
    assert (tmp_path / "a.svg").read_bytes() == (tmp_path / "b.svg").read_bytes()
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert b"<svg" in (tmp_path / "a.svg").read_bytes()
