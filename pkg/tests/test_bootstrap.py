import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from curetime.bootstrap import (CensoringModel, bootstrap, fit_censoring_model, generate_replicate,
                                parametric_bootstrap, summarize)
from curetime.optimizer import OptimizerConfig, fit
from curetime.simgen import generate_one, preset, resolve_censoring
from conftest import make_dataset

FAST = OptimizerConfig(restarts=2, scan_points=8)


@pytest.fixture(scope="module")
def s1_case(lt):
    design = resolve_censoring(preset("s1-1", n=300), lt)
    d, _ = generate_one(design, lt, [11, 0])
    return d, fit(d, lt, "weibull", FAST)


def test_point_mass_censoring():
    d = make_dataset(np.full(50, 4.2), np.zeros(50, int))
    m = fit_censoring_model(d)
    assert m.shape > 100
    assert m.median == pytest.approx(4.2, rel=0.01)


def test_exponential_censoring_rate():
    rng = np.random.default_rng(1)
    c = rng.exponential(1 / 0.3, 2000)
    t = rng.exponential(1 / 0.1, 2000)
    d = make_dataset(np.minimum(c, t), np.where(c < t, 0, 1))
    m = fit_censoring_model(d)
    assert 1 / m.scale == pytest.approx(0.3, rel=0.05)
    assert m.shape == pytest.approx(1.0, abs=0.08)


def test_no_censoring_is_degenerate():
    m = fit_censoring_model(make_dataset([1.0, 2.0, 3.0], [1, 2, 3]))
    assert m.degenerate
    assert np.all(np.isinf(m.sample(np.array([0.1, 0.9]))))


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31))
def test_replicates_respect_the_cure_time(lt, s1_case, seed):
    d, f = s1_case
    cens = fit_censoring_model(d)
    r = generate_replicate(f, cens, d, lt, seed)
    assert r.n == d.n
    np.testing.assert_array_equal(r.x, d.x)
    two = r.delta == 2
    assert np.all(r.z[two] <= f.tau[two])
    # the original data have no status 3
    assert not np.any(r.delta == 3)


def test_cure_time_limits(lt, s1_case):
    d, f = s1_case
    cens = CensoringModel(np.nan, np.nan, degenerate=True)
    early = type(f)(**{**f.__dict__, "beta": np.array([-30.0, 0, 0]), "tau": np.full(d.n, np.exp(-30.0))})
    assert not np.any(generate_replicate(early, cens, d, lt, 1).delta == 2)
    late = type(f)(**{**f.__dict__, "beta": np.array([30.0, 0, 0]), "tau": np.full(d.n, np.exp(30.0))})
    r = generate_replicate(late, cens, d, lt, 1)
    assert set(np.unique(r.delta)) <= {1, 2}
    assert np.all(generate_replicate(late, cens, d, lt, 1, p_t=1.0).delta == 3)


def _exp_mean(sample):
    return float(np.mean(sample))


def _exp_draw(stream):
    return np.random.default_rng(stream).exponential(1.0, 400)


def test_toy_standard_error():
    est, failures = parametric_bootstrap(_exp_mean, _exp_draw, 200, 0)
    assert not failures
    assert est[:, 0].std(ddof=1) == pytest.approx(1 / np.sqrt(400), rel=0.15)


def test_threads_do_not_change_results():
    a, _ = parametric_bootstrap(_exp_mean, _exp_draw, 8, 3, threads=1)
    b, _ = parametric_bootstrap(_exp_mean, _exp_draw, 8, 3, threads=2)
    assert np.array_equal(a, b)


def test_zero_spread_is_flagged():
    est, _ = parametric_bootstrap(lambda s: 1.5, lambda stream: None, 2, 0)
    res = summarize(["theta"], np.array([1.5]), est, 2, [])
    assert res.se[0] == 0.0
    assert np.isnan(res.p_normal[0]) and np.isnan(res.p_percentile[0])
    assert any("zero replicate spread" in f for f in res.flags)


def test_failures_and_reliability():
    def flaky(stream):
        if stream[-1] % 3 == 0:
            raise ValueError("boom")
        return float(stream[-1])

    est, failures = parametric_bootstrap(flaky, lambda s: s, 10, 0)
    res = summarize(["a"], np.array([1.0]), est, 10, failures)
    assert res.failed_replicates == 4 and not res.reliable
    assert any("unreliable" in f for f in res.flags)


def test_p_values():
    reps = np.array([[1.0, -1.0], [2.0, 1.0], [3.0, 2.0], [4.0, 3.0]])
    res = summarize(["a", "b"], np.array([2.5, 1.25]), reps, 4, [])
    se = reps.std(axis=0, ddof=1)
    from scipy import stats
    np.testing.assert_allclose(res.p_normal, 2 * stats.norm.sf(np.array([2.5, 1.25]) / se))
    np.testing.assert_allclose(res.p_percentile, [0.0, 0.5])


def test_b_below_two_is_rejected(lt, s1_case):
    d, f = s1_case
    with pytest.raises(ValueError):
        bootstrap(f, d, lt, B=1)


def test_bootstrap_is_deterministic(lt, s1_case):
    d, f = s1_case
    a = bootstrap(f, d, lt, B=3, seed=5, optimizer=FAST)
    b = bootstrap(f, d, lt, B=3, seed=5, optimizer=FAST)
    assert np.array_equal(a.replicates, b.replicates, equal_nan=True)
    assert a.to_dict() == b.to_dict()
    assert a.names == f.parameter_names()
