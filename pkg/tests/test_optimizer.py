import numpy as np
import pytest
from scipy import optimize

from curetime.core import CtmProblem, beta_value_grad, objective_value
from curetime.data import DataError
from curetime.lifetable import constant_lifetable
from curetime.optimizer import (ConstraintSet, CtmFit, OptimizerConfig, fit, fit_alpha, fit_beta,
                                gradient_ascent, grid_search_tau, project_direction, sigma_schedule)
from conftest import make_dataset

FAST = OptimizerConfig(restarts=4, scan_points=10)


def cure_cohort(n, tau, seed, rate=1.0, follow=6.0, x=None, lt_rate=0.01):
    """Exponential excess deaths switched off after ``tau``; uniform censoring."""
    rng = np.random.default_rng(seed)
    D = rng.exponential(1 / rate, n)
    O = rng.exponential(1 / lt_rate, n)
    T = np.where(D <= tau, np.minimum(O, D), O)
    C = rng.uniform(0.5 * follow, follow, n)
    z = np.minimum(T, C)
    delta = np.where(C < T, 0, np.where((T == D) & (D <= tau), 2, 1))
    return make_dataset(z, delta, x)


def test_gradient_ascent_on_quadratic():
    A = np.array([[3.0, 0.5], [0.5, 1.0]])
    c = np.array([1.0, -2.0])
    fg = lambda x: (float(-0.5 * x @ A @ x + c @ x), c - A @ x)
    res = gradient_ascent(fg, np.zeros(2), OptimizerConfig(tol_grad=1e-11, tol_obj=1e-14, tol_param=1e-12))
    np.testing.assert_allclose(res.x, np.linalg.solve(A, c), atol=1e-9)
    assert np.all(np.diff(res.trace) >= 0)
    again = gradient_ascent(fg, np.linalg.solve(A, c), OptimizerConfig())
    assert again.iterations == 0 and again.converged


def test_nonfinite_start_rejected():
    with pytest.raises(FloatingPointError):
        gradient_ascent(lambda x: (-np.inf, x), np.zeros(1), OptimizerConfig())


def test_alpha_recovers_censored_weibull_mle(lt_const):
    rng = np.random.default_rng(5)
    n = 2000
    t = rng.exponential(2.0, n)
    c = rng.uniform(0, 6, n)
    z, ev = np.minimum(t, c), t <= c
    d = make_dataset(z, np.where(ev, 2, 0))
    prob = CtmProblem.build(d, lt_const, "weibull", kappa=0.0)
    res = fit_alpha(prob, np.zeros(2), np.array([np.log(z.max()) + 30]))

    def nll(a):
        k, lam = np.exp(a)
        u = (z / lam) ** k
        return -np.sum(ev * (np.log(k / lam) + (k - 1) * np.log(z / lam)) - u)

    ref = optimize.minimize(nll, np.zeros(2), method="Nelder-Mead",
                            options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 10000}).x
    np.testing.assert_allclose(res.x, ref, atol=1e-4)
    assert np.all(np.diff(res.trace) >= 0)


def test_projection_examples():
    g = np.array([1.0, 1.0])
    assert np.array_equal(project_direction(g, np.zeros((0, 2))).direction, g)
    np.testing.assert_allclose(project_direction(g, [[1.0, 0.0]]).direction, [0.0, 1.0], atol=1e-15)
    g = np.array([0.0, 2.5, -1.0])
    np.testing.assert_allclose(project_direction(g, [[1.0, 0.0, 0.0]]).direction, g, atol=1e-12)


def test_projection_drops_row_with_negative_multiplier():
    # gradient points into the interior of the only active constraint
    p = project_direction(np.array([1.0, 0.0]), [[1.0, 0.0]])
    assert p.dropped == [0]
    np.testing.assert_allclose(p.direction, [1.0, 0.0])


def test_projection_handles_dependent_rows():
    p = project_direction(np.array([1.0, 1.0, 1.0]), [[0, 0, 1.0], [0, 0, 2.0], [0, 1.0, 0]])
    np.testing.assert_allclose(p.direction, [1.0, 0.0, 0.0], atol=1e-12)


def test_fit_beta_without_constraints(lt):
    d = cure_cohort(300, 1.5, 1)
    d = d.replace(delta=np.where(d.delta == 2, 1, d.delta))
    prob = CtmProblem.build(d, lt, "weibull")
    res = fit_beta(prob, np.zeros(2), np.array([0.5]))
    assert res.converged
    g = beta_value_grad(prob, np.zeros(2), res.x)[1]
    assert abs(g[0]) <= 1e-6 * (1 + abs(res.value))


def test_fit_beta_binding_constraint(lt):
    x = np.column_stack([np.ones(200), np.random.default_rng(2).normal(0, 0.5, 200)])
    d = cure_cohort(200, 1.0, 2, x=x)
    prob = CtmProblem.build(d, lt, "weibull")
    alpha = np.array([0.0, 0.0, 0.0, 0.0])
    res = fit_beta(prob, alpha, np.array([2.0, 0.0]))
    cons = ConstraintSet.from_problem(prob)
    slack = cons.slack(res.x)
    assert slack.min() >= -1e-9
    assert slack.min() <= 1e-9
    proj = project_direction(beta_value_grad(prob, alpha, res.x)[1], cons.A[cons.active(res.x)])
    assert np.max(np.abs(proj.direction)) <= 1e-6 * (1 + abs(res.value))


def test_sigma_schedule(lt):
    prob = CtmProblem.build(cure_cohort(100, 1.0, 3), lt, "weibull")
    s = sigma_schedule(prob, OptimizerConfig())
    np.testing.assert_allclose(s, prob.sigma_n * np.array([64, 16, 4, 1]))


def test_fit_is_feasible_deterministic_and_monotone(lt):
    x = np.column_stack([np.ones(400), np.random.default_rng(4).normal(0, 0.5, 400)])
    d = cure_cohort(400, 2.0, 4, x=x)
    a = fit(d, lt, "weibull", FAST)
    b = fit(d, lt, "weibull", FAST)
    assert a.converged
    assert np.array_equal(a.theta, b.theta)
    logz = np.log(d.z[d.delta == 2])
    assert np.all(logz <= d.x[d.delta == 2] @ a.beta + 1e-9)
    halves = [v for t in a.trace for v in (t["alpha_half"], t["beta_half"])]
    assert np.all(np.diff(halves[1:]) >= -1e-9 * (1 + abs(halves[-1])))
    assert a.penalized_loglik == pytest.approx(
        objective_value(CtmProblem.build(d, lt, "weibull"), a.alpha, a.beta), rel=1e-12)


def test_followup_flag(lt):
    # deaths keep coming up to the end of follow-up: the cure time is pushed to the last death
    d = cure_cohort(300, 50.0, 6, follow=5.0)
    f = fit(d, lt, "weibull", FAST)
    assert f.followup_limited


def test_fit_round_trips_through_dict(lt):
    f = fit(cure_cohort(200, 1.5, 7), lt, "loglogistic", FAST)
    g = CtmFit.from_dict(f.to_dict())
    assert np.array_equal(g.theta, f.theta)
    assert g.to_dict() == f.to_dict()
    assert f.parameter_names() == ["alpha1[intercept]", "alpha2[intercept]", "beta[intercept]"]


def test_no_events_is_rejected(lt):
    with pytest.raises(DataError):
        fit(make_dataset([1.0, 2.0, 3.0], [0, 0, 0]), lt)


def test_grid_recovers_generator_cure_time():
    lt = constant_lifetable(0.01)
    d = cure_cohort(3000, 1.0, 8, rate=2.0)
    cfg = OptimizerConfig(grid_min=0.5, grid_max=2.0, grid_points=151)
    res = grid_search_tau(d, lt, "weibull", cfg)
    assert abs(res.tau - 1.0) <= 0.01
    below = res.taus < d.z[d.delta == 2].max()
    assert np.all(np.isneginf(res.profile[below]))


def test_grid_single_feasible_point(lt):
    d = cure_cohort(200, 1.0, 9)
    zmax = d.z[d.delta == 2].max()
    res = grid_search_tau(d, lt, "weibull", OptimizerConfig(grid_min=zmax, grid_max=zmax, grid_points=1))
    assert res.tau == zmax


def test_grid_agrees_with_fit(lt):
    d = cure_cohort(300, 1.5, 10)
    cfg = OptimizerConfig()
    g = grid_search_tau(d, lt, "weibull", cfg)
    f = fit(d, lt, "weibull", cfg)
    step = (d.z.max() * 1.2 - d.z.min() * 1.01) / (cfg.grid_points - 1) / cfg.grid_refine
    assert abs(g.tau - float(f.tau[0])) <= step + 1e-12


def test_config_file(tmp_path):
    p = tmp_path / "opt.cfg"
    p.write_text("# tuning\nrestarts = 3\ntol_obj=1e-8\ngrid_min = none\n")
    cfg = OptimizerConfig.from_file(p)
    assert cfg.restarts == 3 and cfg.tol_obj == 1e-8 and cfg.grid_min is None
    p.write_text("bogus = 1\n")
    with pytest.raises(KeyError):
        OptimizerConfig.from_file(p)
    with pytest.raises(ValueError):
        OptimizerConfig(backtrack=1.5)
