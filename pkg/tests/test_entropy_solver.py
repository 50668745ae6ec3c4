import math

import numpy as np
import pytest
from scipy.linalg import null_space
from scipy.optimize import minimize

from mescore.entropy_solver import (
    CONVERGED,
    INFEASIBLE,
    NoRootError,
    SolverConfig,
    kkt_report,
    solve_me_score,
    solve_normal_closed_form,
)
from mescore.datasets import normal_sample
from mescore.models import Dataset, GammaModel, LogisticModel, NormalModel, PoissonModel
from mescore.simplex_core import ShapeError, SupportGrid, build_support, entropy


def _check_simplex(est):
    P = est.weights.weights
    assert np.all(P >= 0)
    if est.converged:
        # barrier iterates stay interior
        assert np.all(P > 0)
        assert est.score_residual <= SolverConfig().constraint_tolerance
    np.testing.assert_allclose(P.sum(axis=1), 1.0, atol=1e-10)
    np.testing.assert_allclose(est.theta, np.einsum("jk,jk->j", est.support.points, P), atol=1e-12)


def _normal_case(rng):
    y = rng.normal(rng.uniform(-3, 3), rng.uniform(0.5, 3), int(rng.integers(3, 40)))
    lo, hi = y.min() - rng.uniform(0, 2), y.max() + rng.uniform(0, 2)
    if lo == hi:
        hi = lo + 1
    return y, SupportGrid(build_support(lo, hi, int(rng.integers(3, 12))))


def test_normal_me_equals_sample_mean():
    rng = np.random.default_rng(11)
    for _ in range(100):
        y, grid = _normal_case(rng)
        est = solve_me_score(NormalModel(Dataset(y), sigma0sq=rng.uniform(0.5, 2)), grid)
        assert est.status == CONVERGED
        assert est.theta[0] == pytest.approx(y.mean(), abs=1e-6)
        _check_simplex(est)


def test_poisson_me_equals_sample_mean():
    rng = np.random.default_rng(12)
    done = 0
    while done < 100:
        y = rng.poisson(rng.uniform(0.5, 15), int(rng.integers(3, 40))).astype(float)
        if y.sum() == 0:
            continue
        grid = SupportGrid(build_support(0.0, y.max() + rng.uniform(0.5, 10), int(rng.integers(3, 12))))
        est = solve_me_score(PoissonModel(Dataset(y)), grid)
        assert est.status == CONVERGED
        assert est.theta[0] == pytest.approx(y.mean(), abs=1e-6)
        _check_simplex(est)
        done += 1


def test_nlp_matches_closed_form():
    rng = np.random.default_rng(13)
    for _ in range(25):
        y, grid = _normal_case(rng)
        s2 = rng.uniform(0.5, 2)
        cf, lam1 = solve_normal_closed_form(y, grid.points[0], s2)
        est = solve_me_score(NormalModel(Dataset(y), sigma0sq=s2), grid)
        np.testing.assert_allclose(est.weights.weights, cf.weights.weights, atol=1e-7)
        # the score multiplier carries the same tilt as the closed form
        assert est.score_multipliers[0] == pytest.approx(lam1, abs=1e-5 * max(1, abs(lam1)))


def test_entropy_dominates_other_feasible_weights():
    rng = np.random.default_rng(14)
    for _ in range(30):
        y, grid = _normal_case(rng)
        est = solve_me_score(NormalModel(Dataset(y)), grid)
        p = est.weights.weights[0]
        z = grid.points[0]
        # directions preserving both the mean and the total mass
        N = null_space(np.vstack([z, np.ones_like(z)]))
        for _ in range(20):
            d = N @ rng.standard_normal(N.shape[1])
            neg = d < 0
            tmax = np.min(-p[neg] / d[neg]) if neg.any() else 1.0
            q = p + rng.uniform(0, 1) * tmax * d
            q = np.clip(q, 0, None)
            assert entropy(q[None, :]) <= est.entropy_value + 1e-9


def test_uniform_weights_when_midpoint_is_the_root():
    y = np.array([1.0, 3.0, 2.0, 2.0])
    est = solve_me_score(NormalModel(Dataset(y)), SupportGrid(build_support(0.0, 4.0, 5)))
    np.testing.assert_allclose(est.weights.weights, 0.2, atol=1e-8)
    assert est.entropy_value == pytest.approx(math.log(5), abs=1e-10)


def test_gamma_me_matches_mle():
    rng = np.random.default_rng(15)
    for _ in range(10):
        y = rng.gamma(rng.uniform(1, 4), 1 / rng.uniform(1, 4), 30)
        model = GammaModel(Dataset(y))
        est = solve_me_score(model, model.default_support(5))
        res = minimize(
            lambda t: -model.log_likelihood(np.exp(t)), np.zeros(2), method="Nelder-Mead",
            options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 5000},
        )
        mle = np.exp(res.x)
        if np.all(model.default_support(5).contains(mle)):
            assert est.status == CONVERGED
            np.testing.assert_allclose(est.theta, mle, rtol=1e-5)


def test_kkt_residuals_small_at_convergence():
    rng = np.random.default_rng(16)
    for _ in range(10):
        n = 40
        X = rng.standard_normal((n, 2))
        y = (rng.random(n) < 1 / (1 + np.exp(-X @ np.array([0.8, -0.5])))).astype(float)
        model = LogisticModel(Dataset.logistic(X, y))
        est = solve_me_score(model, model.default_support(7))
        if est.status != CONVERGED:
            continue
        rep = kkt_report(est, model)
        assert rep.score_residual < 1e-7
        assert rep.normalization_residual < 1e-10
        assert rep.stationarity_residual < 1e-5
        assert est.kkt_residual == pytest.approx(rep.max_residual)


def test_root_outside_hull_is_reported_not_raised():
    y = np.array([5.0, 6.0, 7.0])
    grid = SupportGrid(build_support(0.0, 4.0, 5))
    est = solve_me_score(NormalModel(Dataset(y)), grid)
    assert est.status == INFEASIBLE and not est.converged
    assert est.score_residual > 1.0
    _check_simplex(est)
    with pytest.raises(NoRootError):
        solve_normal_closed_form(y, grid.points[0])


def test_deterministic_reruns():
    rng = np.random.default_rng(17)
    X = rng.standard_normal((30, 3))
    y = (rng.random(30) < 0.5).astype(float)
    model = LogisticModel(Dataset.logistic(X, y))
    a = solve_me_score(model, model.default_support(7))
    b = solve_me_score(model, model.default_support(7))
    assert a.theta.tobytes() == b.theta.tobytes()
    assert a.weights.weights.tobytes() == b.weights.weights.tobytes()


def test_grid_shape_mismatch():
    model = GammaModel(Dataset(np.array([1.0, 2.0, 3.0])))
    with pytest.raises(ShapeError):
        solve_me_score(model, SupportGrid(build_support(0, 5, 5)))


def test_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(penalty_growth=1.0)
    with pytest.raises(ValueError):
        SolverConfig(constraint_tolerance=0.0)


def test_max_iterations_status():
    y = np.array([1.0, 2.0, 3.5])
    est = solve_me_score(
        NormalModel(Dataset(y)), SupportGrid(build_support(0.0, 4.0, 5)), SolverConfig(max_outer_iterations=1)
    )
    assert est.status == "max_iterations" and not est.converged
    _check_simplex(est)


def test_bundled_normal_closed_form_agrees_with_solver():
    d = normal_sample()
    model = NormalModel(d)
    grid = model.default_support(7)
    cf, _ = solve_normal_closed_form(d.y, grid.points[0])
    est = solve_me_score(model, grid)
    assert est.theta[0] == pytest.approx(cf.theta[0], abs=1e-6)
    np.testing.assert_allclose(est.weights.weights, cf.weights.weights, atol=1e-4)
    _check_simplex(est)


def test_closed_form_symmetric_midpoint():
    est, lam1 = solve_normal_closed_form([2.0, 4.0], [1, 2, 3, 4, 5])
    assert lam1 == pytest.approx(0.0, abs=1e-12)
    assert est.theta[0] == pytest.approx(3.0)
    np.testing.assert_allclose(est.weights.weights, 0.2, atol=1e-12)


def test_kkt_report_hand_cases():
    from dataclasses import replace

    from mescore.simplex_core import uniform_weights

    y = np.array([1.0, 2.0, 6.0, 3.0])
    model = PoissonModel(Dataset(y))
    grid = SupportGrid(build_support(0.0, 10.0, 5))
    est = solve_me_score(model, grid)
    assert est.status == CONVERGED
    rep = kkt_report(est, model)
    assert max(rep.score_residual, rep.normalization_residual, rep.stationarity_residual) < 1e-6
    # uniform weights put theta at the grid mean 5, not at the sample mean 3
    flat = replace(est, weights=uniform_weights(1, 5), theta=np.array([5.0]))
    assert kkt_report(flat, model).score_residual == pytest.approx(abs(-4 + 12 / 5))
    # J = 1, K = 2 with the constraint met exactly
    two = SupportGrid(np.array([[2.0, 4.0]]))
    exact = replace(est, weights=uniform_weights(1, 2), theta=np.array([3.0]), support=two)
    assert kkt_report(exact, model).score_residual == 0.0
