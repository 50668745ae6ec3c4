import numpy as np
import pytest
from scipy.optimize import minimize

from mescore.baselines import (
    FitConfig,
    RankError,
    firth_score,
    fit_logistic_firth,
    fit_logistic_nr,
    hat_diagonal,
)
from mescore.models import Dataset


def _random_data(rng, n=60, p=2, beta=None):
    X = rng.standard_normal((n, p))
    beta = np.r_[0.3, rng.normal(0, 1, p)] if beta is None else beta
    eta = beta[0] + X @ beta[1:]
    y = (rng.random(n) < 1 / (1 + np.exp(-eta))).astype(float)
    return Dataset.logistic(X, y)


def _neg_penalized(beta, X, y):
    # independent form: Jeffreys-prior penalized log-likelihood
    eta = X @ beta
    pi = 1 / (1 + np.exp(-eta))
    ll = np.sum(y * eta - np.log1p(np.exp(eta)))
    _, logdet = np.linalg.slogdet(X.T @ np.diag(pi * (1 - pi)) @ X)
    return -(ll + 0.5 * logdet)


def test_nr_matches_direct_likelihood_maximization():
    rng = np.random.default_rng(1)
    for _ in range(20):
        d = _random_data(rng)
        fit = fit_logistic_nr(d)
        assert fit.converged and not fit.diverged
        nll = lambda b: -np.sum(d.y * (d.X @ b) - np.logaddexp(0, d.X @ b))
        ref = minimize(nll, np.zeros(3), method="BFGS", options={"gtol": 1e-10}).x
        np.testing.assert_allclose(fit.beta, ref, atol=1e-5)


def test_firth_matches_penalized_likelihood_optimum():
    rng = np.random.default_rng(2)
    for _ in range(20):
        d = _random_data(rng, n=int(rng.integers(15, 60)))
        fit = fit_logistic_firth(d)
        assert fit.converged
        ref = minimize(_neg_penalized, np.zeros(3), args=(d.X, d.y), method="Nelder-Mead",
                       options={"xatol": 1e-10, "fatol": 1e-13, "maxiter": 20000}).x
        np.testing.assert_allclose(fit.beta, ref, atol=1e-4)
        assert np.abs(firth_score(d.X, d.y, fit.beta)).max() < 1e-8


def test_firth_finite_under_separation():
    X = np.array([[-2.0], [-1.0], [-0.5], [0.5], [1.0], [2.0]])
    d = Dataset.logistic(X, np.array([0, 0, 0, 1, 1, 1.0]))
    nr = fit_logistic_nr(d)
    assert nr.diverged and not nr.converged
    firth = fit_logistic_firth(d)
    assert firth.converged and np.all(np.abs(firth.beta) < 20)


def test_hat_diagonal_properties():
    rng = np.random.default_rng(3)
    X = np.column_stack([np.ones(25), rng.standard_normal((25, 3))])
    w = rng.uniform(0.05, 0.25, 25)
    h = hat_diagonal(X, w)
    Wh = np.sqrt(w)[:, None] * X
    H = Wh @ np.linalg.inv(Wh.T @ Wh) @ Wh.T
    np.testing.assert_allclose(h, np.diag(H), atol=1e-12)
    assert h.sum() == pytest.approx(4.0)
    assert np.all((h > 0) & (h < 1))
    with pytest.raises(ValueError):
        hat_diagonal(X, w[:-1])


def test_row_permutation_invariance():
    rng = np.random.default_rng(4)
    d = _random_data(rng, n=40)
    perm = rng.permutation(40)
    dp = Dataset(d.y[perm], d.X[perm])
    for fit in (fit_logistic_nr, fit_logistic_firth):
        np.testing.assert_allclose(fit(d).beta, fit(dp).beta, atol=1e-10)


def test_rank_deficient_design():
    X = np.column_stack([np.arange(6.0), 2 * np.arange(6.0)])
    d = Dataset.logistic(X, np.array([0, 1, 0, 1, 1, 0.0]))
    with pytest.raises(RankError):
        fit_logistic_nr(d)
    with pytest.raises(RankError):
        fit_logistic_firth(d)


def test_iteration_cap_reports_nonconvergence():
    rng = np.random.default_rng(5)
    d = _random_data(rng)
    fit = fit_logistic_nr(d, FitConfig(max_iter=1))
    assert not fit.converged and not fit.diverged and fit.iterations == 1


def test_as_dict_round_trip_fields():
    rng = np.random.default_rng(6)
    rec = fit_logistic_firth(_random_data(rng)).as_dict()
    assert rec["method"] == "nrf" and len(rec["beta"]) == 3
