import numpy as np
import pytest
from scipy.optimize import linprog

from mescore.models import Dataset
from mescore.separation import detect_separation, simplex_max
from mescore.simplex_core import DomainError
from oracles import brute_force_separated, tiny_datasets


def test_agrees_with_brute_force_search():
    datasets = tiny_datasets(50, seed=8)
    verdicts = []
    for d in datasets:
        rep = detect_separation(d)
        assert rep.separated == brute_force_separated(d)
        if rep.separated:
            assert rep.verify(d)
        verdicts.append(rep.separated)
    # the corpus exercises both outcomes
    assert any(verdicts) and not all(verdicts)


def test_agrees_with_highs_lp():
    rng = np.random.default_rng(9)
    for _ in range(60):
        n, p = int(rng.integers(8, 40)), int(rng.integers(1, 6))
        Z = rng.standard_normal((n, p))
        y = (rng.random(n) < 1 / (1 + np.exp(-2.5 * Z[:, 0]))).astype(float)
        d = Dataset.logistic(Z, y)
        k = d.X.shape[1]
        A = (2 * y - 1)[:, None] * d.X
        # max sum s  s.t.  s <= A b, 0 <= s <= 1, b free
        c = np.r_[np.zeros(k), -np.ones(n)]
        res = linprog(c, A_ub=np.hstack([-A, np.eye(n)]), b_ub=np.zeros(n),
                      bounds=[(None, None)] * k + [(0, 1)] * n, method="highs")
        rep = detect_separation(d)
        assert rep.objective_value == pytest.approx(-res.fun, abs=1e-6)
        assert rep.separated == (-res.fun > 1e-7)


def test_duplicate_rows_do_not_change_verdict():
    for d in tiny_datasets(20, seed=10):
        dd = Dataset(np.r_[d.y, d.y], np.vstack([d.X, d.X]))
        assert detect_separation(dd).separated == detect_separation(d).separated


def test_two_point_toy_is_separated():
    rep = detect_separation(Dataset.logistic(np.array([0.0, 1.0]), np.array([0.0, 1.0])))
    assert rep.separated and rep.complete


def test_quasi_complete_case():
    # tied x = 0 carries both labels; the rest split cleanly
    Z = np.array([-2.0, -1.0, 0.0, 0.0, 1.0, 2.0])
    y = np.array([0, 0, 0, 1, 1, 1.0])
    rep = detect_separation(Dataset.logistic(Z, y))
    assert rep.separated and not rep.complete


def test_overlap_is_not_separated():
    Z = np.array([-2.0, -1.0, 0.0, 1.0, 2.0, 3.0])
    y = np.array([0, 1, 0, 1, 0, 1.0])
    rep = detect_separation(Dataset.logistic(Z, y))
    assert not rep.separated
    assert np.all(rep.certificate == 0)


def test_non_binary_response_rejected():
    with pytest.raises(DomainError):
        detect_separation(Dataset.logistic(np.array([0.0, 1.0]), np.array([0.0, 2.0])))


def test_simplex_max_small_lp():
    # max x + y  s.t.  x + 2y <= 4, 3x + y <= 6
    v, obj = simplex_max([1, 1], [[1, 2], [3, 1]], [4, 6])
    np.testing.assert_allclose(v, [1.6, 1.2])
    assert obj == pytest.approx(2.8)
    with pytest.raises(ValueError):
        simplex_max([1], [[1]], [-1])
