"""Independent reference computations shared by the test modules."""

from itertools import combinations

import numpy as np
from scipy.linalg import null_space

from mescore.models import Dataset, GammaModel, LogisticModel, NormalModel, PoissonModel

FAMILIES = ("normal", "poisson", "gamma", "logistic")


def fd_gradient(f, theta, rel=1e-6):
    g = np.empty_like(theta)
    for j in range(theta.size):
        h = rel * max(1.0, abs(theta[j]))
        up, dn = theta.copy(), theta.copy()
        up[j] += h
        dn[j] -= h
        g[j] = (f(up) - f(dn)) / (2 * h)
    return g


def random_model(family, rng):
    n = int(rng.integers(5, 60))
    if family == "normal":
        d = Dataset(rng.normal(rng.uniform(-5, 5), 2.0, n))
        return NormalModel(d, sigma0sq=rng.uniform(0.2, 4.0)), np.array([rng.uniform(-6, 6)])
    if family == "poisson":
        d = Dataset(rng.poisson(rng.uniform(0.5, 20), n).astype(float))
        return PoissonModel(d), np.array([rng.uniform(0.3, 25)])
    if family == "gamma":
        d = Dataset(rng.gamma(rng.uniform(0.5, 5), 1 / rng.uniform(0.5, 5), n))
        return GammaModel(d), np.array([rng.uniform(0.2, 8), rng.uniform(0.2, 8)])
    p = int(rng.integers(1, 5))
    X = rng.standard_normal((n, p))
    d = Dataset.logistic(X, (rng.random(n) < 0.5).astype(float))
    return LogisticModel(d), rng.normal(0, 1.5, p + 1)


def score_fd_error(model, theta):
    """Max-abs gap between the analytic score and a central difference of
    the log-likelihood, relative to ``max(|U|, 1)``."""
    fd = fd_gradient(model.log_likelihood, theta)
    u = model.score(theta)
    return float(np.abs(fd - u).max() / max(np.abs(u).max(), 1.0))


def brute_force_separated(d: Dataset) -> bool:
    """Search the extreme rays of the cone ``{b : A b >= 0}``.

    With a full-rank design the cone is pointed, so it holds a nonzero
    direction iff it holds an extreme ray, and every extreme ray is the
    null space of k - 1 independent rows of ``A``.
    """
    A = (2 * d.y - 1)[:, None] * d.X
    k = A.shape[1]
    for rows in combinations(range(A.shape[0]), k - 1):
        N = null_space(A[list(rows)]) if rows else np.eye(k)
        if N.shape[1] != 1 and rows:
            continue
        for col in N.T:
            for b in (col, -col):
                m = A @ b
                if np.all(m >= -1e-10) and np.any(m > 1e-10):
                    return True
    return False


def tiny_datasets(count, seed):
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < count:
        n = int(rng.integers(3, 8))
        p = int(rng.integers(1, 3))
        # small integer grids make ties and quasi-complete separation common
        Z = rng.integers(-2, 3, (n, p)).astype(float)
        y = (rng.random(n) < 0.5).astype(float)
        d = Dataset.logistic(Z, y)
        if np.linalg.matrix_rank(d.X) == d.X.shape[1]:
            out.append(d)
    return out
