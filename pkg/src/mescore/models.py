"""Model families exposing log-likelihoods, scores and score derivatives.

The score of each family is the equality constraint of the ME-score
problem; the solver also needs its Jacobian (the log-likelihood Hessian)
and, for Newton steps, the curvature of the score contracted with a
multiplier vector.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import ClassVar

import numpy as np
from scipy.special import expit, gammaln

from .simplex_core import DomainError, ShapeError, SupportGrid, build_support
from .special import digamma, lgamma, trigamma

__all__ = [
    "Dataset",
    "ScoreModel",
    "NormalModel",
    "PoissonModel",
    "GammaModel",
    "LogisticModel",
    "DegenerateSampleError",
    "digamma",
    "gamma_support_heuristic",
    "make_model",
    "FAMILIES",
]


class DegenerateSampleError(ValueError):
    """Raised when a sample carries no information for a heuristic."""


@dataclass(frozen=True)
class Dataset:
    """Observed responses and, for logistic models, a design matrix.

    ``X`` must carry a leading column of ones when present.
    """

    y: np.ndarray
    X: np.ndarray | None = None
    columns: tuple[str, ...] = field(default=())

    def __post_init__(self) -> None:
        y = np.asarray(self.y, dtype=float).ravel()
        if y.size < 1:
            raise ShapeError("dataset needs at least one observation")
        if not np.all(np.isfinite(y)):
            raise DomainError("responses must be finite")
        y.setflags(write=False)
        object.__setattr__(self, "y", y)
        if self.X is not None:
            X = np.atleast_2d(np.asarray(self.X, dtype=float))
            if X.shape[0] != y.size:
                raise ShapeError(f"X has {X.shape[0]} rows but y has {y.size} entries")
            if not np.all(np.isfinite(X)):
                raise DomainError("design matrix must be finite")
            if not np.all(X[:, 0] == 1.0):
                raise ShapeError("first column of X must be the all-ones intercept")
            X.setflags(write=False)
            object.__setattr__(self, "X", X)
            if not self.columns:
                names = ("intercept",) + tuple(f"x{j}" for j in range(1, X.shape[1]))
                object.__setattr__(self, "columns", names)
            elif len(self.columns) != X.shape[1]:
                raise ShapeError(f"{len(self.columns)} column names for {X.shape[1]} columns")

    @property
    def n(self) -> int:
        return self.y.size

    @classmethod
    def logistic(cls, predictors, y, names=None) -> Dataset:
        """Build a logistic dataset, prepending the intercept column."""
        Z = np.asarray(predictors, dtype=float)
        if Z.ndim == 1:
            Z = Z[:, None]
        X = np.column_stack([np.ones(Z.shape[0]), Z])
        cols = ("intercept",) + tuple(names) if names is not None else ()
        return cls(y=y, X=X, columns=cols)


class ScoreModel:
    """Base class for a model family bound to a dataset."""

    family: ClassVar[str] = ""
    data: Dataset

    @property
    def J(self) -> int:
        raise NotImplementedError

    @property
    def param_names(self) -> tuple[str, ...]:
        raise NotImplementedError

    def check_theta(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float).ravel()
        if theta.size != self.J:
            raise ShapeError(f"{self.family} model expects {self.J} parameters, got {theta.size}")
        if not np.all(np.isfinite(theta)):
            raise DomainError(f"parameters must be finite, got {theta}")
        return theta

    def log_likelihood(self, theta) -> float:
        raise NotImplementedError

    def score(self, theta) -> np.ndarray:
        raise NotImplementedError

    def score_jacobian(self, theta) -> np.ndarray:
        """Matrix ``dU_i / dtheta_j``, i.e. the log-likelihood Hessian."""
        raise NotImplementedError

    def score_curvature(self, theta, weights) -> np.ndarray:
        """Return ``sum_i weights[i] * Hessian(U_i)`` at ``theta``.

        The default differences the analytic Jacobian centrally.
        """
        theta = self.check_theta(theta)
        weights = np.asarray(weights, dtype=float)
        out = np.empty((self.J, self.J))
        for l in range(self.J):
            h = 1e-6 * max(1.0, abs(theta[l]))
            up, dn = theta.copy(), theta.copy()
            up[l] += h
            dn[l] -= h
            dJ = (self.score_jacobian(up) - self.score_jacobian(dn)) / (2 * h)
            # dJ[i, j] = d^2 U_i / dtheta_j dtheta_l
            out[:, l] = weights @ dJ
        return 0.5 * (out + out.T)

    def default_support(self, K: int) -> SupportGrid:
        raise NotImplementedError


@dataclass(frozen=True)
class NormalModel(ScoreModel):
    """Normal location model with known variance ``sigma0sq``."""

    data: Dataset
    sigma0sq: float = 1.0
    family: ClassVar[str] = "normal"

    def __post_init__(self) -> None:
        if not self.sigma0sq > 0:
            raise DomainError(f"sigma0sq must be positive, got {self.sigma0sq}")

    @property
    def J(self) -> int:
        return 1

    @property
    def param_names(self) -> tuple[str, ...]:
        return ("mu",)

    def log_likelihood(self, theta) -> float:
        (mu,) = self.check_theta(theta)
        r = self.data.y - mu
        return float(-0.5 * (r @ r) / self.sigma0sq)

    def score(self, theta) -> np.ndarray:
        (mu,) = self.check_theta(theta)
        return np.array([(self.data.y.sum() - self.data.n * mu) / self.sigma0sq])

    def score_jacobian(self, theta) -> np.ndarray:
        self.check_theta(theta)
        return np.array([[-self.data.n / self.sigma0sq]])

    def score_curvature(self, theta, weights) -> np.ndarray:
        return np.zeros((1, 1))

    def default_support(self, K: int) -> SupportGrid:
        y = self.data.y
        lo, hi = float(y.min()), float(y.max())
        if lo == hi:
            lo, hi = lo - 1.0, hi + 1.0
        return SupportGrid(build_support(lo, hi, K), self.param_names)


@dataclass(frozen=True)
class PoissonModel(ScoreModel):
    data: Dataset
    family: ClassVar[str] = "poisson"

    def __post_init__(self) -> None:
        y = self.data.y
        if np.any(y < 0) or np.any(y != np.round(y)):
            raise DomainError("Poisson responses must be non-negative integers")

    @property
    def J(self) -> int:
        return 1

    @property
    def param_names(self) -> tuple[str, ...]:
        return ("lambda",)

    def _lam(self, theta) -> float:
        (lam,) = self.check_theta(theta)
        if not lam > 0:
            raise DomainError(f"Poisson rate must be positive, got {lam}")
        return lam

    def log_likelihood(self, theta) -> float:
        lam = self._lam(theta)
        y = self.data.y
        return float(y.sum() * math.log(lam) - y.size * lam - gammaln(y + 1).sum())

    def score(self, theta) -> np.ndarray:
        lam = self._lam(theta)
        return np.array([-self.data.n + self.data.y.sum() / lam])

    def score_jacobian(self, theta) -> np.ndarray:
        lam = self._lam(theta)
        return np.array([[-self.data.y.sum() / lam**2]])

    def score_curvature(self, theta, weights) -> np.ndarray:
        lam = self._lam(theta)
        return np.array([[np.asarray(weights, dtype=float)[0] * 2.0 * self.data.y.sum() / lam**3]])

    def default_support(self, K: int) -> SupportGrid:
        return SupportGrid(build_support(0.0, max(float(self.data.y.max()), 1.0), K), self.param_names)


@dataclass(frozen=True)
class GammaModel(ScoreModel):
    """Gamma model with shape ``alpha`` and rate ``rho``.

    The score is returned in parameter order, ``(dl/dalpha, dl/drho)``.
    """

    data: Dataset
    delta: float = 3.0
    family: ClassVar[str] = "gamma"

    def __post_init__(self) -> None:
        if np.any(self.data.y <= 0):
            raise DomainError("Gamma responses must be strictly positive")

    @property
    def J(self) -> int:
        return 2

    @property
    def param_names(self) -> tuple[str, ...]:
        return ("alpha", "rho")

    def _params(self, theta) -> tuple[float, float]:
        a, r = self.check_theta(theta)
        if not (a > 0 and r > 0):
            raise DomainError(f"Gamma parameters must be positive, got ({a}, {r})")
        return a, r

    def log_likelihood(self, theta) -> float:
        a, r = self._params(theta)
        y = self.data.y
        n = y.size
        return float((a - 1) * np.log(y).sum() - r * y.sum() + n * a * math.log(r) - n * lgamma(a))

    def score(self, theta) -> np.ndarray:
        a, r = self._params(theta)
        y = self.data.y
        n = y.size
        return np.array(
            [
                np.log(y).sum() + n * math.log(r) - n * digamma(a),
                -y.sum() + n * a / r,
            ]
        )

    def score_jacobian(self, theta) -> np.ndarray:
        a, r = self._params(theta)
        n = self.data.n
        return np.array([[-n * trigamma(a), n / r], [n / r, -n * a / r**2]])

    def default_support(self, K: int) -> SupportGrid:
        a_up, r_up = gamma_support_heuristic(self.data.y, self.delta)
        return SupportGrid.from_bounds([(0.0, a_up), (0.0, r_up)], K, self.param_names)


@dataclass(frozen=True)
class LogisticModel(ScoreModel):
    """Binary logistic regression with logit link."""

    data: Dataset
    family: ClassVar[str] = "logistic"

    def __post_init__(self) -> None:
        if self.data.X is None:
            raise ShapeError("logistic model needs a design matrix")
        if not np.all((self.data.y == 0) | (self.data.y == 1)):
            raise DomainError("logistic responses must be 0 or 1")

    @property
    def J(self) -> int:
        return self.data.X.shape[1]

    @property
    def param_names(self) -> tuple[str, ...]:
        return self.data.columns

    def fitted(self, theta) -> np.ndarray:
        return expit(self.data.X @ self.check_theta(theta))

    def log_likelihood(self, theta) -> float:
        eta = self.data.X @ self.check_theta(theta)
        # log(1 + e^eta) evaluated stably
        return float(self.data.y @ eta - np.logaddexp(0.0, eta).sum())

    def score(self, theta) -> np.ndarray:
        return self.data.X.T @ (self.data.y - self.fitted(theta))

    def score_jacobian(self, theta) -> np.ndarray:
        pi = self.fitted(theta)
        X = self.data.X
        return -(X.T * (pi * (1 - pi))) @ X

    def score_curvature(self, theta, weights) -> np.ndarray:
        pi = self.fitted(theta)
        X = self.data.X
        c = pi * (1 - pi) * (1 - 2 * pi) * (X @ np.asarray(weights, dtype=float))
        return -(X.T * c) @ X

    def default_support(self, K: int, bound: float = 10.0) -> SupportGrid:
        return SupportGrid.symmetric(bound, K, self.J, self.param_names)


FAMILIES = {
    "normal": NormalModel,
    "poisson": PoissonModel,
    "gamma": GammaModel,
    "logistic": LogisticModel,
}


def make_model(family: str, data: Dataset, **kwargs) -> ScoreModel:
    try:
        cls = FAMILIES[family]
    except KeyError:
        raise ValueError(f"unknown family {family!r}; choose from {sorted(FAMILIES)}") from None
    return cls(data, **kwargs)


def gamma_support_heuristic(y, delta: float = 3.0) -> tuple[float, float]:
    """Upper support bounds ``(alpha_bar + delta, rho_bar + delta)`` for a Gamma sample.

    Uses the moment-type approximation ``alpha_bar = 1 / (2 M)`` with
    ``M = log(mean(y)) - mean(log(y))`` and ``rho_bar = alpha_bar / mean(y)``.
    """
    y = np.asarray(y, dtype=float).ravel()
    if y.size < 2:
        raise DegenerateSampleError("need at least two observations")
    if np.any(y <= 0):
        raise DomainError("Gamma sample must be strictly positive")
    ybar = y.mean()
    M = math.log(ybar) - np.log(y).mean()
    if not M > 1e-14:
        raise DegenerateSampleError(f"log-mean gap M = {M} is not positive (constant sample?)")
    alpha_bar = 1.0 / (2.0 * M)
    rho_bar = alpha_bar / ybar
    return alpha_bar + delta, rho_bar + delta
