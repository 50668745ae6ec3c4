"""Newton-Raphson and Firth-corrected Newton-Raphson for logistic regression."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve
from scipy.special import expit

from .models import Dataset

__all__ = [
    "RankError",
    "FitConfig",
    "FitResult",
    "fit_logistic_nr",
    "fit_logistic_firth",
    "hat_diagonal",
    "firth_score",
]

SATURATION = 1e-12


class RankError(np.linalg.LinAlgError):
    """Design matrix (or weighted cross-product) is not full column rank."""


@dataclass(frozen=True)
class FitConfig:
    """Stopping rules shared by both Newton-Raphson variants.

    A fit converges when the max-abs (modified) score drops below ``tol``
    and the last Newton step is below ``step_tol`` relative to the
    coefficient scale. Both conditions are needed: on separated data the
    score vanishes numerically while the coefficients keep growing.
    """

    max_iter: int = 100
    tol: float = 1e-8
    step_tol: float = 1e-6
    divergence_threshold: float = 1e3
    max_halvings: int = 20
    max_stepsize: float = 5.0


@dataclass(frozen=True)
class FitResult:
    beta: np.ndarray
    converged: bool
    iterations: int
    max_abs_score: float
    diverged: bool
    method: str = "nr"

    def as_dict(self) -> dict:
        return {
            "method": self.method,
            "beta": self.beta.tolist(),
            "converged": self.converged,
            "diverged": self.diverged,
            "iterations": self.iterations,
            "max_abs_score": self.max_abs_score,
        }


def _design(d: Dataset) -> tuple[np.ndarray, np.ndarray]:
    if d.X is None:
        raise ValueError("logistic fit needs a design matrix")
    X, y = d.X, d.y
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("logistic responses must be 0 or 1")
    if np.linalg.matrix_rank(X) < X.shape[1]:
        raise RankError(f"design matrix of shape {X.shape} is rank deficient")
    return X, y


def _chol(A: np.ndarray):
    try:
        return cho_factor(A, lower=False, check_finite=False)
    except LinAlgError as exc:
        raise RankError("weighted cross-product X'WX is not positive definite") from exc


def hat_diagonal(X, w) -> np.ndarray:
    """Leverages ``h_i = w_i x_i' (X' W X)^{-1} x_i``."""
    X = np.asarray(X, dtype=float)
    w = np.asarray(w, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if w.shape != (X.shape[0],):
        raise ValueError(f"weights of shape {w.shape} do not match {X.shape[0]} rows")
    cf = _chol((X.T * w) @ X)
    return w * np.einsum("ij,ji->i", X, cho_solve(cf, X.T, check_finite=False))


def firth_score(X, y, beta) -> np.ndarray:
    """Modified score ``X'(y - pi + h * (1/2 - pi))``."""
    pi = expit(X @ beta)
    h = hat_diagonal(X, pi * (1 - pi))
    return X.T @ (y - pi + h * (0.5 - pi))


def _saturated(y: np.ndarray, pi: np.ndarray) -> bool:
    """True when every fitted probability of some class sits at its label."""
    ones, zeros = y == 1, y == 0
    return bool(
        (ones.any() and np.all(pi[ones] > 1 - SATURATION))
        or (zeros.any() and np.all(pi[zeros] < SATURATION))
    )


def fit_logistic_nr(d: Dataset, cfg: FitConfig | None = None) -> FitResult:
    """Maximum-likelihood logistic fit by IRLS from ``beta = 0``.

    Separation shows up as ``diverged=True`` (coefficients past the
    threshold, saturated fitted probabilities, or a singular weighted
    cross-product) or as ``converged=False`` at the iteration cap.
    """
    cfg = cfg or FitConfig()
    X, y = _design(d)
    beta = np.zeros(X.shape[1])
    it = 0
    score = X.T @ (y - 0.5)
    for it in range(1, cfg.max_iter + 1):
        pi = expit(X @ beta)
        w = pi * (1 - pi)
        score = X.T @ (y - pi)
        try:
            step = cho_solve(_chol((X.T * w) @ X), score, check_finite=False)
        except RankError:
            return FitResult(beta, False, it, float(np.abs(score).max()), True, "nr")
        beta = beta + step
        pi = expit(X @ beta)
        score = X.T @ (y - pi)
        if np.abs(beta).max() > cfg.divergence_threshold or _saturated(y, pi):
            return FitResult(beta, False, it, float(np.abs(score).max()), True, "nr")
        small_step = np.abs(step).max() <= cfg.step_tol * max(1.0, np.abs(beta).max())
        if np.abs(score).max() < cfg.tol and small_step:
            return FitResult(beta, True, it, float(np.abs(score).max()), False, "nr")
    return FitResult(beta, False, it, float(np.abs(score).max()), False, "nr")


def _penalized_loglik(X, y, beta) -> float:
    eta = X @ beta
    pi = expit(eta)
    w = pi * (1 - pi)
    try:
        cf = cho_factor((X.T * w) @ X, lower=False, check_finite=False)
    except LinAlgError:
        return -np.inf
    logdet = 2.0 * np.log(np.abs(np.diag(cf[0]))).sum()
    return float(y @ eta - np.logaddexp(0.0, eta).sum() + 0.5 * logdet)


def _firth_hessian(X, pi, cf) -> np.ndarray:
    """Exact Hessian of ``l(beta) + log|X'WX| / 2`` at fitted ``pi``."""
    w = pi * (1 - pi)
    w1 = w * (1 - 2 * pi)
    w2 = w * (1 - 6 * pi + 6 * pi**2)
    Qm = X @ cho_solve(cf, X.T, check_finite=False)
    A = X * w1[:, None]
    curv = (X.T * (w2 * np.diag(Qm))) @ X - A.T @ (Qm * Qm) @ A
    return -(X.T * w) @ X + 0.5 * curv


def fit_logistic_firth(d: Dataset, cfg: FitConfig | None = None) -> FitResult:
    """Firth bias-reduced logistic fit.

    Solves the modified score ``U*(beta) = 0``, which is the gradient of the
    penalized log-likelihood ``l(beta) + log|X'WX| / 2``. Each iteration
    takes the exact Newton step when the penalized Hessian is negative
    definite and the Fisher-type step ``(X'WX)^{-1} U*`` otherwise; steps
    are capped at ``max_stepsize`` per coefficient and halved until the
    penalized log-likelihood does not decrease.
    """
    cfg = cfg or FitConfig()
    X, y = _design(d)
    beta = np.zeros(X.shape[1])
    pll = _penalized_loglik(X, y, beta)
    ustar = firth_score(X, y, beta)
    it = 0
    for it in range(1, cfg.max_iter + 1):
        pi = expit(X @ beta)
        w = pi * (1 - pi)
        cf = _chol((X.T * w) @ X)
        h = w * np.einsum("ij,ji->i", X, cho_solve(cf, X.T, check_finite=False))
        ustar = X.T @ (y - pi + h * (0.5 - pi))
        try:
            negH = cho_factor(-_firth_hessian(X, pi, cf), lower=False, check_finite=False)
            step = cho_solve(negH, ustar, check_finite=False)
        except LinAlgError:
            step = cho_solve(cf, ustar, check_finite=False)
        big = np.abs(step).max()
        if big > cfg.max_stepsize:
            step = step * (cfg.max_stepsize / big)
        new = beta + step
        new_pll = _penalized_loglik(X, y, new)
        for _ in range(cfg.max_halvings):
            if new_pll >= pll:
                break
            step = step / 2
            new = beta + step
            new_pll = _penalized_loglik(X, y, new)
        beta, pll = new, new_pll
        ustar = firth_score(X, y, beta)
        if np.abs(beta).max() > cfg.divergence_threshold:
            return FitResult(beta, False, it, float(np.abs(ustar).max()), True, "nrf")
        small_step = np.abs(step).max() <= cfg.step_tol * max(1.0, np.abs(beta).max())
        if np.abs(ustar).max() < cfg.tol and small_step:
            return FitResult(beta, True, it, float(np.abs(ustar).max()), False, "nrf")
    return FitResult(beta, False, it, float(np.abs(ustar).max()), False, "nrf")
