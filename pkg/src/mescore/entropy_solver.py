"""Maximum-entropy solutions of score equations.

Each parameter is a convex combination ``theta_j = z_j @ p_j`` and the
weights maximize Shannon entropy subject to ``U(theta) = 0`` and
``p_j @ 1 = 1``. :func:`solve_me_score` handles any :class:`ScoreModel`
with an augmented Lagrangian; :func:`solve_normal_closed_form` uses the
exponential-tilt form of the Normal-mean solution and a 1-D search on the
multiplier.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .models import NormalModel, ScoreModel
from .simplex_core import (
    DomainError,
    ShapeError,
    SimplexWeights,
    SupportGrid,
    entropy,
    reparameterize,
)

__all__ = [
    "SolverConfig",
    "MEEstimate",
    "KKTReport",
    "NoRootError",
    "solve_me_score",
    "solve_normal_closed_form",
    "kkt_report",
]

log = logging.getLogger(__name__)

CONVERGED = "converged"
INFEASIBLE = "infeasible"
MAX_ITER = "max_iterations"


class NoRootError(ValueError):
    """The score has no root inside the support hull."""


@dataclass(frozen=True)
class SolverConfig:
    """Settings for the augmented-Lagrangian solver.

    ``penalty_max`` caps the quadratic penalty. A score violation that
    shrinks by less than a factor ``stall_ratio`` per outer iteration for
    ``stall_window`` consecutive iterations ends the solve with status
    ``"infeasible"``.
    """

    max_outer_iterations: int = 100
    max_inner_iterations: int = 500
    constraint_tolerance: float = 1e-8
    optimality_tolerance: float = 1e-8
    initial_penalty: float = 10.0
    penalty_growth: float = 10.0
    penalty_max: float = 1e8
    barrier_initial: float = 1e-4
    barrier_decay: float = 0.01
    barrier_min: float = 1e-14
    stall_window: int = 3
    stall_ratio: float = 0.99

    def __post_init__(self) -> None:
        for name in ("constraint_tolerance", "optimality_tolerance", "initial_penalty", "penalty_max"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not self.penalty_growth > 1:
            raise ValueError("penalty_growth must exceed 1")
        if self.max_outer_iterations < 1 or self.max_inner_iterations < 1:
            raise ValueError("iteration limits must be positive")
        if self.barrier_initial < 0 or not 0 < self.barrier_decay < 1:
            raise ValueError("barrier_initial must be >= 0 and barrier_decay in (0, 1)")


@dataclass(frozen=True)
class MEEstimate:
    weights: SimplexWeights
    theta: np.ndarray
    entropy_value: float
    score_multipliers: np.ndarray
    normalization_multipliers: np.ndarray
    kkt_residual: float
    score_residual: float
    converged: bool
    status: str
    iterations: int
    inner_iterations: int = 0
    param_names: tuple[str, ...] = field(default=())
    support: SupportGrid | None = None

    def as_dict(self) -> dict:
        return {
            "theta": self.theta.tolist(),
            "param_names": list(self.param_names),
            "weights": self.weights.weights.tolist(),
            "support": None if self.support is None else self.support.points.tolist(),
            "entropy": self.entropy_value,
            "score_multipliers": self.score_multipliers.tolist(),
            "normalization_multipliers": self.normalization_multipliers.tolist(),
            "kkt_residual": self.kkt_residual,
            "score_residual": self.score_residual,
            "converged": self.converged,
            "status": self.status,
            "iterations": self.iterations,
        }


@dataclass(frozen=True)
class KKTReport:
    score_residual: float
    normalization_residual: float
    stationarity_residual: float
    min_weight: float

    @property
    def max_residual(self) -> float:
        return max(self.score_residual, self.normalization_residual, self.stationarity_residual)


class _Problem:
    """Flattened ME-score problem over ``x = vec(P)`` (row-major)."""

    def __init__(self, model: ScoreModel, grid: SupportGrid):
        self.model = model
        self.grid = grid
        J, K = grid.points.shape
        self.J, self.K = J, K
        self.Z = np.zeros((J, J * K))
        self.E = np.zeros((J, J * K))
        for j in range(J):
            self.Z[j, j * K : (j + 1) * K] = grid.points[j]
            self.E[j, j * K : (j + 1) * K] = 1.0

    def theta(self, x: np.ndarray) -> np.ndarray:
        return self.Z @ x

    def constraints(self, x: np.ndarray) -> np.ndarray:
        return np.concatenate([self.model.score(self.Z @ x), self.E @ x - 1.0])

    def jacobian(self, x: np.ndarray) -> np.ndarray:
        return np.vstack([self.model.score_jacobian(self.Z @ x) @ self.Z, self.E])


_X_FLOOR = 1e-150


def _merit(prob: _Problem, x, lam, mu, tau) -> float:
    if np.any(x <= _X_FLOOR):
        return np.inf
    try:
        c = prob.constraints(x)
    except DomainError:
        return np.inf
    if not np.all(np.isfinite(c)):
        return np.inf
    return float(x @ np.log(x) - tau * np.log(x).sum() - lam @ c + 0.5 * mu * (c @ c))


def _newton_direction(H: np.ndarray, g: np.ndarray) -> np.ndarray:
    shift = 0.0
    scale = max(1.0, float(np.abs(np.diag(H)).max()))
    for _ in range(60):
        try:
            cf = cho_factor(H + shift * np.eye(H.shape[0]), lower=False, check_finite=False)
            return -cho_solve(cf, g, check_finite=False)
        except LinAlgError:
            shift = 1e-10 * scale if shift == 0.0 else shift * 10.0
    return -g / scale


def _inner_solve(prob: _Problem, x, lam, mu, tau, tol, max_iter):
    """Minimize the barrier augmented Lagrangian from ``x``.

    Returns the new point, the final gradient norm and the iteration count.
    """
    J = prob.J
    gnorm = np.inf
    it = 0
    phi = _merit(prob, x, lam, mu, tau)
    flat = 0
    for it in range(1, max_iter + 1):
        theta = prob.theta(x)
        c = prob.constraints(x)
        A = prob.jacobian(x)
        omega = lam - mu * c
        g = np.log(x) + 1.0 - tau / x - A.T @ omega
        gnorm = float(np.abs(g).max())
        if gnorm <= tol:
            return x, gnorm, it - 1
        curv = prob.model.score_curvature(theta, omega[:J])
        H = mu * (A.T @ A) - prob.Z.T @ curv @ prob.Z
        diag = 1.0 / x
        if tau > 0:
            diag = diag + tau / x**2
        H[np.diag_indices_from(H)] += diag
        d = _newton_direction(H, g)
        neg = d < 0
        step = 1.0
        if np.any(neg):
            step = min(1.0, 0.995 * float(np.min(-x[neg] / d[neg])))
        slope = float(g @ d)
        if slope >= 0:
            d = -g
            slope = -float(g @ g)
            if np.any(d < 0):
                step = min(1.0, 0.995 * float(np.min(-x[d < 0] / d[d < 0])))
        accepted = False
        for _ in range(60):
            trial = x + step * d
            phi_t = _merit(prob, trial, lam, mu, tau)
            if phi_t <= phi + 1e-4 * step * slope:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            # no decrease representable in floating point
            break
        if np.array_equal(trial, x):
            break
        flat = flat + 1 if phi - phi_t <= 1e-15 * max(1.0, abs(phi)) else 0
        x, phi = trial, phi_t
        if flat >= 5:
            break
    return x, gnorm, it


def _finalize(prob: _Problem, x, lam, status, outer, inner) -> MEEstimate:
    P = x.reshape(prob.J, prob.K)
    P = P / P.sum(axis=1, keepdims=True)
    w = SimplexWeights(P)
    theta = reparameterize(prob.grid, w)
    score = prob.model.score(theta)
    est = MEEstimate(
        weights=w,
        theta=theta,
        entropy_value=entropy(w),
        score_multipliers=lam[: prob.J].copy(),
        normalization_multipliers=lam[prob.J :].copy(),
        kkt_residual=np.nan,
        score_residual=float(np.abs(score).max()),
        converged=status == CONVERGED,
        status=status,
        iterations=outer,
        inner_iterations=inner,
        param_names=tuple(prob.model.param_names),
        support=prob.grid,
    )
    rep = kkt_report(est, prob.model)
    return _replace(est, kkt_residual=rep.max_residual)


def _replace(est: MEEstimate, **changes) -> MEEstimate:
    from dataclasses import replace

    return replace(est, **changes)


def solve_me_score(model: ScoreModel, grid: SupportGrid, cfg: SolverConfig | None = None) -> MEEstimate:
    """Maximize entropy of the support weights subject to ``U(theta) = 0``.

    Starts from uniform weights. When the score has no root inside the
    support hull (e.g. a separated logistic design) the solve ends with
    ``status="infeasible"`` at the outer iterate with the smallest KKT
    residual; exhausting the outer
    iteration budget gives ``status="max_iterations"``. Neither raises.
    """
    cfg = cfg or SolverConfig()
    if grid.J != model.J:
        raise ShapeError(f"grid has {grid.J} rows but the {model.family} model has {model.J} parameters")
    prob = _Problem(model, grid)
    J, K = grid.J, grid.K
    x = np.full(J * K, 1.0 / K)
    lam = np.zeros(2 * J)
    mu = cfg.initial_penalty
    tau = cfg.barrier_initial
    prev_viol = np.inf
    history: list[float] = []
    inner_total = 0
    status = MAX_ITER
    outer = 0
    best = (np.inf, x, lam)
    for outer in range(1, cfg.max_outer_iterations + 1):
        x, gnorm, nin = _inner_solve(
            prob, x, lam, mu, tau, cfg.optimality_tolerance, cfg.max_inner_iterations
        )
        inner_total += nin
        c = prob.constraints(x)
        lam = lam - mu * c
        # Rescale rows onto the simplex. Dividing row j by s_j shifts log p by
        # -log s_j, which the normalization multiplier absorbs exactly.
        sums = prob.E @ x
        # stay clear of the merit function's positivity floor
        x = np.maximum(x / np.repeat(sums, K), 10 * _X_FLOOR)
        lam[J:] -= np.log(sums)
        c = prob.constraints(x)
        viol = float(np.abs(c).max())
        score_viol = float(np.abs(c[:J]).max())
        stationarity = gnorm + (tau / x).max()
        if max(viol, stationarity) < best[0]:
            best = (max(viol, stationarity), x, lam.copy())
        log.debug("outer %d: viol=%.3e grad=%.3e mu=%.1e tau=%.1e", outer, viol, gnorm, mu, tau)
        if viol <= cfg.constraint_tolerance and stationarity <= 10 * cfg.optimality_tolerance:
            status = CONVERGED
            break
        history.append(score_viol)
        if len(history) > cfg.stall_window:
            recent = history[-(cfg.stall_window + 1) :]
            if all(b > cfg.stall_ratio * a for a, b in zip(recent[:-1], recent[1:])):
                status = INFEASIBLE
                # the iterate closest to a KKT point, not merely the last one
                _, x, lam = best
                break
        if viol > 0.25 * prev_viol:
            mu = min(mu * cfg.penalty_growth, cfg.penalty_max)
        prev_viol = viol
        tau = tau * cfg.barrier_decay
        if tau < cfg.barrier_min:
            tau = 0.0
    return _finalize(prob, x, lam, status, outer, inner_total)


def kkt_report(est: MEEstimate, model: ScoreModel) -> KKTReport:
    """Recompute KKT residuals of an estimate against ``model``.

    The stationarity residual is the gradient of the Lagrangian with the
    row-wise (normalization) component projected out; it is reported only
    where all weights are positive and is ``inf`` otherwise.
    """
    P = est.weights.weights
    J, K = P.shape
    theta = np.asarray(est.theta, dtype=float)
    try:
        score = model.score(theta)
        score_res = float(np.abs(score).max())
    except DomainError:
        return KKTReport(np.inf, np.inf, np.inf, float(P.min()))
    norm_res = float(np.abs(P.sum(axis=1) - 1.0).max())
    if np.any(P <= 0) or est.support is None:
        return KKTReport(score_res, norm_res, np.inf, float(P.min()))
    Z = est.support.points
    dU = model.score_jacobian(theta)
    # d/dp_jk of lam . U(theta) = z_jk * (dU^T lam)_j
    coupling = (dU.T @ est.score_multipliers)[:, None] * Z
    grad = np.log(P) + 1.0 - coupling
    grad = grad - grad.mean(axis=1, keepdims=True)
    return KKTReport(score_res, norm_res, float(np.abs(grad).max()), float(P.min()))


def _tilt(z: np.ndarray, t: float) -> np.ndarray:
    a = -t * z
    a -= a.max()
    w = np.exp(a)
    return w / w.sum()


def solve_normal_closed_form(
    y,
    z,
    sigma0sq: float = 1.0,
    lambda_grid: tuple[float, float, int] = (-5.0, 5.0, 2001),
) -> tuple[MEEstimate, float]:
    """Normal-mean ME solution ``p ∝ exp(-z * lambda1 * n / sigma0sq)``.

    ``lambda1`` is located on ``lambda_grid`` (lower, upper, count), then
    refined by bisection on the monotone map ``lambda1 -> z @ p``. Returns
    the estimate and ``lambda1``.
    """
    y = np.asarray(y, dtype=float).ravel()
    grid = SupportGrid(np.asarray(z, dtype=float), ("mu",))
    z = grid.points[0]
    n = y.size
    ybar = float(y.mean())
    if not z[0] < ybar < z[-1]:
        raise NoRootError(f"sample mean {ybar} lies outside the support hull [{z[0]}, {z[-1]}]")
    scale = n / sigma0sq

    def mean_at(lam1: float) -> float:
        return float(z @ _tilt(z, lam1 * scale))

    lo, hi, count = lambda_grid
    lams = np.linspace(lo, hi, int(count))
    # the map is strictly decreasing in lambda1
    means = np.array([mean_at(v) for v in lams])
    if not means[-1] <= ybar <= means[0]:
        raise NoRootError(f"lambda1 grid [{lo}, {hi}] does not bracket the sample mean {ybar}")
    i = int(np.searchsorted(-means, -ybar))
    a, b = lams[max(i - 1, 0)], lams[min(i, lams.size - 1)]
    for _ in range(200):
        mid = 0.5 * (a + b)
        if mid == a or mid == b:
            break
        if mean_at(mid) > ybar:
            a = mid
        else:
            b = mid
    lam1 = 0.5 * (a + b)
    if abs(mean_at(a) - ybar) < abs(mean_at(lam1) - ybar):
        lam1 = a
    if abs(mean_at(b) - ybar) < abs(mean_at(lam1) - ybar):
        lam1 = b
    w = SimplexWeights(_tilt(z, lam1 * scale)[None, :])
    model = NormalModel(data=_normal_data(y), sigma0sq=sigma0sq)
    theta = reparameterize(grid, w)
    # lambda0 from the log-weight identity -log p - 1 - lambda0 - lambda1 n z / s2 = 0
    lam0 = float(np.mean(-np.log(w.weights[0]) - 1.0 - lam1 * scale * z))
    est = MEEstimate(
        weights=w,
        theta=theta,
        entropy_value=entropy(w),
        score_multipliers=np.array([lam1]),
        normalization_multipliers=np.array([lam0]),
        kkt_residual=np.nan,
        score_residual=float(np.abs(model.score(theta)).max()),
        converged=True,
        status=CONVERGED,
        iterations=0,
        param_names=("mu",),
        support=grid,
    )
    rep = kkt_report(est, model)
    return _replace(est, kkt_residual=rep.max_residual), lam1


def _normal_data(y):
    from .models import Dataset

    return Dataset(y=y)
