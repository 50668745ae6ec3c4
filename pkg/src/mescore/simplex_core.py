"""Support grids, simplex weights and the entropy objective.

A parameter vector ``theta`` of length J is represented as a set of J
convex combinations ``theta_j = z_j @ p_j`` where ``z_j`` is a row of K
fixed support points and ``p_j`` a probability vector over that row.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

__all__ = [
    "InvalidSupportError",
    "ShapeError",
    "DomainError",
    "SupportGrid",
    "SimplexWeights",
    "build_support",
    "reparameterize",
    "entropy",
    "uniform_weights",
]

ROW_SUM_TOL = 1e-10


class InvalidSupportError(ValueError):
    """Raised for malformed support points or bounds."""


class ShapeError(ValueError):
    """Raised when grids, weights or parameter vectors disagree in shape."""


class DomainError(ValueError):
    """Raised when an argument lies outside the domain of a function."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def build_support(lower: float, upper: float, K: int) -> np.ndarray:
    """Return ``K`` equally spaced support points from ``lower`` to ``upper``.

    Both endpoints are included.
    """
    if not (math.isfinite(lower) and math.isfinite(upper)):
        raise InvalidSupportError(f"support bounds must be finite, got ({lower}, {upper})")
    if not lower < upper:
        raise InvalidSupportError(f"need lower < upper, got ({lower}, {upper})")
    if int(K) != K or K < 2:
        raise InvalidSupportError(f"need an integer K >= 2, got {K}")
    z = np.linspace(lower, upper, int(K))
    # linspace can miss the upper bound by an ulp
    z[-1] = upper
    return z


@dataclass(frozen=True)
class SupportGrid:
    """J rows of K strictly increasing support points.

    Parameters
    ----------
    points
        Array of shape ``(J, K)``; a 1-D array is read as a single row.
    names
        Optional parameter names, one per row.
    """

    points: np.ndarray
    names: tuple[str, ...] = field(default=())

    def __post_init__(self) -> None:
        z = np.atleast_2d(np.asarray(self.points, dtype=float))
        if z.ndim != 2:
            raise InvalidSupportError("support points must be a 2-D array")
        if z.shape[1] < 2:
            raise InvalidSupportError(f"each row needs K >= 2 points, got K={z.shape[1]}")
        if not np.all(np.isfinite(z)):
            raise InvalidSupportError("support points must be finite")
        if np.any(np.diff(z, axis=1) <= 0):
            raise InvalidSupportError("support rows must be strictly increasing")
        names = tuple(self.names) if self.names else tuple(f"theta{j}" for j in range(z.shape[0]))
        if len(names) != z.shape[0]:
            raise ShapeError(f"{len(names)} names for {z.shape[0]} support rows")
        object.__setattr__(self, "points", _frozen(z))
        object.__setattr__(self, "names", names)

    @classmethod
    def from_bounds(
        cls,
        bounds: Sequence[tuple[float, float]],
        K: int,
        names: Sequence[str] = (),
    ) -> SupportGrid:
        """Build an equally spaced grid with one ``(lower, upper)`` pair per row."""
        return cls(np.vstack([build_support(lo, hi, K) for lo, hi in bounds]), tuple(names))

    @classmethod
    def symmetric(cls, bound: float, K: int, J: int, names: Sequence[str] = ()) -> SupportGrid:
        return cls.from_bounds([(-bound, bound)] * J, K, names)

    @property
    def J(self) -> int:
        return self.points.shape[0]

    @property
    def K(self) -> int:
        return self.points.shape[1]

    @property
    def lower(self) -> np.ndarray:
        return self.points[:, 0]

    @property
    def upper(self) -> np.ndarray:
        return self.points[:, -1]

    def contains(self, theta: np.ndarray) -> np.ndarray:
        """Elementwise test of ``theta`` against each row's hull."""
        theta = np.asarray(theta, dtype=float)
        return (theta >= self.lower) & (theta <= self.upper)


@dataclass(frozen=True)
class SimplexWeights:
    """J rows of K probabilities, each row summing to one."""

    weights: np.ndarray

    def __post_init__(self) -> None:
        w = np.atleast_2d(np.asarray(self.weights, dtype=float))
        if w.ndim != 2:
            raise ShapeError("weights must be a 2-D array")
        if not np.all(np.isfinite(w)):
            raise DomainError("weights must be finite")
        if np.any(w < 0):
            raise DomainError("weights must be non-negative")
        sums = w.sum(axis=1)
        if np.any(np.abs(sums - 1.0) > ROW_SUM_TOL):
            raise DomainError(f"weight rows must sum to 1, got sums {sums}")
        object.__setattr__(self, "weights", _frozen(w))

    @property
    def shape(self) -> tuple[int, int]:
        return self.weights.shape


def uniform_weights(J: int, K: int) -> SimplexWeights:
    return SimplexWeights(np.full((J, K), 1.0 / K))


def reparameterize(grid: SupportGrid, w: SimplexWeights | np.ndarray) -> np.ndarray:
    """Map weights to parameters, ``theta_j = z_j @ p_j``."""
    P = w.weights if isinstance(w, SimplexWeights) else np.atleast_2d(np.asarray(w, dtype=float))
    if P.shape != grid.points.shape:
        raise ShapeError(f"weights of shape {P.shape} do not match grid of shape {grid.points.shape}")
    return np.einsum("jk,jk->j", grid.points, P)


def entropy(w: SimplexWeights | np.ndarray) -> float:
    """Shannon entropy in nats summed over rows, with ``0 log 0 = 0``."""
    P = w.weights if isinstance(w, SimplexWeights) else np.asarray(w, dtype=float)
    if np.any(P < 0):
        raise DomainError("entropy is undefined for negative weights")
    pos = P[P > 0]
    return float(-np.sum(pos * np.log(pos)))
