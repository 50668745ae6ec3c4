"""Linear-programming check for complete or quasi-complete separation.

The LP is

    maximize   sum_i s_i
    subject to s_i <= (2 y_i - 1) x_i' b,   0 <= s_i <= 1,   b free.

Its optimum is zero exactly when no direction ``b`` weakly separates the
classes with at least one strict inequality, i.e. when finite logistic
maximum-likelihood estimates exist (for a full-rank design).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .models import Dataset
from .simplex_core import DomainError

__all__ = ["SeparationReport", "detect_separation", "simplex_max", "LPError"]

_EPS = 1e-9
_BLAND_AFTER = 50
SEPARATION_TOL = 1e-7


class LPError(RuntimeError):
    pass


def simplex_max(c, G, h, max_pivots: int = 50_000) -> tuple[np.ndarray, float]:
    """Solve ``max c'v  s.t.  G v <= h, v >= 0`` for ``h >= 0``.

    Dense tableau simplex started from the all-slack basis. Pricing is
    Dantzig's most-negative reduced cost; after a run of degenerate pivots
    it switches to Bland's rule, which cannot cycle. Raises
    :class:`LPError` if the problem is unbounded.
    """
    c = np.asarray(c, dtype=float)
    G = np.asarray(G, dtype=float)
    h = np.asarray(h, dtype=float)
    m, nv = G.shape
    if np.any(h < 0):
        raise ValueError("simplex_max needs h >= 0 so the slack basis is feasible")
    T = np.zeros((m + 1, nv + m + 1))
    T[:m, :nv] = G
    T[:m, nv : nv + m] = np.eye(m)
    T[:m, -1] = h
    T[m, :nv] = -c
    basis = np.arange(nv, nv + m)
    degenerate = 0
    for _ in range(max_pivots):
        reduced = T[m, :-1]
        # tolerance scaled by column size so accumulated round-off is not priced in
        entering = np.flatnonzero(reduced < -_EPS * np.maximum(1.0, np.abs(T[:m, :-1]).max(axis=0)))
        if entering.size == 0:
            break
        bland = degenerate >= _BLAND_AFTER
        col = int(entering[0]) if bland else int(entering[np.argmin(reduced[entering])])
        column = T[:m, col]
        rows = np.flatnonzero(column > _EPS)
        if rows.size == 0:
            raise LPError("LP is unbounded")
        ratios = T[rows, -1] / column[rows]
        best = ratios.min()
        ties = rows[ratios <= best + _EPS * max(1.0, abs(best))]
        # smallest basis index among ties (Bland's leaving rule)
        row = int(ties[np.argmin(basis[ties])])
        degenerate = degenerate + 1 if best <= _EPS else 0
        T[row] /= T[row, col]
        pivot_row = T[row]
        others = np.flatnonzero(T[:, col] != 0)
        others = others[others != row]
        T[others] -= np.outer(T[others, col], pivot_row)
        basis[row] = col
    else:
        raise LPError(f"simplex did not terminate within {max_pivots} pivots")
    v = np.zeros(nv + m)
    v[basis] = T[:m, -1]
    return v[:nv], float(T[m, -1])


@dataclass(frozen=True)
class SeparationReport:
    separated: bool
    certificate: np.ndarray
    objective_value: float
    strict_count: int = 0
    n_obs: int = 0

    @property
    def complete(self) -> bool:
        """True when the certificate separates every observation strictly."""
        return self.separated and self.strict_count == self.n_obs

    def verify(self, d: Dataset, tol: float = 1e-9) -> bool:
        """Recheck the certificate's sign conditions against ``d``."""
        margins = (2 * d.y - 1) * (d.X @ self.certificate)
        scale = max(1.0, float(np.abs(self.certificate).max()))
        return bool(np.all(margins >= -tol * scale) and np.any(margins > tol * scale))

    def as_dict(self) -> dict:
        return {
            "separated": self.separated,
            "complete": self.complete,
            "certificate": self.certificate.tolist(),
            "objective_value": self.objective_value,
        }


def detect_separation(d: Dataset) -> SeparationReport:
    if d.X is None:
        raise DomainError("separation check needs a design matrix")
    y = d.y
    if not np.all((y == 0) | (y == 1)):
        raise DomainError("separation check needs a binary 0/1 response")
    X = d.X
    n, k = X.shape
    A = (2 * y - 1)[:, None] * X
    # variables: b+ (k), b- (k), s (n)
    G = np.zeros((2 * n, 2 * k + n))
    G[:n, :k] = -A
    G[:n, k : 2 * k] = A
    G[:n, 2 * k :] = np.eye(n)
    G[n:, 2 * k :] = np.eye(n)
    h = np.concatenate([np.zeros(n), np.ones(n)])
    c = np.concatenate([np.zeros(2 * k), np.ones(n)])
    v, obj = simplex_max(c, G, h)
    b = v[:k] - v[k : 2 * k]
    b[np.abs(b) < 1e-13] = 0.0
    margins = A @ b
    scale = max(1.0, float(np.abs(b).max()))
    separated = obj > SEPARATION_TOL and bool(np.all(margins >= -1e-9 * scale))
    strict = int(np.sum(margins > 1e-9 * scale)) if separated else 0
    return SeparationReport(
        separated=separated,
        certificate=b if separated else np.zeros(k),
        objective_value=obj,
        strict_count=strict,
        n_obs=n,
    )
