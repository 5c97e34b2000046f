"""Small Hessenberg least-squares problems ``min ||e_1 beta - (I_ - nu H_) w||``.

``I_`` is the ``(j+1) x j`` identity padded with a zero row and ``H_`` an upper
Hessenberg matrix, so the shifted matrix is again upper Hessenberg and a
sequence of Givens rotations triangularizes it.  The rotated right-hand side
gives the residual norm of every leading subproblem for free.
"""
from __future__ import annotations

import warnings

import numpy as np

__all__ = [
    "RankDeficiencyWarning",
    "shifted_hessenberg",
    "givens",
    "IncrementalGivens",
    "hessenberg_lstsq",
]


class RankDeficiencyWarning(UserWarning):
    """The shifted Hessenberg matrix is (numerically) rank deficient."""


def shifted_hessenberg(H: np.ndarray, nu: float) -> np.ndarray:
    """Return ``I_ - nu * H`` for an ``(j+1) x j`` Hessenberg ``H``."""
    H = np.asarray(H, dtype=float)
    rows, cols = H.shape
    if rows != cols + 1:
        raise ValueError(f"expected a (j+1) x j matrix, got {H.shape}")
    out = -nu * H
    out[np.arange(cols), np.arange(cols)] += 1.0
    return out


def givens(a: float, b: float) -> tuple[float, float, float]:
    """Rotation ``(c, s, r)`` with ``[c s; -s c] [a; b] = [r; 0]``."""
    if b == 0.0:
        return 1.0, 0.0, a
    r = float(np.hypot(a, b))
    return a / r, b / r, r


class IncrementalGivens:
    """Column-by-column QR of ``I_ - nu H_`` tracking the residual norm.

    ``add_column(h)`` takes column ``k`` of ``H_`` (length ``k + 2``) and
    returns the least-squares residual norm of the ``(k+2) x (k+1)`` problem.
    Each call costs ``O(k)``.
    """

    def __init__(self, nu: float, beta: float):
        self.nu = float(nu)
        self.beta = float(beta)
        self.k = 0
        self._cs: list[tuple[float, float]] = []
        self._R: list[np.ndarray] = []
        self._g = [self.beta]

    @property
    def residual(self) -> float:
        return abs(self._g[-1])

    def add_column(self, h) -> float:
        h = np.asarray(h, dtype=float)
        k = self.k
        if h.size != k + 2:
            raise ValueError(f"column {k} needs {k + 2} entries, got {h.size}")
        col = -self.nu * h
        col[k] += 1.0
        for i, (c, s) in enumerate(self._cs):
            a, b = col[i], col[i + 1]
            col[i] = c * a + s * b
            col[i + 1] = -s * a + c * b
        c, s, r = givens(col[k], col[k + 1])
        col[k] = r
        col[k + 1] = 0.0
        self._cs.append((c, s))
        self._R.append(col[: k + 1].copy())
        g = self._g[k]
        self._g[k] = c * g
        self._g.append(-s * g)
        self.k += 1
        return self.residual

    def solve(self) -> np.ndarray:
        """Least-squares coefficients for the columns added so far."""
        k = self.k
        R = np.zeros((k, k))
        for j, col in enumerate(self._R):
            R[: j + 1, j] = col
        return _back_substitute(R, np.array(self._g[:k]))


def _back_substitute(R, g):
    k = R.shape[0]
    w = np.zeros(k)
    for i in range(k - 1, -1, -1):
        w[i] = (g[i] - R[i, i + 1 :] @ w[i + 1 :]) / R[i, i]
    return w


def hessenberg_lstsq(H: np.ndarray, nu: float, beta: float, rtol: float = 1e-14,
                     context: str = ""):
    """Solve ``min ||e_1 beta - (I_ - nu H_) w||`` via Givens QR.

    Returns ``(w, residual_norm)``.  If the triangular factor has a pivot
    below ``rtol`` times its largest entry a :class:`RankDeficiencyWarning`
    is issued and the minimum-norm solution is returned instead.
    """
    H = np.asarray(H, dtype=float)
    rows, cols = H.shape
    if rows != cols + 1:
        raise ValueError(f"expected a (j+1) x j matrix, got {H.shape}")
    if cols == 0:
        return np.zeros(0), abs(float(beta))
    S = shifted_hessenberg(H, nu)
    R = S.copy()
    g = np.zeros(rows)
    g[0] = beta
    for k in range(cols):
        c, s, r = givens(R[k, k], R[k + 1, k])
        rk = R[k, k:].copy()
        rk1 = R[k + 1, k:].copy()
        R[k, k:] = c * rk + s * rk1
        R[k + 1, k:] = -s * rk + c * rk1
        R[k + 1, k] = 0.0
        g[k], g[k + 1] = c * g[k], -s * g[k]
    d = np.abs(np.diag(R[:cols, :cols]))
    if d.min() <= rtol * max(d.max(), np.abs(R).max(), 1e-300):
        where = f" ({context})" if context else ""
        warnings.warn(
            f"shifted Hessenberg matrix is rank deficient at nu={nu!r}{where}; "
            "using the minimum-norm solution",
            RankDeficiencyWarning,
            stacklevel=2,
        )
        rhs = np.zeros(rows)
        rhs[0] = beta
        w = np.linalg.lstsq(S, rhs, rcond=None)[0]
        return w, float(np.linalg.norm(rhs - S @ w))
    w = _back_substitute(R[:cols, :cols], g[:cols])
    return w, abs(float(g[cols]))
