"""Inexact infinite GMRES: the outer Arnoldi loop on the companion operator.

Each step applies ``M K~^{-1}`` to the newest basis vector (one inexact solve
with ``A_0``), orthogonalizes with repeated classical Gram-Schmidt and tracks
the exact-residual norm ``||r~_i||`` at the reference parameter.  The inner
tolerance for step ``i`` is inversely proportional to ``||r~_{i-1}||``.
"""
from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .companion import BlockBasis, BlockVector, apply_Kinv, shift_down
from .inner import InnerSolveReport, InnerSolverError, make_inner_solver
from .lsq import IncrementalGivens, hessenberg_lstsq, shifted_hessenberg
from .solution import ParameterizedSolution

__all__ = [
    "SolverConfig",
    "TraceRow",
    "RunTrace",
    "KrylovFactorization",
    "EngineAbort",
    "eps_inner",
    "exact_residual_norm",
    "orthogonalize",
    "run",
    "run_two_pass",
    "smallest_singular_value",
    "residual_split",
    "TRACE_HEADER",
]

log = logging.getLogger(__name__)

TRACE_HEADER = ["iter", "rel_res_exact", "eps_inner", "p_norm", "inner_iters", "elapsed_s"]
DGKS_ETA = 1.0 / math.sqrt(2.0)


@dataclass
class SolverConfig:
    """Outer-iteration settings.

    ``ell_policy="fixed"`` uses ``eps_inner = ell * eps / ||r~_{i-1}||``;
    ``"strict"`` uses ``(sigma / j) * eps / ||r~_{i-1}||`` and needs
    ``sigma`` and ``j_sigma`` (see :func:`run_two_pass`).
    """

    j_max: int = 50
    eps: float = 1e-10
    ell_policy: str = "fixed"
    ell: float = 1.0
    mu_ref: float = 0.0
    reorth: str = "always"
    stop_rel_res: float | None = None
    inner: dict | str = field(default_factory=lambda: {"kind": "lu"})
    keep_full_Ztilde: bool = False
    sigma: float | None = None
    j_sigma: int | None = None
    breakdown_tol: float = 1e-14

    def __post_init__(self):
        if not isinstance(self.j_max, (int, np.integer)) or self.j_max < 1:
            raise ValueError(f"j_max: must be an integer >= 1, got {self.j_max!r}")
        if not (isinstance(self.eps, (int, float)) and self.eps > 0):
            raise ValueError(f"eps: must be positive, got {self.eps!r}")
        if self.ell_policy not in ("fixed", "strict"):
            raise ValueError(f"ell_policy: expected 'fixed' or 'strict', got {self.ell_policy!r}")
        if not self.ell > 0:
            raise ValueError(f"ell: must be positive, got {self.ell!r}")
        if not math.isfinite(self.mu_ref):
            raise ValueError(f"mu_ref: must be finite, got {self.mu_ref!r}")
        if self.reorth not in ("always", "dgks"):
            raise ValueError(f"reorth: expected 'always' or 'dgks', got {self.reorth!r}")
        if self.stop_rel_res is not None and not self.stop_rel_res > 0:
            raise ValueError(f"stop_rel_res: must be positive, got {self.stop_rel_res!r}")
        if self.ell_policy == "strict" and self.sigma is not None and not self.sigma > 0:
            raise ValueError(f"sigma: must be positive, got {self.sigma!r}")


@dataclass
class TraceRow:
    iter: int
    rel_res_exact: float
    eps_inner: float
    p_norm: float
    inner_iters: int
    elapsed_s: float


@dataclass
class RunTrace:
    rows: list = field(default_factory=list)

    def append(self, row: TraceRow) -> None:
        self.rows.append(row)

    def __len__(self) -> int:
        return len(self.rows)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(TRACE_HEADER)
            for r in self.rows:
                w.writerow([r.iter, repr(float(r.rel_res_exact)), repr(float(r.eps_inner)),
                            repr(float(r.p_norm)), int(r.inner_iters), f"{r.elapsed_s:.6f}"])


@dataclass
class KrylovFactorization:
    """``M Z~_j = Q_{j+1} H_j`` plus the inner-solve record.

    ``Z`` stores only the first blocks unless the run kept the full basis.
    After a lucky breakdown ``Q`` has ``j`` columns and the last row of ``H``
    is zero.
    """

    Q: BlockBasis
    Z: BlockBasis
    H: np.ndarray
    c_norm: float
    scale: float
    reports: list
    breakdown: bool = False

    @property
    def j(self) -> int:
        return self.H.shape[1]

    @property
    def full_Z(self) -> bool:
        return not self.Z.first_block_only

    def Q_dense(self, num_blocks: int | None = None) -> np.ndarray:
        return self.Q.to_dense(num_blocks)

    def Z_dense(self, num_blocks: int | None = None) -> np.ndarray:
        return self.Z.to_dense(num_blocks)


class EngineAbort(RuntimeError):
    """An inner solve failed; carries the trace and factorization so far."""

    def __init__(self, message, trace, factorization):
        super().__init__(message)
        self.trace = trace
        self.factorization = factorization


def eps_inner(i: int, r_prev_norm: float, config: SolverConfig,
              sigma: float | None = None, j: int | None = None) -> float:
    """Inner tolerance for outer step ``i`` (absolute bound on ``||p_i||``).

    Returns ``inf`` when ``r_prev_norm`` is zero: the run has converged and no
    further inner solve is needed.
    """
    if r_prev_norm < 0:
        raise ValueError("residual norm must be nonnegative")
    if r_prev_norm == 0.0:
        return math.inf
    if config.ell_policy == "fixed":
        return config.ell * config.eps / r_prev_norm
    sigma = config.sigma if sigma is None else sigma
    j = config.j_sigma if j is None else j
    if sigma is None or j is None:
        raise ValueError("strict policy needs sigma and j from a prior exact pass")
    return (sigma / j) * config.eps / r_prev_norm


def exact_residual_norm(H, mu: float, c_norm: float) -> float:
    """``min_w ||e_1 c_norm - (I_ - mu H_) w||`` for a ``(i+1) x i`` Hessenberg ``H``.

    ``mu`` is the shift in the parameterization of ``H`` (already divided by
    any scale factor).
    """
    H = np.asarray(H, dtype=float)
    if H.ndim != 2 or H.shape[1] == 0:
        return abs(float(c_norm))
    return hessenberg_lstsq(H, mu, c_norm)[1]


def orthogonalize(y: BlockVector, Q, reorth: str = "always", breakdown_tol: float = 1e-14):
    """Classical Gram-Schmidt of ``y`` against the columns of ``Q``, repeated.

    ``Q`` is a :class:`BlockBasis` or a dense matrix whose rows cover the
    active part of ``y``.  Returns ``(h, beta, q_new)``; ``q_new`` is ``None``
    when ``beta <= breakdown_tol * ||y||`` (lucky breakdown).
    """
    if isinstance(Q, BlockBasis):
        k = Q.count
        V = Q.leading(y.data.size, k)
    else:
        V = np.asarray(Q)[: y.data.size]
        k = V.shape[1]
    v = y.data.copy()
    ynorm = np.linalg.norm(v)
    h = np.zeros(k)
    if k:
        c = V.T @ v
        v -= V @ c
        h += c
        if reorth == "always" or np.linalg.norm(v) < DGKS_ETA * ynorm:
            c = V.T @ v
            v -= V @ c
            h += c
    beta = float(np.linalg.norm(v))
    if beta <= breakdown_tol * ynorm or beta == 0.0:
        return h, beta, None
    return h, beta, BlockVector(v / beta, y.block_size)


def smallest_singular_value(H, nu: float) -> float:
    """``sigma_min(I_ - nu H_)`` for a ``(j+1) x j`` Hessenberg matrix."""
    return float(np.linalg.svd(shifted_hessenberg(H, nu), compute_uv=False)[-1])


def run(problem, b, config: SolverConfig, inner=None):
    """Run inexact infinite GMRES.

    Parameters
    ----------
    problem : TaylorMatrixFunction
        The family, possibly rescaled; ``config.mu_ref`` is in the original
        parameterization.
    b : array_like
        Right-hand side, ``||b|| > 0``.
    config : SolverConfig
    inner : object, optional
        Inner solver with ``solve(rhs, tol)``; built from ``config.inner``
        when omitted.

    Returns
    -------
    solution, factorization, trace
    """
    b = np.asarray(b, dtype=float).ravel()
    n = problem.n
    if b.size != n:
        raise ValueError(f"b has length {b.size}, problem dimension is {n}")
    c_norm = float(np.linalg.norm(b))
    if c_norm == 0.0:
        raise ValueError("right-hand side must be nonzero")
    if inner is None:
        inner = make_inner_solver(problem.coeff(0), config.inner)
    j_max = config.j_max
    nu_ref = config.mu_ref / problem.scale

    Q = BlockBasis(n, capacity=min(j_max + 1, 64))
    Z = BlockBasis(n, capacity=min(j_max, 64), first_block_only=not config.keep_full_Ztilde)
    Q.append(BlockVector(b / c_norm, n))
    H = np.zeros((j_max + 1, j_max))
    reports: list[InnerSolveReport] = []
    trace = RunTrace()
    givens = IncrementalGivens(nu_ref, c_norm)
    r_prev = c_norm
    t_start = time.perf_counter()
    breakdown = False
    j = 0

    def factorization():
        return KrylovFactorization(Q, Z, H[: j + 1, :j].copy(), c_norm, problem.scale,
                                   reports, breakdown)

    for i in range(1, j_max + 1):
        tol = eps_inner(i, r_prev, config)
        if math.isinf(tol):
            break
        try:
            res = apply_Kinv(Q.column(i - 1), problem, inner, tol)
        except InnerSolverError as exc:
            raise EngineAbort(f"inner solve failed at outer iteration {i}: {exc}",
                              trace, factorization()) from exc
        y = shift_down(res.z)
        h, beta, q_new = orthogonalize(y, Q, config.reorth, config.breakdown_tol)
        H[:i, i - 1] = h
        H[i, i - 1] = beta if q_new is not None else 0.0
        Z.append(res.z)
        j = i
        rep = res.inner
        reports.append(InnerSolveReport(i, tol, res.p_norm, getattr(rep, "iters", 0),
                                        getattr(rep, "kind", type(inner).__name__),
                                        getattr(rep, "matvecs", 0),
                                        getattr(rep, "converged", True), r_prev))
        r_prev = givens.add_column(H[: i + 1, i - 1])
        trace.append(TraceRow(i, r_prev / c_norm, tol, res.p_norm,
                              getattr(rep, "iters", 0), time.perf_counter() - t_start))
        if q_new is None:
            breakdown = True
            log.info("lucky breakdown at outer iteration %d", i)
            break
        Q.append(q_new)
        if config.stop_rel_res is not None and r_prev / c_norm <= config.stop_rel_res:
            break

    fact = factorization()
    final = r_prev / c_norm
    if config.stop_rel_res is None:
        converged = True
    else:
        converged = breakdown or final <= config.stop_rel_res
    summary = {
        "iterations": j,
        "final_rel_res": final,
        "converged": bool(converged),
        "breakdown": breakdown,
        "wall_s": time.perf_counter() - t_start,
        "inner_iters": int(sum(r.inner_iters for r in reports)),
        "inner_matvecs": int(sum(r.matvecs for r in reports)),
    }
    sol = ParameterizedSolution(Z.first_blocks(), fact.H, c_norm, problem.scale,
                                config.mu_ref, config.eps, summary)
    return sol, fact, trace


def run_two_pass(problem, b, config: SolverConfig, inner=None):
    """Strict tolerance policy via an exact first pass.

    Pass 1 runs with exact LU inner solves to obtain ``j`` and
    ``sigma_j(I_ - nu_ref H_j)``; pass 2 reruns with the configured inexact
    inner solver, ``j_max = j`` and the strict policy.  Returns the pass-2
    ``(solution, factorization, trace)`` and the ``(sigma, j)`` used.
    """
    exact = replace(config, inner={"kind": "lu"}, ell_policy="fixed")
    _, fact1, _ = run(problem, b, exact)
    j = fact1.j
    sigma = smallest_singular_value(fact1.H, config.mu_ref / problem.scale)
    strict = replace(config, ell_policy="strict", sigma=sigma, j_sigma=j, j_max=j,
                     stop_rel_res=None)
    return run(problem, b, strict, inner=inner), (sigma, j)


def residual_split(fact: KrylovFactorization, problem, b, mu: float, j: int | None = None):
    """Return ``(||r_j||, ||r~_j||, delta_j)`` at ``mu`` (original parameterization).

    ``r_j = c - (K - nu M) Z~_j w_j`` is formed explicitly in block form, so
    the run must have kept the full ``Z~``.  ``r~_j`` is
    ``Q_{j+1}(e_1 ||c|| - (I_ - nu H_) w_j)`` and ``delta_j = ||r_j - r~_j||``,
    which equals ``||P_j w_j||``.
    """
    if not fact.full_Z:
        raise ValueError("residual_split needs a run with keep_full_Ztilde=True")
    j = fact.j if j is None else int(j)
    if not 1 <= j <= fact.j:
        raise ValueError(f"j must lie in [1, {fact.j}]")
    n = problem.n
    b = np.asarray(b, dtype=float).ravel()
    nu = mu / fact.scale
    Hj = fact.H[: j + 1, :j]
    w, _ = hessenberg_lstsq(Hj, nu, fact.c_norm)
    V = (fact.Z.leading(j * n, j) @ w).reshape(j, n)
    r = np.zeros((j + 1, n))
    r[0] = b
    for ell in range(j):
        r[0] -= problem.coeff(ell) @ V[ell]
    r[1:j] = -(V[1:j] - nu * V[: j - 1])
    r[j] = nu * V[j - 1]
    g = -shifted_hessenberg(Hj, nu) @ w
    g[0] += fact.c_norm
    cols = min(fact.Q.count, j + 1)
    rt = (fact.Q.leading((j + 1) * n, cols) @ g[:cols]).reshape(j + 1, n)
    return (float(np.linalg.norm(r)), float(np.linalg.norm(rt)),
            float(np.linalg.norm(r - rt)))
