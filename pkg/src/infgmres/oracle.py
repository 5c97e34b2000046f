"""Brute-force references for small problems.

Everything here assembles the truncated companion matrices

    K_m = [[A0, A1, ..., Am], [0, I], ..., [0, ..., I]],
    M_m = block shift down,   c_m = [b, 0, ..., 0],

explicitly and works with dense linear algebra.  Sizes are capped so the
oracle cannot be used at production scale by accident.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

__all__ = [
    "OracleCapError",
    "DEFAULT_CAP",
    "build_explicit",
    "truncated_eval",
    "eval_complex",
    "FGMRESResult",
    "dense_fgmres",
    "companion_spectrum",
    "hessenberg_reduce",
    "francis_qr_eigvals",
    "nep_residual",
    "direct_solve",
    "evaluate_complex",
]

DEFAULT_CAP = 20000


class OracleCapError(ValueError):
    pass


def _check_cap(dim: int, cap: int) -> None:
    if dim > cap:
        raise OracleCapError(f"explicit dimension {dim} exceeds the oracle cap {cap}")


def build_explicit(problem, m: int, b=None, cap: int = DEFAULT_CAP, with_inverse: bool = False):
    """Assemble ``(K_m, M_m, c_m)`` (sparse, sparse, dense) and optionally dense ``K_m^{-1}``.

    Uses the (scaled) coefficients ``problem.coeff(l)``, ``l = 0..m``.
    """
    if m < 0:
        raise ValueError("m must be nonnegative")
    n = problem.n
    N = (m + 1) * n
    _check_cap(N, cap)
    first = sp.hstack([problem.coeff(ell) for ell in range(m + 1)], format="csr")
    if m == 0:
        K = first
        M = sp.csr_matrix((n, n))
    else:
        lower = sp.hstack(
            [sp.csr_matrix((m * n, n)), sp.identity(m * n, format="csr")], format="csr"
        )
        K = sp.vstack([first, lower], format="csr")
        M = sp.csr_matrix(sp.kron(sp.eye(m + 1, k=-1), sp.identity(n)))
    c = np.zeros(N)
    if b is not None:
        c[:n] = np.asarray(b, dtype=float)
    out = (K, M, c)
    if with_inverse:
        A0inv = np.linalg.inv(problem.coeff(0).toarray())
        Kinv = np.eye(N)
        Kinv[:n, :n] = A0inv
        for ell in range(1, m + 1):
            Kinv[:n, ell * n : (ell + 1) * n] = -A0inv @ problem.coeff(ell).toarray()
        out = out + (Kinv,)
    return out


def truncated_eval(problem, mu, m: int):
    """``sum_{l<=m} coeff(l) mu**l`` (works for complex ``mu``)."""
    out = sp.csr_matrix((problem.n, problem.n), dtype=complex if np.iscomplexobj(mu) else float)
    for ell in range(m + 1):
        out = out + problem.coeff(ell) * (mu**ell)
    return out


def _scalar_complex(f, z):
    if f.kind == "poly":
        return np.polynomial.polynomial.polyval(z, f.params)
    a = f.params[0]
    return {"exp": np.exp, "sin": np.sin, "cos": np.cos}[f.kind](a * z)


def eval_complex(problem, mu) -> sp.csr_matrix:
    """``A(mu)`` for complex ``mu`` (original parameterization); needs ``problem.terms``."""
    if problem.terms is None:
        raise ValueError("complex evaluation needs a sum-of-products family")
    out = sp.csr_matrix((problem.n, problem.n), dtype=complex)
    for mat, f in problem.terms:
        out = out + mat * _scalar_complex(f, mu)
    return out


class FGMRESResult:
    def __init__(self, Q, Z, Hmu, iterates, residuals):
        self.Q = Q
        self.Z = Z
        self.Hmu = Hmu
        self.iterates = iterates
        self.residuals = residuals


def dense_fgmres(K, M, c, mu: float, j: int, inner_per_step=None,
                 breakdown_tol: float = 1e-14) -> FGMRESResult:
    """Flexible GMRES on ``(I - mu M K^{-1}) u = c`` with dense matrices.

    ``inner_per_step(i, q) -> z`` approximates ``K^{-1} q`` at step ``i``
    (1-based); exact dense solves by default.  The Arnoldi vector of step
    ``i`` is ``q_i - mu M z_i``, orthogonalized by modified Gram-Schmidt
    applied twice.  ``iterates[k]`` is ``Z_{k+1} w_{k+1}``, an approximate
    solution of ``(K - mu M) x = c``.
    """
    K = K.toarray() if sp.issparse(K) else np.asarray(K, dtype=float)
    M = M.toarray() if sp.issparse(M) else np.asarray(M, dtype=float)
    c = np.asarray(c, dtype=float)
    N = c.size
    if inner_per_step is None:
        def inner_per_step(i, q):
            return np.linalg.solve(K, q)
    beta0 = np.linalg.norm(c)
    Q = np.zeros((N, j + 1))
    Z = np.zeros((N, j))
    Hmu = np.zeros((j + 1, j))
    Q[:, 0] = c / beta0
    iterates, residuals = [], []
    k = 0
    for i in range(j):
        z = inner_per_step(i + 1, Q[:, i])
        Z[:, i] = z
        v = Q[:, i] - mu * (M @ z)
        for _ in range(2):
            for r in range(i + 1):
                h = Q[:, r] @ v
                Hmu[r, i] += h
                v -= h * Q[:, r]
        beta = np.linalg.norm(v)
        Hmu[i + 1, i] = beta
        k = i + 1
        e1 = np.zeros(k + 1)
        e1[0] = beta0
        w = np.linalg.lstsq(Hmu[: k + 1, :k], e1, rcond=None)[0]
        iterates.append(Z[:, :k] @ w)
        residuals.append(float(np.linalg.norm(e1 - Hmu[: k + 1, :k] @ w)))
        if beta <= breakdown_tol * beta0:
            Hmu[i + 1, i] = 0.0
            break
        Q[:, i + 1] = v / beta
    return FGMRESResult(Q[:, : k + 1], Z[:, :k], Hmu[: k + 1, :k], iterates, residuals)


# -- eigenvalues --------------------------------------------------------------


def hessenberg_reduce(A):
    """Householder reduction to upper Hessenberg form (returns a new array)."""
    H = np.array(A, dtype=float)
    N = H.shape[0]
    for k in range(N - 2):
        x = H[k + 1 :, k]
        alpha = np.linalg.norm(x)
        if alpha == 0.0:
            continue
        v = x.copy()
        v[0] += np.copysign(alpha, x[0]) if x[0] != 0 else alpha
        v /= np.linalg.norm(v)
        H[k + 1 :, k:] -= 2.0 * np.outer(v, v @ H[k + 1 :, k:])
        H[:, k + 1 :] -= 2.0 * np.outer(H[:, k + 1 :] @ v, v)
        H[k + 2 :, k] = 0.0
    return H


def _house(x):
    v = np.array(x, dtype=float)
    alpha = np.linalg.norm(v)
    if alpha == 0.0:
        return v, 0.0
    v[0] += np.copysign(alpha, v[0]) if v[0] != 0 else alpha
    return v, 2.0 / (v @ v)


def francis_qr_eigvals(A, max_sweeps: int = 100) -> np.ndarray:
    """Eigenvalues by Hessenberg reduction and Francis double-shift QR.

    Plain textbook implementation, intended for small matrices.
    """
    H = hessenberg_reduce(A)
    N = H.shape[0]
    eigs = []
    hi = N - 1
    iters = 0
    eps = np.finfo(float).eps
    while hi >= 0:
        if hi == 0:
            eigs.append(complex(H[0, 0]))
            hi -= 1
            continue
        # find the active unreduced block [lo, hi]
        lo = hi
        while lo > 0:
            s = abs(H[lo - 1, lo - 1]) + abs(H[lo, lo])
            if abs(H[lo, lo - 1]) <= eps * (s if s else 1.0):
                H[lo, lo - 1] = 0.0
                break
            lo -= 1
        if lo == hi:
            eigs.append(complex(H[hi, hi]))
            hi -= 1
            iters = 0
            continue
        if lo == hi - 1:
            a, b, c, d = H[hi - 1, hi - 1], H[hi - 1, hi], H[hi, hi - 1], H[hi, hi]
            tr, det = a + d, a * d - b * c
            disc = complex(tr * tr / 4.0 - det)
            root = np.sqrt(disc)
            eigs.extend([tr / 2.0 + root, tr / 2.0 - root])
            hi -= 2
            iters = 0
            continue
        iters += 1
        if iters > max_sweeps:
            raise np.linalg.LinAlgError("Francis QR did not converge")
        s = H[hi - 1, hi - 1] + H[hi, hi]
        t = H[hi - 1, hi - 1] * H[hi, hi] - H[hi - 1, hi] * H[hi, hi - 1]
        if iters % 11 == 0:
            # exceptional shift
            w = abs(H[hi, hi - 1]) + abs(H[hi - 1, hi - 2])
            s, t = 1.5 * w, w * w
        x = H[lo, lo] ** 2 + H[lo, lo + 1] * H[lo + 1, lo] - s * H[lo, lo] + t
        y = H[lo + 1, lo] * (H[lo, lo] + H[lo + 1, lo + 1] - s)
        z = H[lo + 1, lo] * H[lo + 2, lo + 1]
        for k in range(lo, hi - 1):
            v, tau = _house([x, y, z])
            r = max(lo, k - 1)
            H[k : k + 3, r:] -= tau * np.outer(v, v @ H[k : k + 3, r:])
            rr = min(k + 3, hi)
            H[: rr + 1, k : k + 3] -= tau * np.outer(H[: rr + 1, k : k + 3] @ v, v)
            x = H[k + 1, k]
            y = H[k + 2, k]
            if k < hi - 2:
                z = H[k + 3, k]
        v, tau = _house([x, y])
        H[hi - 1 : hi + 1, hi - 2 :] -= tau * np.outer(v, v @ H[hi - 1 : hi + 1, hi - 2 :])
        H[: hi + 1, hi - 1 : hi + 1] -= tau * np.outer(H[: hi + 1, hi - 1 : hi + 1] @ v, v)
    return np.array(eigs)


def companion_spectrum(problem, m: int, method: str = "lapack", cap: int = 2000) -> np.ndarray:
    """Eigenvalues of ``M_m K_m^{-1}`` sorted by modulus, largest first.

    ``method="lapack"`` uses :func:`numpy.linalg.eigvals`; ``"qr"`` the
    in-repo Hessenberg/Francis iteration (small sizes only).
    """
    K, M, _, Kinv = build_explicit(problem, m, cap=cap, with_inverse=True)
    G = M.toarray() @ Kinv
    if method == "lapack":
        gam = np.linalg.eigvals(G)
    elif method == "qr":
        gam = francis_qr_eigvals(G)
    else:
        raise ValueError(f"unknown method {method!r}")
    return gam[np.argsort(-np.abs(gam), kind="stable")]


def nep_residual(problem, lam) -> float:
    """Relative smallest singular value of ``A(lam)``; zero at an eigenvalue."""
    A = eval_complex(problem, lam).toarray()
    sv = np.linalg.svd(A, compute_uv=False)
    return float(sv[-1] / sv[0])


def direct_solve(problem, mu: float, b) -> np.ndarray:
    """Sparse LU solve of ``A(mu) x = b`` with the closed-form evaluator."""
    A = problem.eval(mu).tocsc()
    b = np.asarray(b, dtype=float)
    try:
        lu = spla.splu(A)
    except RuntimeError as exc:
        raise np.linalg.LinAlgError(f"A({mu!r}) is singular: {exc}") from exc
    return lu.solve(b)


def evaluate_complex(sol, mu) -> np.ndarray:
    """``x~(mu)`` for complex ``mu`` via a dense least-squares solve."""
    nu = mu / sol.scale
    j = sol.j
    S = -nu * sol.H.astype(complex)
    S[np.arange(j), np.arange(j)] += 1.0
    rhs = np.zeros(j + 1, dtype=complex)
    rhs[0] = sol.c_norm
    w = np.linalg.lstsq(S, rhs, rcond=None)[0]
    return sol.Z_first @ w
