"""Parameterized matrix families accessed through their Taylor coefficients.

A family ``A(mu) = sum_l A_l mu**l`` is represented by a coefficient oracle
``l -> A_l`` (sparse, CSR with sorted indices) together with an optional
closed-form evaluator used for true-residual checks.  Families built from a
short sum ``A(mu) = sum_k C_k f_k(mu)`` with scalar functions from a closed set
get exact Taylor coefficients through :class:`ScalarFunction`.
"""
from __future__ import annotations

import math
import threading
from fractions import Fraction
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.sparse as sp

__all__ = [
    "ScalarFunction",
    "TaylorMatrixFunction",
    "EvaluatorUnavailable",
    "sum_of_products",
    "rescale",
]

SCALAR_KINDS = ("poly", "exp", "sin", "cos")


class EvaluatorUnavailable(RuntimeError):
    """Raised when a family has no closed-form evaluator."""


def _as_csr(mat) -> sp.csr_matrix:
    out = sp.csr_matrix(mat, dtype=float)
    out.sum_duplicates()
    out.sort_indices()
    return out


class ScalarFunction:
    """A scalar function of ``mu`` with exactly known Taylor coefficients.

    Supported kinds are ``poly`` (params: coefficients ``c0, c1, ...``),
    ``exp``, ``sin`` and ``cos`` (params: the single frequency ``a`` in
    ``f(a * mu)``).  Coefficients are formed as exact rationals and rounded
    once, so e.g. the degree-5 coefficient of ``exp(-mu)`` is the double
    nearest to ``-1/120``.
    """

    def __init__(self, kind: str, params: Sequence[float]):
        if kind not in SCALAR_KINDS:
            raise ValueError(
                f"unknown function kind {kind!r}; expected one of {SCALAR_KINDS}"
            )
        params = [float(p) for p in params]
        if kind == "poly":
            if len(params) == 0:
                raise ValueError("poly needs at least one coefficient")
        elif len(params) != 1:
            raise ValueError(f"{kind} takes exactly one parameter, got {len(params)}")
        self.kind = kind
        self.params = tuple(params)

    @classmethod
    def poly(cls, *coeffs: float) -> "ScalarFunction":
        return cls("poly", coeffs)

    @classmethod
    def exp(cls, a: float = 1.0) -> "ScalarFunction":
        return cls("exp", [a])

    @classmethod
    def sin(cls, a: float = 1.0) -> "ScalarFunction":
        return cls("sin", [a])

    @classmethod
    def cos(cls, a: float = 1.0) -> "ScalarFunction":
        return cls("cos", [a])

    def __repr__(self) -> str:
        return f"ScalarFunction({self.kind!r}, {list(self.params)!r})"

    def __call__(self, mu: float) -> float:
        if self.kind == "poly":
            return float(np.polynomial.polynomial.polyval(mu, self.params))
        a = self.params[0]
        return float({"exp": np.exp, "sin": np.sin, "cos": np.cos}[self.kind](a * mu))

    def taylor(self, ell: int) -> float:
        """Return the degree-``ell`` Taylor coefficient at zero."""
        if ell < 0:
            raise ValueError("Taylor index must be nonnegative")
        if self.kind == "poly":
            return self.params[ell] if ell < len(self.params) else 0.0
        a = Fraction(self.params[0])
        base = a**ell / math.factorial(ell)
        if self.kind == "exp":
            return float(base)
        if self.kind == "sin":
            if ell % 2 == 0:
                return 0.0
            return float(base if (ell // 2) % 2 == 0 else -base)
        if ell % 2 == 1:
            return 0.0
        return float(base if (ell // 2) % 2 == 0 else -base)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": list(self.params)}


class TaylorMatrixFunction:
    """The matrix family ``A(mu)`` seen through its Taylor coefficients.

    Parameters
    ----------
    n : int
        System dimension.
    coeff_oracle : callable
        ``l -> A_l`` in the original parameterization.  Must be deterministic.
    evaluator : callable, optional
        ``mu -> A(mu)`` in closed form.
    scale : float
        Reparameterization factor ``s``: :meth:`coeff` returns the
        coefficients of ``A(s * nu)``, i.e. ``s**l * A_l``.
    terms : list of (matrix, ScalarFunction), optional
        The sum-of-products description, kept for serialization.
    """

    def __init__(
        self,
        n: int,
        coeff_oracle: Callable[[int], sp.spmatrix],
        evaluator: Optional[Callable[[float], sp.spmatrix]] = None,
        scale: float = 1.0,
        terms=None,
        name: str = "",
        _factor: float = 1.0,
    ):
        if n < 1:
            raise ValueError("dimension must be positive")
        if not scale > 0:
            raise ValueError("scale must be positive")
        self.n = int(n)
        self.scale = float(scale)
        self.terms = terms
        self.name = name
        self._oracle = coeff_oracle
        self._evaluator = evaluator
        # factor multiplying the oracle's coefficients; differs from scale
        # when the oracle is itself a rescaled family
        self._factor = float(_factor)
        self._memo: dict[int, sp.csr_matrix] = {}
        self._lock = threading.Lock()

    def __repr__(self) -> str:
        label = self.name or "TaylorMatrixFunction"
        return f"<{label} n={self.n} scale={self.scale:g}>"

    def coeff(self, ell: int) -> sp.csr_matrix:
        """Taylor coefficient of degree ``ell`` with the scale folded in."""
        ell = int(ell)
        if ell < 0:
            raise ValueError("Taylor index must be nonnegative")
        cached = self._memo.get(ell)
        if cached is not None:
            return cached
        with self._lock:
            cached = self._memo.get(ell)
            if cached is not None:
                return cached
            mat = _as_csr(self._oracle(ell))
            if mat.shape != (self.n, self.n):
                raise ValueError(
                    f"coefficient {ell} has shape {mat.shape}, expected {(self.n, self.n)}"
                )
            if self._factor != 1.0:
                mat = mat * (self._factor**ell)
            self._memo[ell] = mat
            return mat

    @property
    def has_evaluator(self) -> bool:
        return self._evaluator is not None

    def eval(self, mu: float) -> sp.csr_matrix:
        """Closed-form ``A(mu)`` in the original parameterization."""
        if self._evaluator is None:
            raise EvaluatorUnavailable(f"evaluator unavailable for {self!r}")
        return _as_csr(self._evaluator(float(mu)))

    def taylor_sum(self, mu: float, degree: int) -> sp.csr_matrix:
        """Partial sum ``sum_{l<=degree} coeff(l) * mu**l`` (scaled coefficients)."""
        out = sp.csr_matrix((self.n, self.n))
        for ell in range(degree + 1):
            out = out + self.coeff(ell) * (mu**ell)
        return out

    def rescale(self, s: float) -> "TaylorMatrixFunction":
        return rescale(self, s)


def rescale(f: TaylorMatrixFunction, s: float) -> TaylorMatrixFunction:
    """Return the family ``nu -> A(s * nu)``.

    Coefficients of the result are exactly ``s**l * f.coeff(l)``.  The
    evaluator keeps the original parameterization.
    """
    if not s > 0:
        raise ValueError(f"scale factor must be positive, got {s}")
    return TaylorMatrixFunction(
        f.n,
        f.coeff,
        evaluator=f._evaluator,
        scale=f.scale * s,
        terms=f.terms,
        name=f.name,
        _factor=s,
    )


def sum_of_products(
    terms: Sequence[tuple], name: str = "", scale: float = 1.0
) -> TaylorMatrixFunction:
    """Build ``A(mu) = sum_k C_k f_k(mu)`` from ``(C_k, f_k)`` pairs."""
    if not terms:
        raise ValueError("a family needs at least one term")
    mats = [_as_csr(c) for c, _ in terms]
    funcs = [f for _, f in terms]
    n = mats[0].shape[0]
    for k, m in enumerate(mats):
        if m.shape != (n, n):
            raise ValueError(f"term {k} has shape {m.shape}, expected {(n, n)}")

    def oracle(ell: int) -> sp.csr_matrix:
        out = sp.csr_matrix((n, n))
        for m, f in zip(mats, funcs):
            c = f.taylor(ell)
            if c != 0.0:
                out = out + m * c
        return out

    def evaluator(mu: float) -> sp.csr_matrix:
        out = sp.csr_matrix((n, n))
        for m, f in zip(mats, funcs):
            out = out + m * f(mu)
        return out

    family = TaylorMatrixFunction(
        n, oracle, evaluator, terms=list(zip(mats, funcs)), name=name
    )
    if scale != 1.0:
        family = rescale(family, scale)
    return family
