"""Built-in problem families and file-backed loading.

``time_delay``
    ``A(mu) = -mu I + A0 + A1 exp(-mu)`` with random banded ``A0``, ``A1``.
``helmholtz_fd``
    ``A(mu) = A0 + mu A1 + 2 mu^2 A2 + mu^3 A3 + sin(mu) A4`` from a
    five-point finite-difference discretization on the unit square.
``from_manifest``
    Sum of Matrix Market matrices times scalar functions from a closed set.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .mmio import read_mtx
from .taylor import SCALAR_KINDS, ScalarFunction, sum_of_products

__all__ = [
    "ManifestError",
    "random_banded",
    "random_dense",
    "time_delay",
    "helmholtz_coefficients",
    "helmholtz_fd",
    "from_manifest",
    "load_problem",
]


class ManifestError(ValueError):
    pass


def random_banded(n: int, bandwidth: int, rng) -> sp.csr_matrix:
    """Banded matrix with entries uniform in ``[-1, 1] / bandwidth``."""
    offsets = range(-bandwidth, bandwidth + 1)
    diags = [rng.uniform(-1.0, 1.0, n - abs(k)) / bandwidth for k in offsets]
    return sp.diags(diags, list(offsets), shape=(n, n), format="csr")


def time_delay(n: int = 1000, bandwidth: int = 5, seed: int = 0):
    """Transfer-function family of a time-delay system.

    ``A0`` gets ``2 * bandwidth`` added to its diagonal so that ``A0 + A1``
    is comfortably nonsingular.  Returns ``(family, b)``.
    """
    if n < 2:
        raise ValueError("n must be at least 2")
    if bandwidth < 1:
        raise ValueError("bandwidth must be positive")
    rng = np.random.default_rng(seed)
    A0 = random_banded(n, bandwidth, rng) + 2.0 * bandwidth * sp.identity(n, format="csr")
    A1 = random_banded(n, bandwidth, rng)
    b = rng.uniform(-1.0, 1.0, n)
    family = sum_of_products(
        [
            (sp.identity(n, format="csr"), ScalarFunction.poly(0.0, -1.0)),
            (A0, ScalarFunction.poly(1.0)),
            (A1, ScalarFunction.exp(-1.0)),
        ],
        name="time_delay",
    )
    family.parts = {"A0": sp.csr_matrix(A0), "A1": sp.csr_matrix(A1)}
    return family, b


def random_dense(n: int, degree: int, seed: int = 0, decay: float = 1.0):
    """Dense polynomial family ``sum_{l<=degree} A_l mu^l`` with random coefficients.

    ``A0 = G + n I`` with ``G`` standard normal (well conditioned); the other
    coefficients are standard normal times ``decay**l``.  Meant for
    brute-force comparisons at small ``n``.  Returns ``(family, b)``.
    """
    if n < 1 or degree < 0:
        raise ValueError("need n >= 1 and degree >= 0")
    rng = np.random.default_rng(seed)
    mats = [rng.standard_normal((n, n)) + n * np.eye(n)]
    mats += [rng.standard_normal((n, n)) * decay**ell for ell in range(1, degree + 1)]
    b = rng.standard_normal(n)
    terms = []
    for ell, mat in enumerate(mats):
        coeffs = [0.0] * ell + [1.0]
        terms.append((sp.csr_matrix(mat), ScalarFunction.poly(*coeffs)))
    return sum_of_products(terms, name="random_dense"), b


def helmholtz_coefficients(x1, alpha: float = 30.0):
    """``k(x)``, ``beta(x)`` and ``h(x)``; all depend on the first coordinate only."""
    x1 = np.asarray(x1, dtype=float)
    osc = np.sin(alpha * np.pi * x1)
    k = np.where(x1 < 0.5, 1.0 + x1 * osc, 1.0 + (1.0 - x1) * osc)
    beta = np.sin(2.0 * np.pi * x1)
    h = np.exp(-alpha * x1)
    return k, beta, h


def _laplacian_2d(m: int) -> sp.csr_matrix:
    # 5-point stencil (4, -1) with homogeneous Dirichlet boundary
    T = sp.diags([-np.ones(m - 1), 2.0 * np.ones(m), -np.ones(m - 1)], [-1, 0, 1])
    I = sp.identity(m)
    return sp.csr_matrix(sp.kron(I, T) + sp.kron(T, I))


def helmholtz_fd(grid: int = 64, alpha: float = 30.0):
    """Finite-difference analog of the parameterized Helmholtz problem.

    ``grid`` interior points per side on the unit square, mesh width
    ``h = 1 / (grid + 1)`` and unknowns ordered with ``x1`` fastest.  Every
    term is multiplied by ``h**2`` (as a mass matrix would), so ``A0`` is the
    stencil matrix with entries 4 and -1 and ``A1 = h**2 I``.  Returns
    ``(family, b)``.
    """
    if grid < 8:
        raise ValueError("grid must be at least 8")
    m = int(grid)
    hh = 1.0 / (m + 1)
    x = hh * np.arange(1, m + 1)
    X1 = np.tile(x, m)
    k, beta, load = helmholtz_coefficients(X1, alpha)
    w = hh * hh
    A0 = _laplacian_2d(m)
    A1 = sp.diags(np.full(m * m, w), format="csr")
    A2 = sp.diags(w * k, format="csr")
    A3 = sp.diags(w * k * k, format="csr")
    A4 = sp.diags(w * beta, format="csr")
    family = sum_of_products(
        [
            (A0, ScalarFunction.poly(1.0)),
            (A1, ScalarFunction.poly(0.0, 1.0)),
            (A2, ScalarFunction.poly(0.0, 0.0, 2.0)),
            (A3, ScalarFunction.poly(0.0, 0.0, 0.0, 1.0)),
            (A4, ScalarFunction.sin(1.0)),
        ],
        name="helmholtz_fd",
    )
    family.parts = {"A0": A0, "A1": A1, "A2": A2, "A3": A3, "A4": A4}
    return family, w * load


def _manifest_error(path, msg, term=None):
    where = f" term {term}" if term is not None else ""
    return ManifestError(f"{path}{where}: {msg}")


def from_manifest(path):
    """Load ``{n, terms: [{matrix_path, function: {kind, params}}], scale, rhs}``.

    Matrix paths are relative to the manifest.  ``rhs`` is an inline list, a
    path to a text or ``.npy`` vector, or absent (all ones).  Returns
    ``(family, b)``.
    """
    path = Path(path)
    try:
        spec = json.loads(path.read_text())
    except OSError as exc:
        raise _manifest_error(path, f"cannot read manifest ({exc.strerror})") from exc
    except json.JSONDecodeError as exc:
        raise _manifest_error(path, f"invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    if not isinstance(spec, dict):
        raise _manifest_error(path, "manifest must be a JSON object")
    try:
        n = int(spec["n"])
        terms_in = spec["terms"]
    except (KeyError, TypeError, ValueError) as exc:
        raise _manifest_error(path, f"missing or invalid field {exc}") from exc
    if not isinstance(terms_in, list) or not terms_in:
        raise _manifest_error(path, "terms must be a nonempty list")
    base = path.parent
    terms = []
    for idx, term in enumerate(terms_in):
        try:
            mpath = base / term["matrix_path"]
            fn = term["function"]
            kind = fn["kind"]
            params = fn.get("params", [])
        except (KeyError, TypeError) as exc:
            raise _manifest_error(path, f"missing field {exc}", idx) from exc
        if kind not in SCALAR_KINDS:
            raise _manifest_error(
                path, f"unknown function kind {kind!r}; expected one of {SCALAR_KINDS}", idx
            )
        try:
            func = ScalarFunction(kind, params)
        except (ValueError, TypeError) as exc:
            raise _manifest_error(path, str(exc), idx) from exc
        try:
            mat = read_mtx(mpath)
        except ValueError as exc:
            raise _manifest_error(path, str(exc), idx) from exc
        if mat.shape != (n, n):
            raise _manifest_error(
                path, f"{mpath} has shape {mat.shape}, expected {(n, n)}", idx
            )
        terms.append((mat, func))
    rhs = spec.get("rhs")
    if rhs is None:
        b = np.ones(n)
    elif isinstance(rhs, list):
        b = np.asarray(rhs, dtype=float)
    else:
        rpath = base / rhs
        try:
            b = np.load(rpath) if rpath.suffix == ".npy" else np.loadtxt(rpath)
        except (OSError, ValueError) as exc:
            raise _manifest_error(path, f"cannot read rhs {rpath}: {exc}") from exc
        b = np.asarray(b, dtype=float).ravel()
    if b.size != n:
        raise _manifest_error(path, f"rhs has length {b.size}, expected {n}")
    scale = float(spec.get("scale", 1.0))
    if not scale > 0:
        raise _manifest_error(path, f"scale must be positive, got {scale}")
    family = sum_of_products(terms, name=path.stem, scale=scale)
    return family, b


def load_problem(spec: dict):
    """Build ``(family, b)`` from a run-config ``problem`` entry.

    ``{"builtin": "time_delay", "n": ..., "bandwidth": ..., "seed": ...}``,
    ``{"builtin": "helmholtz_fd", "grid": ..., "alpha": ...}`` or
    ``{"manifest": "path.json"}``.
    """
    spec = dict(spec)
    if "manifest" in spec:
        return from_manifest(spec["manifest"])
    name = spec.pop("builtin", None)
    builders = {"time_delay": time_delay, "helmholtz_fd": helmholtz_fd,
                "random_dense": random_dense}
    if name not in builders:
        raise ValueError(
            f"problem.builtin: unknown problem {name!r}; expected one of {sorted(builders)}"
        )
    try:
        return builders[name](**spec)
    except TypeError as exc:
        raise ValueError(f"problem: {exc}") from exc
