"""The parameterized approximation ``x~(mu)`` returned by the outer iteration."""
from __future__ import annotations

import csv
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .lsq import hessenberg_lstsq

__all__ = ["ParameterizedSolution", "SweepRow", "sweep_threads", "write_sweep_csv", "FORMAT_VERSION"]

FORMAT_VERSION = 1
THREADS_ENV = "INFGMRES_THREADS"


def sweep_threads() -> int:
    """Worker count for sweeps, from ``$INFGMRES_THREADS`` (default 1)."""
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        val = int(raw)
    except ValueError:
        raise ValueError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    return max(val, 1)


@dataclass
class SweepRow:
    mu: float
    rel_res: float
    error: str | None = None


@dataclass(frozen=True)
class ParameterizedSolution:
    """``x~(mu) = Z_first w(mu)`` with ``w(mu)`` from a ``(j+1) x j`` problem.

    ``H`` is the Hessenberg matrix of the (possibly rescaled) companion
    operator; :meth:`evaluate` takes ``mu`` in the original parameterization
    and divides by ``scale`` itself.
    """

    Z_first: np.ndarray
    H: np.ndarray
    c_norm: float
    scale: float = 1.0
    mu_ref: float = 0.0
    eps: float = 0.0
    summary: dict = field(default_factory=dict)

    def __post_init__(self):
        # fixed C layout keeps evaluation bitwise reproducible after save/load
        Z = np.array(self.Z_first, dtype=float, order="C")
        H = np.array(self.H, dtype=float, order="C")
        if Z.ndim != 2 or H.ndim != 2:
            raise ValueError("Z_first and H must be 2-d")
        j = H.shape[1]
        if j < 1:
            raise ValueError("solution needs at least one basis vector")
        if H.shape[0] != j + 1:
            raise ValueError(f"H must be (j+1) x j, got {H.shape}")
        if Z.shape[1] != j:
            raise ValueError(f"Z_first has {Z.shape[1]} columns, H has {j}")
        Z.setflags(write=False)
        H.setflags(write=False)
        object.__setattr__(self, "Z_first", Z)
        object.__setattr__(self, "H", H)

    @property
    def n(self) -> int:
        return self.Z_first.shape[0]

    @property
    def j(self) -> int:
        return self.H.shape[1]

    def coefficients(self, mu: float, j: int | None = None):
        """Least-squares coefficients ``w(mu)`` and the residual norm ``||r~||``."""
        j = self.j if j is None else int(j)
        if not 0 <= j <= self.j:
            raise ValueError(f"j must lie in [0, {self.j}]")
        return hessenberg_lstsq(self.H[: j + 1, :j], float(mu) / self.scale, self.c_norm,
                                context=f"mu={mu!r}")

    def evaluate(self, mu: float, j: int | None = None) -> np.ndarray:
        """``x~(mu)`` using the first ``j`` basis vectors (all by default)."""
        w, _ = self.coefficients(mu, j)
        return self.Z_first[:, : w.size] @ w

    def __call__(self, mu: float) -> np.ndarray:
        return self.evaluate(mu)

    def exact_residual(self, mu: float, j: int | None = None) -> float:
        """``||r~_j(mu)||`` from the small problem (no access to ``A``)."""
        return self.coefficients(mu, j)[1]

    def true_relative_residual(self, mu: float, problem, b, j: int | None = None) -> float:
        """``||A(mu) x~(mu) - b|| / ||b||`` with the closed-form evaluator."""
        A = problem.eval(mu)
        b = np.asarray(b, dtype=float)
        x = self.evaluate(mu, j)
        return float(np.linalg.norm(A @ x - b) / np.linalg.norm(b))

    def history(self, mu: float, problem=None, b=None) -> np.ndarray:
        """Residual per iteration ``1..j`` at ``mu``; true residuals if ``problem`` is given."""
        out = np.empty(self.j)
        for k in range(1, self.j + 1):
            if problem is None:
                out[k - 1] = self.exact_residual(mu, k) / self.c_norm
            else:
                out[k - 1] = self.true_relative_residual(mu, problem, b, k)
        return out

    def sweep(self, mus, problem, b, threads: int | None = None) -> list[SweepRow]:
        """Relative true residuals for each ``mu``; rows keep the input order.

        An error in one row is recorded in that row and does not stop the
        sweep.
        """
        mus = [float(m) for m in mus]
        if not mus:
            raise ValueError("mu list is empty")
        threads = sweep_threads() if threads is None else max(int(threads), 1)

        def one(mu):
            try:
                return SweepRow(mu, self.true_relative_residual(mu, problem, b))
            except Exception as exc:  # recorded per row
                return SweepRow(mu, float("nan"), f"{type(exc).__name__}: {exc}")

        if threads == 1:
            return [one(mu) for mu in mus]
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(one, mus))

    # -- serialization ----------------------------------------------------

    def _meta(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "n": self.n,
            "j": self.j,
            "c_norm": self.c_norm,
            "s": self.scale,
            "mu_ref": self.mu_ref,
            "eps": self.eps,
            "summary": self.summary,
        }

    def save(self, path) -> Path:
        """Write a ``.npz`` (binary) or ``.json`` container chosen by suffix."""
        path = Path(path)
        meta = self._meta()
        if path.suffix == ".json":
            meta["H"] = self.H.tolist()
            meta["Z_first"] = self.Z_first.tolist()
            path.write_text(json.dumps(meta))
        else:
            if path.suffix != ".npz":
                path = path.with_suffix(".npz")
            np.savez(path, H=self.H, Z_first=self.Z_first, meta=json.dumps(meta))
        return path

    @classmethod
    def load(cls, path) -> "ParameterizedSolution":
        path = Path(path)
        try:
            if path.suffix == ".json":
                meta = json.loads(path.read_text())
                H = np.array(meta.pop("H"), dtype=float).reshape(meta["j"] + 1, meta["j"])
                Z = np.array(meta.pop("Z_first"), dtype=float).reshape(meta["n"], meta["j"])
            else:
                with np.load(path) as data:
                    meta = json.loads(str(data["meta"]))
                    H, Z = data["H"], data["Z_first"]
        except (OSError, ValueError, KeyError) as exc:
            raise ValueError(f"cannot read solution container {path}: {exc}") from exc
        version = meta.get("format_version")
        if version != FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported format_version {version!r}")
        return cls(Z, H, meta["c_norm"], meta["s"], meta["mu_ref"], meta["eps"],
                   meta.get("summary", {}))


def write_sweep_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["mu", "rel_res"])
        for row in rows:
            w.writerow([repr(float(row.mu)), repr(float(row.rel_res))])
