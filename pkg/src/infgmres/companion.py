"""Structured action of the infinite companion operator on block vectors.

Vectors of the companion space are stored as their finitely many leading
``n``-blocks; everything past the last stored block is an implicit zero tail.
The operator ``M K^{-1}`` maps a vector with ``k`` active blocks to one with
``k + 1`` active blocks using ``k - 1`` sparse matvecs and a single solve with
(an approximation of) ``A_0``.
"""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

__all__ = [
    "BlockVector",
    "ShiftMatrixView",
    "BlockBasis",
    "KinvResult",
    "apply_Kinv",
    "shift_down",
    "apply_MKinv",
]


class BlockVector:
    """A companion-space vector: active blocks ``w_0, ..., w_{k-1}`` and a zero tail."""

    __slots__ = ("block_size", "data")

    def __init__(self, data, block_size: int):
        data = np.asarray(data, dtype=float).ravel()
        if block_size < 1:
            raise ValueError("block_size must be positive")
        if data.size % block_size:
            raise ValueError(
                f"length {data.size} is not a multiple of block_size {block_size}"
            )
        self.block_size = int(block_size)
        self.data = data

    @classmethod
    def from_blocks(cls, blocks) -> "BlockVector":
        blocks = [np.asarray(b, dtype=float).ravel() for b in blocks]
        if not blocks:
            raise ValueError("need at least one block")
        n = blocks[0].size
        if any(b.size != n for b in blocks):
            raise ValueError("blocks must share one size")
        return cls(np.concatenate(blocks), n)

    @property
    def num_blocks(self) -> int:
        return self.data.size // self.block_size

    @property
    def blocks(self) -> np.ndarray:
        """View of shape ``(num_blocks, block_size)``."""
        return self.data.reshape(self.num_blocks, self.block_size)

    def block(self, ell: int) -> np.ndarray:
        """Block ``ell``; zeros past the active part."""
        if ell < self.num_blocks:
            return self.blocks[ell]
        return np.zeros(self.block_size)

    def to_dense(self, num_blocks: int | None = None) -> np.ndarray:
        """Materialize the first ``num_blocks`` blocks (tail padded with exact zeros)."""
        if num_blocks is None:
            return self.data.copy()
        if num_blocks < self.num_blocks:
            raise ValueError(
                f"cannot truncate {self.num_blocks} active blocks to {num_blocks}"
            )
        out = np.zeros(num_blocks * self.block_size)
        out[: self.data.size] = self.data
        return out

    def norm(self) -> float:
        return float(np.linalg.norm(self.data))

    def __repr__(self) -> str:
        return f"BlockVector(n={self.block_size}, blocks={self.num_blocks})"


class ShiftMatrixView:
    """The selection ``W -> W D~^T`` that keeps blocks ``w_1 .. w_{m-1}`` of ``m + 1``.

    Never formed as a matrix; ``m_active + 1`` is the number of blocks it
    expects to see (missing trailing blocks are zeros).
    """

    def __init__(self, m_active: int):
        if m_active < 1:
            raise ValueError("m_active must be positive")
        self.m_active = int(m_active)

    def apply(self, blocks: np.ndarray) -> np.ndarray:
        # D~_1 := 0, i.e. an empty selection
        return blocks[1 : self.m_active]


class BlockBasis:
    """Columns of growing block length in one contiguous column-major buffer.

    Column ``k`` (0-based) has ``k + 1`` active blocks.  Rows below a column's
    active part are exact zeros, so dense products against the leading rows
    of the buffer equal the structured products.
    """

    def __init__(self, block_size: int, capacity: int = 8, first_block_only: bool = False):
        self.block_size = int(block_size)
        self.first_block_only = first_block_only
        self.count = 0
        self._lengths: list[int] = []
        cap = max(int(capacity), 1)
        rows = self.block_size if first_block_only else self.block_size * (cap + 1)
        self._buf = np.zeros((rows, cap), order="F")

    def _grow(self, need_rows: int, need_cols: int) -> None:
        rows, cols = self._buf.shape
        if need_rows <= rows and need_cols <= cols:
            return
        new_rows = rows
        while new_rows < need_rows:
            new_rows *= 2
        new_cols = cols
        while new_cols < need_cols:
            new_cols *= 2
        buf = np.zeros((new_rows, new_cols), order="F")
        buf[:rows, :cols] = self._buf
        self._buf = buf

    def append(self, vec: BlockVector) -> None:
        if vec.block_size != self.block_size:
            raise ValueError("block size mismatch")
        data = vec.data[: self.block_size] if self.first_block_only else vec.data
        self._grow(data.size, self.count + 1)
        self._buf[: data.size, self.count] = data
        self._lengths.append(vec.num_blocks)
        self.count += 1

    def column(self, k: int) -> BlockVector:
        if self.first_block_only:
            raise ValueError("only first blocks are stored")
        length = self._lengths[k] * self.block_size
        return BlockVector(self._buf[:length, k], self.block_size)

    def active_blocks(self, k: int) -> int:
        return self._lengths[k]

    def leading(self, num_rows: int, num_cols: int | None = None) -> np.ndarray:
        """View of the first ``num_rows`` rows and ``num_cols`` columns."""
        if num_cols is None:
            num_cols = self.count
        self._grow(num_rows, max(num_cols, 1))
        return self._buf[:num_rows, :num_cols]

    def first_blocks(self) -> np.ndarray:
        """The ``n x count`` matrix of first blocks (a copy)."""
        return np.array(self._buf[: self.block_size, : self.count])

    def to_dense(self, num_blocks: int | None = None) -> np.ndarray:
        if self.first_block_only:
            raise ValueError("only first blocks are stored")
        if num_blocks is None:
            num_blocks = max(self._lengths, default=0)
        out = np.zeros((num_blocks * self.block_size, self.count))
        for k in range(self.count):
            col = self.column(k).data
            out[: col.size, k] = col
        return out


class KinvResult(NamedTuple):
    z: BlockVector
    p_norm: float
    inner: object  # the inner solver's result record


def apply_Kinv(q: BlockVector, coeffs, inner, tol: float | None = None) -> KinvResult:
    """Inexact ``K^{-1} q`` on the active blocks of ``q``.

    Returns ``z`` with the same number of active blocks as ``q``: the first
    block is ``A0~^{-1}(w_0 - sum_{l>=1} A_l w_l)`` and the remaining blocks are
    copied from ``q``.  ``p_norm`` is the inner residual
    ``||A_0 w~ - (w_0 - sum A_l w_l)||`` recomputed with one extra matvec.
    """
    if q.num_blocks == 0:
        raise ValueError("block vector has no active blocks")
    if q.block_size != coeffs.n:
        raise ValueError(
            f"block size {q.block_size} does not match problem dimension {coeffs.n}"
        )
    W = q.blocks
    rhs = W[0].copy()
    for ell in range(1, q.num_blocks):
        rhs -= coeffs.coeff(ell) @ W[ell]
    result = inner.solve(rhs, tol)
    w = result.w
    p = coeffs.coeff(0) @ w - rhs
    z = np.empty_like(q.data)
    z[: q.block_size] = w
    z[q.block_size :] = ShiftMatrixView(q.num_blocks).apply(
        np.vstack([W, np.zeros((1, q.block_size))])
    ).ravel()
    return KinvResult(BlockVector(z, q.block_size), float(np.linalg.norm(p)), result)


def shift_down(z: BlockVector) -> BlockVector:
    """Action of ``M``: prepend one zero block."""
    out = np.zeros(z.data.size + z.block_size)
    out[z.block_size :] = z.data
    return BlockVector(out, z.block_size)


def apply_MKinv(q: BlockVector, coeffs, inner, tol: float | None = None):
    """``M K~^{-1} q``; returns ``(y, p_norm)`` where ``y`` has one more active block."""
    res = apply_Kinv(q, coeffs, inner, tol)
    return shift_down(res.z), res.p_norm
