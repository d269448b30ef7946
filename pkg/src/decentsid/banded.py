"""Block-banded matrices on an ``N x N`` block grid.

Only blocks with ``|i - j| <= bandwidth`` are stored, each as a dense
``(row_size, col_size)`` array.
"""
from __future__ import annotations

import csv

import numpy as np


class BandwidthError(ValueError):
    """A block outside the declared band is nonzero."""


class BlockBandedMatrix:
    """Square block grid with dense in-band blocks.

    Storage is ``data[i, d]`` for block ``(i, i + d - bw)``; slots that fall
    outside the grid are kept at zero.
    """

    def __init__(self, data: np.ndarray, bandwidth: int):
        data = np.asarray(data, dtype=float)
        if data.ndim != 4 or data.shape[1] != 2 * bandwidth + 1:
            raise ValueError(f"bad banded storage shape {data.shape} for bandwidth {bandwidth}")
        self.data = data
        self.bandwidth = bandwidth

    @property
    def nblocks(self) -> int:
        return self.data.shape[0]

    @property
    def block_shape(self) -> tuple:
        return self.data.shape[2:]

    @property
    def shape(self) -> tuple:
        br, bc = self.block_shape
        return (self.nblocks * br, self.nblocks * bc)

    @classmethod
    def zeros(cls, nblocks, block_shape, bandwidth):
        return cls(np.zeros((nblocks, 2 * bandwidth + 1) + tuple(block_shape)), bandwidth)

    @classmethod
    def from_dense(cls, M, block_shape, bandwidth: int, atol: float = 0.0):
        """Pack a dense matrix, checking that out-of-band blocks vanish."""
        M = np.asarray(M, dtype=float)
        br, bc = block_shape
        N = M.shape[0] // br
        if M.shape != (N * br, N * bc):
            raise ValueError(f"matrix {M.shape} is not an {N}x{N} grid of {block_shape} blocks")
        blocks = M.reshape(N, br, N, bc).transpose(0, 2, 1, 3)
        out = cls.zeros(N, block_shape, bandwidth)
        for i in range(N):
            for j in range(N):
                d = j - i
                if abs(d) <= bandwidth:
                    out.data[i, d + bandwidth] = blocks[i, j]
                elif np.abs(blocks[i, j]).max(initial=0.0) > atol:
                    raise BandwidthError(
                        f"block ({i}, {j}) lies outside bandwidth {bandwidth} but is nonzero"
                    )
        return out

    def block(self, i: int, j: int) -> np.ndarray:
        d = j - i
        if abs(d) > self.bandwidth:
            return np.zeros(self.block_shape)
        return self.data[i, d + self.bandwidth]

    def to_dense(self) -> np.ndarray:
        N, bw = self.nblocks, self.bandwidth
        br, bc = self.block_shape
        M = np.zeros((N, br, N, bc))
        for i in range(N):
            for d in range(-bw, bw + 1):
                j = i + d
                if 0 <= j < N:
                    M[i, :, j, :] = self.data[i, d + bw]
        return M.reshape(N * br, N * bc)

    @property
    def T(self) -> "BlockBandedMatrix":
        N, bw = self.nblocks, self.bandwidth
        out = BlockBandedMatrix.zeros(N, self.block_shape[::-1], bw)
        for i in range(N):
            for d in range(-bw, bw + 1):
                j = i + d
                if 0 <= j < N:
                    out.data[j, -d + bw] = self.data[i, d + bw].T
        return out

    def matvec(self, x: np.ndarray) -> np.ndarray:
        """``M @ x`` for a vector or a matrix of column vectors."""
        x = np.asarray(x, dtype=float)
        N, bw = self.nblocks, self.bandwidth
        br, bc = self.block_shape
        xb = x.reshape((N, bc) + x.shape[1:])
        out = np.zeros((N, br) + x.shape[1:])
        for i in range(N):
            for d in range(-bw, bw + 1):
                j = i + d
                if 0 <= j < N:
                    out[i] += self.data[i, d + bw] @ xb[j]
        return out.reshape((N * br,) + x.shape[1:])

    def matmul(self, other: "BlockBandedMatrix") -> "BlockBandedMatrix":
        """Band-aware product; the result has bandwidth ``bw_self + bw_other``."""
        if self.nblocks != other.nblocks or self.block_shape[1] != other.block_shape[0]:
            raise ValueError("incompatible block grids")
        N = self.nblocks
        a, b = self.bandwidth, other.bandwidth
        bw = min(a + b, N - 1)
        out = BlockBandedMatrix.zeros(N, (self.block_shape[0], other.block_shape[1]), bw)
        for i in range(N):
            for da in range(-a, a + 1):
                l = i + da
                if not 0 <= l < N:
                    continue
                for db in range(-b, b + 1):
                    j = l + db
                    if 0 <= j < N and abs(j - i) <= bw:
                        out.data[i, j - i + bw] += self.data[i, da + a] @ other.data[l, db + b]
        return out

    def gram(self) -> "BlockBandedMatrix":
        """``M.T @ M`` computed band-aware."""
        return self.T.matmul(self)

    def actual_bandwidth(self, atol: float = 0.0) -> int:
        """Largest block offset that holds a nonzero block."""
        N, bw = self.nblocks, self.bandwidth
        widest = 0
        for i in range(N):
            for d in range(-bw, bw + 1):
                j = i + d
                if 0 <= j < N and np.abs(self.data[i, d + bw]).max(initial=0.0) > atol:
                    widest = max(widest, abs(d))
        return widest

    def dump_csv(self, path) -> None:
        """Debug dump: one row per stored in-grid block."""
        N, bw = self.nblocks, self.bandwidth
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["block_row", "block_col", "values"])
            for i in range(N):
                for d in range(-bw, bw + 1):
                    j = i + d
                    if 0 <= j < N:
                        vals = " ".join(repr(float(v)) for v in self.data[i, d + bw].ravel())
                        w.writerow([i, j, vals])

    def __repr__(self):
        return (f"BlockBandedMatrix(nblocks={self.nblocks}, block_shape={self.block_shape}, "
                f"bandwidth={self.bandwidth})")
