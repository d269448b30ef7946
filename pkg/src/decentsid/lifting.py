"""Temporal/spatial lifting of chain signals and the structured lifted matrices.

Classical lifting stacks the global signal over time (time-major). Lifting
each subsystem's signal over time first and then stacking subsystems
(space-major) turns the lifted observability, impulse-response and
controllability matrices into block-banded matrices. The two orderings are
related by fixed permutations, stored here as index maps.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .banded import BlockBandedMatrix
from .lti import DataSet, GlobalModel

KINDS = ("output", "input", "noise")


@dataclass(frozen=True)
class LiftedSignal:
    origin: str
    i: int
    window: tuple
    stacked: np.ndarray


def _window(kind: str, k: int, p: int) -> tuple:
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}, got {kind!r}")
    return (k - p, k - 1) if kind == "input" else (k - p, k)


def lift_time(series, k: int, p: int, kind: str = "output", i: int = 0) -> LiftedSignal:
    """Stack one subsystem's samples over ``[k-p, k]`` (``[k-p, k-1]`` for inputs).

    ``series`` is shaped ``(T, channels)``; samples are stacked in ascending time.
    """
    series = np.asarray(series, dtype=float)
    if series.ndim == 1:
        series = series[:, None]
    lo, hi = _window(kind, k, p)
    if lo < 0 or k >= series.shape[0]:
        raise IndexError(f"window [{lo}, {hi}] leaves the horizon [0, {series.shape[0] - 1}]")
    return LiftedSignal(kind, i, (lo, hi), series[lo:hi + 1].ravel())


def lift_space_major(data, k: int, p: int, kind: str = "output") -> np.ndarray:
    """``col(lifted_1, ..., lifted_N)`` from an array shaped ``(T, N, channels)``."""
    data = np.asarray(data, dtype=float)
    lo, hi = _window(kind, k, p)
    if lo < 0 or k >= data.shape[0]:
        raise IndexError(f"window [{lo}, {hi}] leaves the horizon")
    return data[lo:hi + 1].transpose(1, 0, 2).ravel()


def lift_time_major(data, k: int, p: int, kind: str = "output") -> np.ndarray:
    """``col(s(k-p), ..., s(k))`` of the global signal (classical lifting)."""
    data = np.asarray(data, dtype=float)
    lo, hi = _window(kind, k, p)
    if lo < 0 or k >= data.shape[0]:
        raise IndexError(f"window [{lo}, {hi}] leaves the horizon")
    return data[lo:hi + 1].ravel()


def _time_to_space(N: int, steps: int, width: int) -> np.ndarray:
    # space-major position (i, t, c) reads time-major position (t, i, c)
    i, t, c = np.meshgrid(np.arange(N), np.arange(steps), np.arange(width), indexing="ij")
    return (t * N * width + i * width + c).ravel()


@dataclass(frozen=True)
class Permutation:
    """Permutation ``P`` stored as an index map: ``(P v)[a] = v[index[a]]``."""

    index: np.ndarray

    def apply(self, v):
        return np.asarray(v)[self.index]

    def apply_transpose(self, v):
        v = np.asarray(v)
        out = np.empty_like(v)
        out[self.index] = v
        return out

    def is_bijection(self) -> bool:
        return np.array_equal(np.sort(self.index), np.arange(self.index.size))

    def dense(self) -> np.ndarray:
        P = np.zeros((self.index.size, self.index.size))
        P[np.arange(self.index.size), self.index] = 1.0
        return P


@dataclass(frozen=True)
class PermutationPair:
    P_Y: Permutation
    P_U: Permutation


def build_permutations(N: int, p: int, r: int, m: int) -> PermutationPair:
    """Index maps from time-major to space-major stacking of outputs and inputs."""
    if min(N, r, m) < 1 or p < 0:
        raise ValueError("N, r, m must be positive and p non-negative")
    return PermutationPair(
        Permutation(_time_to_space(N, p + 1, r)),
        Permutation(_time_to_space(N, p, m)),
    )


def classical_lifted_matrices(model: GlobalModel, p: int):
    """Dense ``O_p``, ``G_{p-1}`` and ``R_{p-1}`` in time-major ordering."""
    A, B, C = model.A, model.B, model.C
    N, n, m, r = model.N, model.n, model.m, model.r
    powers = [np.eye(N * n)]
    for _ in range(p):
        powers.append(A @ powers[-1])
    O = np.vstack([C @ Ap for Ap in powers])
    G = np.zeros(((p + 1) * N * r, p * N * m))
    for t in range(p + 1):
        for s in range(t):
            G[t * N * r:(t + 1) * N * r, s * N * m:(s + 1) * N * m] = C @ powers[t - s - 1] @ B
    R = np.hstack([powers[p - 1 - s] @ B for s in range(p)]) if p else np.zeros((N * n, 0))
    return O, G, R


@dataclass(frozen=True)
class StructuredMatrices:
    O_classical: np.ndarray
    O: BlockBandedMatrix
    G: BlockBandedMatrix
    R: BlockBandedMatrix
    perms: PermutationPair


def structured_lifted_matrices(model: GlobalModel, p: int) -> StructuredMatrices:
    """Permuted, block-banded observability/impulse/controllability matrices.

    ``O`` has block bandwidth ``p`` and ``G``, ``R`` have ``p - 1``; packing
    fails loudly if any block outside those bands is nonzero.
    """
    if p < 1:
        raise ValueError("lifting depth p must be at least 1")
    N, n, m, r = model.N, model.n, model.m, model.r
    perms = build_permutations(N, p, r, m)
    O, G, R = classical_lifted_matrices(model, p)
    O_s = O[perms.P_Y.index]
    G_s = G[perms.P_Y.index][:, perms.P_U.index]
    R_s = R[:, perms.P_U.index]
    return StructuredMatrices(
        O_classical=O,
        O=BlockBandedMatrix.from_dense(O_s, ((p + 1) * r, n), min(p, N - 1)),
        G=BlockBandedMatrix.from_dense(G_s, ((p + 1) * r, p * m), min(p - 1, N - 1)),
        R=BlockBandedMatrix.from_dense(R_s, (n, p * m), min(p - 1, N - 1)),
        perms=perms,
    )


def data_equation_residual(mats: StructuredMatrices, data: DataSet, k: int, p: int) -> np.ndarray:
    """``Y_lift - O x(k-p) - G U_lift`` for one time index (zero without noise)."""
    Yl = lift_space_major(data.Y, k, p, "output")
    Ul = lift_space_major(data.U, k, p, "input")
    x = data.X[k - p].ravel()
    return Yl - mats.O.matvec(x) - mats.G.matvec(Ul)
