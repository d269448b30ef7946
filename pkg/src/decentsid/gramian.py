"""Finite-time observability Gramian of a chain model and its banded inverse.

The Gramian ``J = O_p^T O_p`` of the structured observability matrix is
block-banded (block bandwidth ``2p``). Its inverse ``D`` is dense but its
entries decay exponentially away from the diagonal, so ``D`` is well
approximated by a band truncation. Everything here is dense at desk scale.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg

from .banded import BlockBandedMatrix
from .lifting import StructuredMatrices, lift_space_major, structured_lifted_matrices
from .lti import DataSet, GlobalModel

RANK_SAFETY = 100.0


class RankDeficientGramian(np.linalg.LinAlgError):
    """The Gramian is singular to working precision (``p`` below the observability index)."""

    def __init__(self, rank: int, size: int):
        super().__init__(f"rank-deficient Gramian: numerical rank {rank} of {size}")
        self.rank = rank
        self.size = size


def numerical_rank(s: np.ndarray, shape: tuple, safety: float = RANK_SAFETY) -> int:
    """Count singular values above ``safety * eps * s_max * max(shape)``."""
    if s.size == 0 or s[0] == 0:
        return 0
    tol = safety * np.finfo(float).eps * s[0] * max(shape)
    return int(np.sum(s > tol))


@dataclass(frozen=True)
class GramianBundle:
    J: np.ndarray
    J_banded: BlockBandedMatrix
    D: np.ndarray
    kappa: float
    g: int
    p: int
    n: int
    N: int
    mats: StructuredMatrices


@dataclass(frozen=True)
class RankReport:
    rank: int
    full: bool
    nu_estimate: Optional[int]
    rank_classical: int


@dataclass(frozen=True)
class DecayEnvelope:
    c: float
    lam: float

    def bound(self, distance):
        return self.c * self.lam ** np.asarray(distance, dtype=float)


def observability_rank_check(model: GlobalModel, p: int, safety: float = RANK_SAFETY) -> RankReport:
    """Numerical rank of the structured observability matrix, and the observability index.

    ``nu_estimate`` is the smallest depth ``p' <= p`` with full column rank,
    or ``None`` if rank ``N*n`` is not reached.
    """
    if p < 1:
        raise ValueError("p must be at least 1")
    size = model.N * model.n
    mats = structured_lifted_matrices(model, p)
    O_s = mats.O.to_dense()
    rank = numerical_rank(np.linalg.svd(O_s, compute_uv=False), O_s.shape, safety)
    rank_c = numerical_rank(
        np.linalg.svd(mats.O_classical, compute_uv=False), mats.O_classical.shape, safety
    )
    nu = None
    A, C = model.A, model.C
    blocks = [C]
    for q in range(p + 1):
        if q > 0:
            blocks.append(blocks[-1] @ A)
        Oq = np.vstack(blocks)
        if numerical_rank(np.linalg.svd(Oq, compute_uv=False), Oq.shape, safety) == size:
            nu = q
            break
    return RankReport(rank, rank == size, nu, rank_c)


def scalar_bandwidth(p: int, n: int) -> int:
    """Entrywise half-bandwidth of a matrix with block bandwidth ``2p`` and ``n x n`` blocks."""
    return 2 * p * n + (n - 1)


def finite_time_gramian(model: GlobalModel, p: int, safety: float = RANK_SAFETY) -> GramianBundle:
    """Gramian ``J``, its inverse ``D`` and condition number ``kappa``.

    Raises
    ------
    RankDeficientGramian
        If ``J`` is singular to working precision.
    """
    mats = structured_lifted_matrices(model, p)
    J_b = mats.O.gram()
    J = J_b.to_dense()
    J = 0.5 * (J + J.T)
    size = J.shape[0]
    ev = np.linalg.eigvalsh(J)
    # eigenvalues of J are squared singular values of O
    sv = np.sqrt(np.clip(ev[::-1], 0.0, None))
    rank = numerical_rank(sv, mats.O.shape, safety)
    if rank < size:
        raise RankDeficientGramian(rank, size)
    try:
        factor = scipy.linalg.cho_factor(J, lower=True)
    except np.linalg.LinAlgError:
        raise RankDeficientGramian(rank - 1, size) from None
    D = scipy.linalg.cho_solve(factor, np.eye(size))
    D = 0.5 * (D + D.T)
    kappa = float(ev[-1] / ev[0])
    return GramianBundle(J, J_b, D, kappa, scalar_bandwidth(p, model.n), p,
                         model.n, model.N, mats)


def decay_envelope(bundle: GramianBundle) -> DecayEnvelope:
    """Constants ``(c, lambda)`` of the exponential off-diagonal bound on ``D``."""
    kappa = bundle.kappa
    if not kappa >= 1.0:
        raise ValueError(f"condition number {kappa} < 1 signals an upstream numerical failure")
    sk = np.sqrt(kappa)
    lam = ((sk - 1.0) / (sk + 1.0)) ** (1.0 / bundle.g)
    norm_D = float(np.linalg.eigvalsh(bundle.J)[0]) ** -1
    c = norm_D * max(1.0, (1.0 + sk) ** 2 / (2.0 * kappa))
    return DecayEnvelope(c, float(lam))


def band_truncate(D: np.ndarray, s: int) -> np.ndarray:
    """Keep entries with ``|i - j| <= s``; zero the rest."""
    if s < 0:
        raise ValueError("half-bandwidth must be non-negative")
    i, j = np.indices(D.shape)
    return np.where(np.abs(i - j) <= s, D, 0.0)


def band_truncate_blocks(D: np.ndarray, n: int, t: int) -> BlockBandedMatrix:
    """Truncation with ``s = n*t`` viewed as block-banded with block bandwidth ``t``."""
    N = D.shape[0] // n
    return BlockBandedMatrix.from_dense(band_truncate(D, n * t), (n, n), min(t, N - 1))


def truncation_bound(env: DecayEnvelope, s: int, N: int, n: int) -> tuple:
    """``(k1, c*k1)`` bounding the 1-norm error of a half-bandwidth-``s`` truncation."""
    lam = env.lam
    if lam >= 1.0:
        raise ValueError("decay rate 1: the Gramian is too ill-conditioned for a bound")
    k1 = 2.0 * lam ** (s + 1) * (1.0 - lam ** (N * n - s)) / (1.0 - lam)
    return k1, env.c * k1


def reconstruct_state(model: GlobalModel, data: DataSet, p: int, k, t: Optional[int] = None,
                      bundle: Optional[GramianBundle] = None) -> np.ndarray:
    """Reconstruct the global state ``x(k)`` from the lifted data window ending at ``k``.

    With ``t=None`` the exact Gramian inverse is used; otherwise its
    truncation to block half-bandwidth ``t``. The measurement-noise term is
    taken as zero. ``k`` may be a scalar or a sequence; for a sequence the
    states are returned as rows.
    """
    bundle = finite_time_gramian(model, p) if bundle is None else bundle
    mats = bundle.mats
    D = bundle.D if t is None else band_truncate(bundle.D, model.n * t)
    ks = np.atleast_1d(k)
    if ks.min() < p or ks.max() >= data.T:
        raise IndexError(f"k must lie in [{p}, {data.T - 1}]")
    Yl = np.column_stack([lift_space_major(data.Y, kk, p, "output") for kk in ks])
    Ul = np.column_stack([lift_space_major(data.U, kk, p, "input") for kk in ks])
    OT = mats.O.T
    rhs = OT.matvec(Yl) - OT.matvec(mats.G.matvec(Ul))
    x = D @ rhs
    A = model.A_sparse
    for _ in range(p):
        x = A @ x
    x = x + mats.R.matvec(Ul)
    return x[:, 0] if np.ndim(k) == 0 else x.T
