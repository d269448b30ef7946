"""Predictor-based local subspace identification.

Two stages:

1. High-order regression of ``y(k)`` on the stacked past of the exogenous
   signal ``omega`` (``past_window`` samples), ridge-regularised on the
   Gram side. This yields the Markov parameters ``M_j`` (``j = 1..past``).
2. The Markov parameters are arranged into the product of the extended
   observability matrix over ``future_window`` steps and the past-to-state
   map (entries beyond the past window truncated to zero). Applied to the
   past data it gives ``Gamma_f x(k)``; a rank-``n`` SVD yields the state
   sequence up to an invertible similarity.

Valid range: with ``T`` samples, states exist for ``k = past, ..., T - future``,
i.e. ``T - past - future + 1`` samples. Every consumer uses :func:`valid_range`.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

AUTO = "auto"


class IllConditionedDataError(np.linalg.LinAlgError):
    def __init__(self, cond: float):
        super().__init__(f"ill-conditioned data matrix: Gram condition number {cond:.3e}")
        self.cond = cond


class HorizonTooShort(ValueError):
    pass


@dataclass(frozen=True)
class SimConfig:
    past_window: int = 15
    future_window: int = 10
    reg: float = 0.05
    order: Union[int, str] = AUTO
    max_order: Optional[int] = None
    cond_limit: float = 1e10

    def __post_init__(self):
        if not self.past_window >= self.future_window >= 1:
            raise ValueError("need past_window >= future_window >= 1")
        if self.reg < 0:
            raise ValueError("reg must be non-negative")
        if self.order != AUTO and (not isinstance(self.order, (int, np.integer)) or self.order < 1):
            raise ValueError(f"order must be a positive integer or {AUTO!r}")


@dataclass(frozen=True)
class StateEstimate:
    """State sequence ``Xhat`` (rows are time) starting at sample ``k_first``."""

    Xhat: np.ndarray
    singular_values: np.ndarray
    order_used: int
    k_first: int = 0
    markov: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def k_last(self) -> int:
        return self.k_first + self.Xhat.shape[0] - 1


def valid_range(T: int, cfg: SimConfig) -> tuple:
    """First and last sample index with a state estimate."""
    return cfg.past_window, T - cfg.future_window


def _as_series(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    return a[:, None] if a.ndim == 1 else a


def _past_stack(omega: np.ndarray, p: int, k_first: int, ncols: int) -> np.ndarray:
    # block row b holds omega(k - p + b), oldest first
    return np.vstack([omega[k_first - p + b:k_first - p + b + ncols].T for b in range(p)])


def build_data_matrices(omega, y, cfg: SimConfig) -> tuple:
    """Past-stacked regressor and future-stacked outputs over the valid range.

    Column ``j`` corresponds to sample ``k = past + j``: the regressor holds
    ``omega(k - past), ..., omega(k - 1)`` and the output matrix
    ``y(k), ..., y(k + future - 1)``.
    """
    omega, y = _as_series(omega), _as_series(y)
    T = y.shape[0]
    p, f = cfg.past_window, cfg.future_window
    if omega.shape[0] != T:
        raise ValueError(f"omega has {omega.shape[0]} samples, y has {T}")
    if T < p + f:
        raise HorizonTooShort(f"need at least {p + f} samples, got {T}")
    ncols = T - p - f + 1
    Zp = _past_stack(omega, p, p, ncols)
    Yf = np.vstack([y[p + a:p + a + ncols].T for a in range(f)])
    return Zp, Yf


def ridge_solve(Z: np.ndarray, Y: np.ndarray, reg: float, cond_limit: float = 1e10) -> np.ndarray:
    """``argmin ||Y - W Z||^2 / L + reg ||W||^2`` for ``L`` data columns.

    With ``reg = 0`` this is ordinary least squares via the normal equations.
    """
    L = Z.shape[1]
    G = Z @ Z.T / L
    rhs = Y @ Z.T / L
    if reg == 0:
        ev = np.linalg.eigvalsh(G)
        cond = np.inf if ev[0] <= 0 else ev[-1] / ev[0]
        if cond > cond_limit:
            raise IllConditionedDataError(cond)
    else:
        G = G + reg * np.eye(G.shape[0])
    return np.linalg.solve(G, rhs.T).T


def estimate_markov(omega, y, cfg: SimConfig) -> np.ndarray:
    """Markov parameters ``[M_past, ..., M_1]`` as one block row.

    Column block ``b`` multiplies ``omega(k - past + b)`` in the prediction of
    ``y(k)``, so the last block is ``M_1`` (one-step delay). All samples with a
    full past window are used.
    """
    omega, y = _as_series(omega), _as_series(y)
    p = cfg.past_window
    T = y.shape[0]
    if T < p + cfg.future_window:
        raise HorizonTooShort(f"need at least {p + cfg.future_window} samples, got {T}")
    ncols = T - p
    Z = _past_stack(omega, p, p, ncols)
    return ridge_solve(Z, y[p:].T, cfg.reg, cfg.cond_limit)


def markov_blocks(theta: np.ndarray, past: int) -> list:
    """Split the block row into ``[M_1, ..., M_past]``."""
    q = theta.shape[1] // past
    return [theta[:, (past - j) * q:(past - j + 1) * q] for j in range(1, past + 1)]


def predictor_product(theta: np.ndarray, cfg: SimConfig) -> np.ndarray:
    """Extended observability times past-to-state map, built from Markov parameters.

    Block ``(a, b)`` is ``M_{a + past - b}`` for ``b >= a`` and zero otherwise.
    """
    p, f = cfg.past_window, cfg.future_window
    r, pq = theta.shape
    q = pq // p
    M = markov_blocks(theta, p)
    H = np.zeros((f * r, pq))
    for a in range(f):
        for b in range(a, p):
            H[a * r:(a + 1) * r, b * q:(b + 1) * q] = M[a + p - b - 1]
    return H


def order_select(singular_values, mode: Union[int, str] = AUTO,
                 max_order: Optional[int] = None, min_order: int = 1) -> int:
    """Model order from a singular-value spectrum.

    ``AUTO`` picks the index ``i`` (between ``min_order`` and ``max_order``)
    maximising ``s_i / s_{i+1}``; an integer ``mode`` is returned unchanged.
    """
    s = np.asarray(singular_values, dtype=float)
    if s.size == 0:
        raise ValueError("empty singular-value spectrum")
    if mode != AUTO:
        return int(mode)
    if s.size < 2:
        raise ValueError("automatic order selection needs at least two singular values")
    hi = s.size - 1 if max_order is None else min(max_order, s.size - 1)
    cand = np.arange(min_order, hi + 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = s[cand - 1] / s[cand]
    ratios = np.where(np.isnan(ratios), 0.0, ratios)
    return int(cand[np.argmax(ratios)])


def _fix_signs(U: np.ndarray) -> np.ndarray:
    # largest-magnitude entry of each singular vector made positive
    idx = np.argmax(np.abs(U), axis=0)
    signs = np.sign(U[idx, np.arange(U.shape[1])])
    signs[signs == 0] = 1.0
    return signs


def estimate_state_sequence(omega, y, cfg: SimConfig, fix_signs: bool = True) -> StateEstimate:
    """Local state sequence, up to an invertible similarity.

    Raises
    ------
    IllConditionedDataError
        From the Markov-parameter regression when ``reg = 0``.
    ValueError
        If the requested order exceeds the number of positive singular values.
    """
    omega, y = _as_series(omega), _as_series(y)
    theta = estimate_markov(omega, y, cfg)
    Zp, _ = build_data_matrices(omega, y, cfg)
    Phi = predictor_product(theta, cfg) @ Zp
    U, s, _ = np.linalg.svd(Phi, full_matrices=False)
    n = order_select(s, cfg.order, cfg.max_order)
    positive = int(np.sum(s > s[0] * 1e-14)) if s[0] > 0 else 0
    if n > s.size or (positive and n > positive):
        raise ValueError(f"order {n} exceeds the {positive} positive singular values")
    Un = U[:, :n]
    if fix_signs:
        Un = Un * _fix_signs(Un)
    Xhat = (Un.T @ Phi).T
    return StateEstimate(Xhat, s, n, cfg.past_window, theta)


def spectrum_csv(singular_values, path) -> None:
    s = np.asarray(singular_values)
    np.savetxt(path, np.column_stack([np.arange(1, s.size + 1), s]), delimiter=",",
               header="index,value", comments="", fmt=["%d", "%.17g"])
