"""Decentralised identification of a chain model from local data.

For every subsystem ``i`` a neighbourhood input vector ``Omega_i(k)`` is
assembled from nearby (lifted) outputs and inputs, the local state sequence
is estimated with the subspace engine, and the local matrices follow from a
least-squares fit of the local state and output equations, with the
neighbours' estimated states as regressors.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence, Union

import numpy as np

from .lti import DataSet, GlobalModel, LocalModel
from .subspace import SimConfig, StateEstimate, estimate_state_sequence

log = logging.getLogger(__name__)

GENERAL = "general"
VARIANTS = (1, 2, 3, 4, 5, GENERAL)


class RankDeficientRegressor(np.linalg.LinAlgError):
    def __init__(self, cond: float):
        super().__init__(f"rank-deficient regressor: condition number {cond:.3e}")
        self.cond = cond


class IdentificationError(RuntimeError):
    """Some subsystems failed; ``partial`` keeps whatever was estimated."""

    def __init__(self, failures: dict, partial: dict):
        lines = "; ".join(f"subsystem {i}: {e}" for i, e in sorted(failures.items()))
        super().__init__(f"identification failed for {len(failures)} subsystem(s): {lines}")
        self.failures = failures
        self.partial = partial


@dataclass(frozen=True)
class OmegaSpec:
    """Which neighbourhood signals feed the local subspace step.

    Variants 1-5 are fixed catalogue entries (written for subsystem ``i``;
    variants 4 and 5 use a radius-4 neighbourhood). ``GENERAL`` uses lifted
    outputs of depth ``p`` within radius ``1 + 2p + t`` and lifted inputs
    within radius ``3p + t``, plus the local input ``u_i(k)``. ``t`` may be a
    mapping or sequence giving a per-subsystem value.
    """

    variant: Union[int, str] = 2
    p: int = 1
    t: Union[int, Sequence[int], Mapping[int, int]] = 0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.p < 1:
            raise ValueError("p must be at least 1")

    def t_for(self, i: int) -> int:
        t = self.t
        if isinstance(t, Mapping):
            return int(t[i])
        if isinstance(t, (list, tuple, np.ndarray)):
            return int(t[i - 1])
        return int(t)

    def output_radius(self, i: int) -> int:
        return 1 + 2 * self.p + self.t_for(i)

    def input_radius(self, i: int) -> int:
        return 3 * self.p + self.t_for(i)

    @property
    def max_lag(self) -> int:
        if self.variant in (1, 2):
            return 0
        if self.variant == GENERAL:
            return self.p
        return 1


def omega_components(i: int, N: int, spec: OmegaSpec) -> list:
    """Ordered ``(signal, subsystem, lag)`` triples making up ``Omega_i(k)``.

    Subsystems are 1-based; neighbours outside ``1..N`` are dropped.
    """
    def hood(radius):
        return [j for j in range(i - radius, i + radius + 1) if 1 <= j <= N]

    v = spec.variant
    if v == 1:
        return [("u", i, 0)]
    if v == 2:
        return [("y", j, 0) for j in hood(1)] + [("u", i, 0)]
    if v in (3, 4, 5):
        radius = 1 if v == 3 else 4
        if v == 4:
            outs = [("y", j, 1) for j in hood(radius)]
        else:
            outs = [(("y", j, lag)) for j in hood(radius) for lag in (1, 0)]
        return outs + [("u", i, 0)] + [("u", j, 1) for j in hood(radius)]
    p = spec.p
    outs = [("y", j, lag) for j in hood(spec.output_radius(i)) for lag in range(p, -1, -1)]
    ins = [("u", j, lag) for j in hood(spec.input_radius(i)) for lag in range(p, 0, -1)]
    return outs + ins + [("u", i, 0)]


def local_input_series(i: int, data: DataSet, spec: OmegaSpec) -> tuple:
    """``(k_first, omega)`` with ``omega[k - k_first] = Omega_i(k)`` for all valid ``k``."""
    if not 1 <= i <= data.N:
        raise IndexError(f"subsystem {i} outside 1..{data.N}")
    L = spec.max_lag
    T = data.T
    parts = []
    for sig, j, lag in omega_components(i, data.N, spec):
        src = data.Y if sig == "y" else data.U
        parts.append(src[L - lag:T - lag, j - 1, :])
    return L, np.hstack(parts)


def build_local_input(i: int, data: DataSet, spec: OmegaSpec, k: int) -> np.ndarray:
    """``Omega_i(k)`` for one sample."""
    L = spec.max_lag
    if not L <= k < data.T:
        raise IndexError(f"k={k} outside the valid range [{L}, {data.T - 1}]")
    parts = []
    for sig, j, lag in omega_components(i, data.N, spec):
        src = data.Y if sig == "y" else data.U
        parts.append(src[k - lag, j - 1, :])
    return np.concatenate(parts)


def identify_local_state(i: int, data: DataSet, spec: OmegaSpec, cfg: SimConfig) -> StateEstimate:
    """Steps 1-2 for one subsystem. ``k_first`` of the result is an absolute sample index."""
    k0, omega = local_input_series(i, data, spec)
    est = estimate_state_sequence(omega, data.Y[k0:, i - 1, :], cfg)
    return StateEstimate(est.Xhat, est.singular_values, est.order_used,
                         est.k_first + k0, est.markov)


def _ols(Z: np.ndarray, W: np.ndarray, cond_limit: float) -> np.ndarray:
    """``Theta`` minimising ``||W - Theta Z||``; rows of ``Z`` are regressors."""
    s = np.linalg.svd(Z, compute_uv=False)
    cond = np.inf if s[-1] == 0 else s[0] / s[-1]
    if cond > cond_limit:
        raise RankDeficientRegressor(cond)
    return np.linalg.lstsq(Z.T, W.T, rcond=None)[0].T


def fit_local_matrices(xhat_prev, xhat_i, xhat_next, u_i, y_i,
                       cond_limit: float = 1e10) -> LocalModel:
    """Least-squares fit of one subsystem's matrices from aligned sequences.

    All arguments are shaped ``(K, .)`` over a common time range; pass
    ``None`` for a missing neighbour. The state equation uses samples
    ``0..K-2`` as regressors for ``1..K-1``; the output equation uses all
    ``K`` samples. No regularisation.
    """
    X = np.asarray(xhat_i, dtype=float)
    U = np.asarray(u_i, dtype=float).reshape(X.shape[0], -1)
    Y = np.asarray(y_i, dtype=float).reshape(X.shape[0], -1)
    n, m = X.shape[1], U.shape[1]
    regs = [X[:-1]]
    if xhat_prev is not None:
        regs.append(np.asarray(xhat_prev, dtype=float)[:-1])
    if xhat_next is not None:
        regs.append(np.asarray(xhat_next, dtype=float)[:-1])
    regs.append(U[:-1])
    Z = np.hstack(regs).T
    if Z.shape[1] < Z.shape[0] + 1:
        raise ValueError(f"{Z.shape[1]} samples cannot determine {Z.shape[0]} regressors")
    Theta = _ols(Z, X[1:].T, cond_limit)
    C = _ols(X.T, Y.T, cond_limit)
    A = Theta[:, :n]
    col = n
    El = Er = None
    if xhat_prev is not None:
        El = Theta[:, col:col + n]
        col += n
    if xhat_next is not None:
        Er = Theta[:, col:col + n]
        col += n
    B = Theta[:, col:col + m]
    return LocalModel(A, B, C, El, Er)


def _common_range(estimates) -> tuple:
    lo = max(e.k_first for e in estimates)
    hi = min(e.k_last for e in estimates)
    if hi - lo < 2:
        raise ValueError("state estimates do not overlap")
    return lo, hi


def _window(e: StateEstimate, lo: int, hi: int) -> np.ndarray:
    return e.Xhat[lo - e.k_first:hi - e.k_first + 1]


def fit_subsystem(i: int, states: Mapping[int, StateEstimate], data: DataSet) -> LocalModel:
    """Step 3 for subsystem ``i`` given estimated states of ``i`` and its neighbours."""
    N = data.N
    prev = states.get(i - 1) if i > 1 else None
    nxt = states.get(i + 1) if i < N else None
    if (i > 1 and prev is None) or (i < N and nxt is None):
        raise KeyError(f"subsystem {i} needs its neighbours' state estimates")
    used = [e for e in (prev, states[i], nxt) if e is not None]
    lo, hi = _common_range(used)
    return fit_local_matrices(
        None if prev is None else _window(prev, lo, hi),
        _window(states[i], lo, hi),
        None if nxt is None else _window(nxt, lo, hi),
        data.U[lo:hi + 1, i - 1, :],
        data.Y[lo:hi + 1, i - 1, :],
    )


def fit_similarity(A_to, B_to, C_to, A_from, B_from, C_from) -> np.ndarray:
    """``S`` minimising the residual of ``A_to S = S A_from``, ``C_to S = C_from``, ``S B_from = B_to``.

    If both triples realise one system, ``xhat_to = S xhat_from``.
    """
    A_to, A_from = np.asarray(A_to), np.asarray(A_from)
    B_to, B_from = np.atleast_2d(B_to), np.atleast_2d(B_from)
    C_to, C_from = np.atleast_2d(C_to), np.atleast_2d(C_from)
    n = A_to.shape[0]
    I = np.eye(n)
    # column-major vec: vec(X S Y) = (Y^T kron X) vec(S)
    rows = [np.kron(I, A_to) - np.kron(A_from.T, I),
            np.kron(I, C_to),
            np.kron(B_from.T, I)]
    rhs = [np.zeros(n * n), C_from.ravel(order="F"), B_to.ravel(order="F")]
    vecS = np.linalg.lstsq(np.vstack(rows), np.concatenate(rhs), rcond=None)[0]
    return vecS.reshape(n, n, order="F")


@dataclass
class IdentifiedGlobal:
    model: GlobalModel
    locals_hat: dict
    states: dict = field(repr=False)
    provenance: dict

    def to_json(self) -> dict:
        out = self.model.to_json()
        out["provenance"] = self.provenance
        return out


def _estimate_states(indices, data, spec, cfg, failures, states):
    for i in indices:
        try:
            states[i] = identify_local_state(i, data, spec, cfg)
        except (np.linalg.LinAlgError, ValueError) as exc:
            log.debug("state estimation failed for subsystem %d: %s", i, exc)
            failures[i] = exc


def run_algorithm1(data: DataSet, spec: OmegaSpec, cfg: SimConfig,
                   share_model: bool = False, provenance: Optional[dict] = None) -> IdentifiedGlobal:
    """Identify the global chain model from local data.

    With ``share_model`` all subsystems are assumed identical: only subsystems
    1-3 are identified, the interior estimate is moved to a common coordinate
    frame and replicated along the chain.

    Raises
    ------
    IdentificationError
        If any subsystem fails; carries the per-subsystem errors and partial results.
    """
    N = data.N
    prov = {"variant": spec.variant, "p": spec.p, "t": spec.t,
            "past_window": cfg.past_window, "future_window": cfg.future_window,
            "reg": cfg.reg, "order": cfg.order, "share_model": share_model}
    prov.update(provenance or {})
    failures, states, locals_hat = {}, {}, {}

    if share_model and N >= 3:
        _estimate_states((1, 2, 3), data, spec, cfg, failures, states)
        if failures:
            raise IdentificationError(failures, {"states": states})
        try:
            edge = fit_subsystem(1, states, data)
            inner = fit_subsystem(2, states, data)
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise IdentificationError({1: exc}, {"states": states}) from exc
        locals_hat = {1: edge, 2: inner}
        S = fit_similarity(edge.A_ii, edge.B_i, edge.C_i, inner.A_ii, inner.B_i, inner.C_i)
        shared = LocalModel(inner.A_ii, inner.B_i, inner.C_i,
                            E_left=inner.E_left @ S,
                            E_right=np.linalg.solve(S, edge.E_right))
        model = GlobalModel([shared.with_couplings(i > 0, i < N - 1) for i in range(N)])
        prov["alignment_cond"] = float(np.linalg.cond(S))
        return IdentifiedGlobal(model, locals_hat, states, prov)

    _estimate_states(range(1, N + 1), data, spec, cfg, failures, states)
    if failures:
        raise IdentificationError(failures, {"states": states})
    for i in range(1, N + 1):
        try:
            locals_hat[i] = fit_subsystem(i, states, data)
        except (np.linalg.LinAlgError, ValueError) as exc:
            failures[i] = exc
    if failures:
        raise IdentificationError(failures, {"states": states, "locals": locals_hat})
    model = GlobalModel([locals_hat[i] for i in range(1, N + 1)])
    return IdentifiedGlobal(model, locals_hat, states, prov)
