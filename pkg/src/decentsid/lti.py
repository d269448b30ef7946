"""Interconnected discrete-time state-space models on a chain.

A global model is an ordered chain of ``N`` local subsystems

    x_i(k+1) = A_ii x_i(k) + E_left x_{i-1}(k) + E_right x_{i+1}(k) + B_i u_i(k)
    y_i(k)   = C_i x_i(k) + n_i(k)

so the assembled state matrix is block-tridiagonal and the input/output
matrices are block-diagonal.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp


class DimensionError(ValueError):
    """Raised when matrix or series shapes are inconsistent."""


def _as_matrix(a, name: str) -> np.ndarray:
    arr = np.atleast_2d(np.asarray(a, dtype=float))
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class LocalModel:
    """Matrices of one subsystem of the chain.

    ``E_left`` couples to subsystem ``i-1`` and ``E_right`` to ``i+1``;
    ``None`` means there is no neighbour on that side.
    """

    A_ii: np.ndarray
    B_i: np.ndarray
    C_i: np.ndarray
    E_left: Optional[np.ndarray] = None
    E_right: Optional[np.ndarray] = None

    def __post_init__(self):
        A = _as_matrix(self.A_ii, "A_ii")
        B = _as_matrix(self.B_i, "B_i")
        C = _as_matrix(self.C_i, "C_i")
        n = A.shape[0]
        if A.shape != (n, n):
            raise DimensionError(f"A_ii must be square, got {A.shape}")
        if B.shape[0] != n:
            raise DimensionError(f"B_i has {B.shape[0]} rows, expected {n}")
        if C.shape[1] != n:
            raise DimensionError(f"C_i has {C.shape[1]} columns, expected {n}")
        object.__setattr__(self, "A_ii", A)
        object.__setattr__(self, "B_i", B)
        object.__setattr__(self, "C_i", C)
        for name in ("E_left", "E_right"):
            E = getattr(self, name)
            if E is not None:
                E = _as_matrix(E, name)
                if E.shape != (n, n):
                    raise DimensionError(f"{name} must be {n}x{n}, got {E.shape}")
                object.__setattr__(self, name, E)

    @property
    def n(self) -> int:
        return self.A_ii.shape[0]

    @property
    def m(self) -> int:
        return self.B_i.shape[1]

    @property
    def r(self) -> int:
        return self.C_i.shape[0]

    def with_couplings(self, left: bool, right: bool) -> "LocalModel":
        """Copy with the couplings restricted to the requested sides.

        A side that is requested but absent is filled with zeros.
        """
        z = np.zeros((self.n, self.n))
        El = (self.E_left if self.E_left is not None else z) if left else None
        Er = (self.E_right if self.E_right is not None else z) if right else None
        return LocalModel(self.A_ii, self.B_i, self.C_i, El, Er)

    def transformed(self, Q: np.ndarray, Q_left=None, Q_right=None) -> "LocalModel":
        """Apply a state-coordinate change ``x = Q xhat`` to this subsystem.

        Neighbour couplings need the neighbours' transforms as well.
        """
        Qi = np.linalg.inv(Q)
        El = None if self.E_left is None else Qi @ self.E_left @ Q_left
        Er = None if self.E_right is None else Qi @ self.E_right @ Q_right
        return LocalModel(Qi @ self.A_ii @ Q, Qi @ self.B_i, self.C_i @ Q, El, Er)


def make_heat_benchmark() -> LocalModel:
    """Local matrices of the discretised heat-equation chain used as benchmark.

    The values are fixed constants, not re-derived from the PDE.
    """
    return LocalModel(
        A_ii=[[0.5728, 0.1068], [0.1068, 0.5728]],
        B_i=[[0.2136], [0.1068]],
        C_i=[[1.0, 0.0]],
        E_left=0.1068 * np.eye(2),
        E_right=0.1068 * np.eye(2),
    )


@dataclass(frozen=True)
class GlobalModel:
    """Chain of local subsystems with assembled global matrices."""

    locals: tuple

    def __post_init__(self):
        object.__setattr__(self, "locals", tuple(self.locals))
        if not self.locals:
            raise DimensionError("a global model needs at least one subsystem")
        n, m, r = self.locals[0].n, self.locals[0].m, self.locals[0].r
        N = len(self.locals)
        for i, loc in enumerate(self.locals):
            if (loc.n, loc.m, loc.r) != (n, m, r):
                raise DimensionError(
                    f"subsystem {i + 1} has (n, m, r) = {(loc.n, loc.m, loc.r)}, "
                    f"expected {(n, m, r)}"
                )
            if (loc.E_left is None) != (i == 0):
                raise DimensionError(
                    f"subsystem {i + 1}: left coupling must be "
                    f"{'absent' if i == 0 else 'present'}"
                )
            if (loc.E_right is None) != (i == N - 1):
                raise DimensionError(
                    f"subsystem {i + 1}: right coupling must be "
                    f"{'absent' if i == N - 1 else 'present'}"
                )

    @property
    def N(self) -> int:
        return len(self.locals)

    @property
    def n(self) -> int:
        return self.locals[0].n

    @property
    def m(self) -> int:
        return self.locals[0].m

    @property
    def r(self) -> int:
        return self.locals[0].r

    @cached_property
    def A_sparse(self) -> sp.csr_matrix:
        N, n = self.N, self.n
        blocks = [[None] * N for _ in range(N)]
        for i, loc in enumerate(self.locals):
            # sparse blocks stop numpy from fusing a full 2x2 grid into a 4-D array
            blocks[i][i] = sp.coo_matrix(loc.A_ii)
            if i > 0:
                blocks[i][i - 1] = sp.coo_matrix(loc.E_left)
            if i < N - 1:
                blocks[i][i + 1] = sp.coo_matrix(loc.E_right)
        if N == 1:
            return sp.csr_matrix(self.locals[0].A_ii)
        return sp.bmat(blocks, format="csr")

    @cached_property
    def B_sparse(self) -> sp.csr_matrix:
        return sp.block_diag([loc.B_i for loc in self.locals], format="csr")

    @cached_property
    def C_sparse(self) -> sp.csr_matrix:
        return sp.block_diag([loc.C_i for loc in self.locals], format="csr")

    @property
    def A(self) -> np.ndarray:
        return self.A_sparse.toarray()

    @property
    def B(self) -> np.ndarray:
        return self.B_sparse.toarray()

    @property
    def C(self) -> np.ndarray:
        return self.C_sparse.toarray()

    def block(self, i: int, j: int) -> np.ndarray:
        """Block ``(i, j)`` (zero-based) of the global state matrix."""
        n = self.n
        return self.A[i * n:(i + 1) * n, j * n:(j + 1) * n]

    def transformed(self, similarity: "StructureSimilarity") -> "GlobalModel":
        Q = similarity.Q
        if len(Q) != self.N:
            raise DimensionError(f"{len(Q)} transforms for {self.N} subsystems")
        out = []
        for i, loc in enumerate(self.locals):
            ql = Q[i - 1] if i > 0 else None
            qr = Q[i + 1] if i < self.N - 1 else None
            out.append(loc.transformed(Q[i], ql, qr))
        return GlobalModel(out)

    def to_json(self) -> dict:
        def mat(a):
            return None if a is None else np.asarray(a).tolist()

        return {
            "n": self.n, "m": self.m, "r": self.r, "N": self.N,
            "locals": [
                {"A": mat(l.A_ii), "E_left": mat(l.E_left), "E_right": mat(l.E_right),
                 "B": mat(l.B_i), "C": mat(l.C_i)}
                for l in self.locals
            ],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "GlobalModel":
        locs = [
            LocalModel(d["A"], d["B"], d["C"], d.get("E_left"), d.get("E_right"))
            for d in obj["locals"]
        ]
        model = cls(locs)
        if "N" in obj and obj["N"] != model.N:
            raise DimensionError(f"declared N={obj['N']} but {model.N} locals given")
        return model

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=1))

    @classmethod
    def load(cls, path) -> "GlobalModel":
        return cls.from_json(json.loads(Path(path).read_text()))


def assemble_global(locals_: Sequence[LocalModel]) -> GlobalModel:
    """Build the global chain model; validates dimensions and boundary couplings."""
    return GlobalModel(tuple(locals_))


def homogeneous_chain(local: LocalModel, N: int) -> GlobalModel:
    """Chain of ``N`` copies of ``local`` with the end couplings removed."""
    return GlobalModel(
        [local.with_couplings(left=i > 0, right=i < N - 1) for i in range(N)]
    )


@dataclass(frozen=True)
class StructureSimilarity:
    """Block-diagonal change of coordinates ``x = diag(Q_1..Q_N) xhat``."""

    Q: tuple

    def __post_init__(self):
        qs = tuple(_as_matrix(q, "Q_i") for q in self.Q)
        for i, q in enumerate(qs):
            if q.shape[0] != q.shape[1]:
                raise DimensionError(f"Q_{i + 1} must be square")
            if not np.isfinite(np.linalg.cond(q)) or np.linalg.cond(q) > 1e14:
                raise np.linalg.LinAlgError(f"Q_{i + 1} is singular")
        object.__setattr__(self, "Q", qs)

    @classmethod
    def random(cls, N: int, n: int, seed: int) -> "StructureSimilarity":
        rng = np.random.default_rng(seed)
        # identity plus a bounded perturbation keeps every Q_i well conditioned
        return cls(tuple(np.eye(n) + 0.4 * rng.uniform(-1, 1, (n, n)) for _ in range(N)))

    def matrix(self) -> np.ndarray:
        return sp.block_diag(self.Q).toarray()


@dataclass(frozen=True)
class DataSet:
    """Per-subsystem time series, arrays shaped ``(T, N, channels)``."""

    U: np.ndarray
    Y: np.ndarray
    X: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        U = np.asarray(self.U, dtype=float)
        Y = np.asarray(self.Y, dtype=float)
        if U.ndim != 3 or Y.ndim != 3:
            raise DimensionError("U and Y must be shaped (T, N, channels)")
        if U.shape[:2] != Y.shape[:2]:
            raise DimensionError(f"U {U.shape} and Y {Y.shape} disagree on (T, N)")
        object.__setattr__(self, "U", U)
        object.__setattr__(self, "Y", Y)
        if self.X is not None:
            X = np.asarray(self.X, dtype=float)
            if X.ndim != 3 or X.shape[:2] != U.shape[:2]:
                raise DimensionError(f"X {X.shape} disagrees with U {U.shape}")
            object.__setattr__(self, "X", X)

    @property
    def T(self) -> int:
        return self.U.shape[0]

    @property
    def N(self) -> int:
        return self.U.shape[1]

    def with_outputs(self, Y: np.ndarray) -> "DataSet":
        return DataSet(self.U, Y, self.X, dict(self.meta))

    def to_csv(self, path) -> None:
        T, N, m = self.U.shape
        r = self.Y.shape[2]
        header = ["k", "subsystem"] + [f"u_{j + 1}" for j in range(m)] \
            + [f"y_{j + 1}" for j in range(r)]
        parts = [self.U, self.Y]
        if self.X is not None:
            header += [f"x_{j + 1}" for j in range(self.X.shape[2])]
            parts.append(self.X)
        kk, ii = np.meshgrid(np.arange(T), np.arange(1, N + 1), indexing="ij")
        body = np.concatenate(
            [kk[..., None], ii[..., None]] + parts, axis=2
        ).reshape(T * N, -1)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for row in body:
                w.writerow([int(row[0]), int(row[1])] + [repr(float(v)) for v in row[2:]])

    @classmethod
    def from_csv(cls, path) -> "DataSet":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            rows = np.array([[float(v) for v in row] for row in reader])
        k = rows[:, 0].astype(int)
        T = k.max() + 1
        N = int(rows[:, 1].max())
        if len(rows) != T * N:
            raise DimensionError(f"{len(rows)} rows cannot hold T={T}, N={N}")
        cols = {p: [j for j, h in enumerate(header) if h.startswith(p + "_")]
                for p in ("u", "y", "x")}
        grid = rows.reshape(T, N, -1)
        X = grid[:, :, cols["x"]] if cols["x"] else None
        return cls(grid[:, :, cols["u"]], grid[:, :, cols["y"]], X)


def simulate(model: GlobalModel, U, x0=None, T: Optional[int] = None,
             noise=None) -> DataSet:
    """Simulate the global model from ``x0`` under inputs ``U``.

    Parameters
    ----------
    model : GlobalModel
    U : array_like
        Inputs, shaped ``(T, N, m)`` or ``(T, N*m)``.
    x0 : array_like, optional
        Initial global state of length ``N*n``; zero by default.
    T : int, optional
        Horizon; defaults to the length of ``U``.
    noise : array_like, optional
        Measurement noise added to the outputs, shaped like the outputs.

    Returns
    -------
    DataSet
        With the true state sequence in ``X``.
    """
    N, n, m, r = model.N, model.n, model.m, model.r
    U = np.asarray(U, dtype=float)
    T = U.shape[0] if T is None else T
    if T < 1:
        raise DimensionError("horizon must be at least 1")
    if U.shape[0] < T:
        raise DimensionError(f"input has {U.shape[0]} samples, horizon is {T}")
    U = U[:T].reshape(T, -1)
    if U.shape[1] != N * m:
        raise DimensionError(f"input has {U.shape[1]} channels per step, expected {N * m}")
    x = np.zeros(N * n) if x0 is None else np.asarray(x0, dtype=float).ravel().copy()
    if x.shape != (N * n,):
        raise DimensionError(f"x0 has length {x.size}, expected {N * n}")

    A = model.A_sparse
    BU = np.asarray((model.B_sparse @ U.T).T)
    X = np.empty((T, N * n))
    for k in range(T):
        X[k] = x
        x = A @ x + BU[k]
    Y = np.asarray((model.C_sparse @ X.T).T)
    if noise is not None:
        Y = Y + np.asarray(noise, dtype=float).reshape(T, N * r)
    return DataSet(U.reshape(T, N, m), Y.reshape(T, N, r), X.reshape(T, N, n))


def channel_generators(seed, count: int) -> list:
    """Independent generators, one per channel, fanned out from one seed."""
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return [np.random.default_rng(s) for s in ss.spawn(count)]


def white_inputs(T: int, N: int, m: int, seed) -> np.ndarray:
    """Zero-mean unit-variance Gaussian inputs shaped ``(T, N, m)``."""
    gens = channel_generators(seed, N * m)
    U = np.column_stack([g.standard_normal(T) for g in gens])
    return U.reshape(T, N, m)


def add_noise_snr(Y, snr_db: float, seed) -> np.ndarray:
    """Add white Gaussian noise to every output channel at a given SNR.

    The noise variance of each channel is ``var(y) / 10**(snr_db / 10)``.
    An infinite ``snr_db`` returns ``Y`` unchanged.
    """
    Y = np.asarray(Y, dtype=float)
    if np.isinf(snr_db) and snr_db > 0:
        return Y.copy()
    flat = Y.reshape(Y.shape[0], -1)
    var = flat.var(axis=0)
    if np.any(var <= 0):
        bad = np.flatnonzero(var <= 0)
        raise ValueError(f"zero-variance output channel(s) {bad.tolist()}; SNR undefined")
    scale = np.sqrt(var / 10 ** (snr_db / 10))
    gens = channel_generators(seed, flat.shape[1])
    noise = np.column_stack([g.standard_normal(flat.shape[0]) for g in gens]) * scale
    return (flat + noise).reshape(Y.shape)
