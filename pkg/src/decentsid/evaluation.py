"""Metrics, Monte-Carlo harness and decay study."""
from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .decentral import GENERAL, IdentificationError, IdentifiedGlobal, OmegaSpec, fit_similarity, run_algorithm1
from .gramian import decay_envelope, finite_time_gramian
from .lti import (DataSet, GlobalModel, add_noise_snr, homogeneous_chain, make_heat_benchmark,
                  simulate, white_inputs)
from .subspace import AUTO, SimConfig

log = logging.getLogger(__name__)


def vaf(y_true, y_pred) -> Union[float, np.ndarray]:
    """Variance accounted for, in percent, clamped to ``[0, 100]``.

    2-D inputs are treated column-wise (one value per channel).
    """
    y_true = np.asarray(y_true, dtype=float)
    y_pred = np.asarray(y_pred, dtype=float)
    if y_true.shape != y_pred.shape:
        raise ValueError(f"shape mismatch {y_true.shape} vs {y_pred.shape}")
    if y_true.shape[0] < 2:
        raise ValueError("need at least two samples")
    var = np.var(y_true, axis=0)
    if np.any(var <= 0):
        raise ValueError("true output has zero variance")
    out = np.clip(1.0 - np.var(y_true - y_pred, axis=0) / var, 0.0, 1.0) * 100.0
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class EigenMatch:
    estimated: np.ndarray
    true: np.ndarray
    distances: np.ndarray

    @property
    def max_distance(self) -> float:
        return float(self.distances.max(initial=0.0))


def eigen_compare(A_hat, A_true) -> EigenMatch:
    """Greedy nearest-pair matching of the two spectra in the complex plane."""
    A_hat, A_true = np.asarray(A_hat), np.asarray(A_true)
    if A_hat.shape != A_true.shape or A_hat.shape[0] != A_hat.shape[1]:
        raise ValueError("need square matrices of equal size")
    eh, et = np.linalg.eigvals(A_hat), np.linalg.eigvals(A_true)
    dist = np.abs(eh[:, None] - et[None, :])
    left, right = list(range(eh.size)), list(range(et.size))
    pairs = []
    while left:
        sub = dist[np.ix_(left, right)]
        a, b = np.unravel_index(np.argmin(sub), sub.shape)
        pairs.append((left.pop(a), right.pop(b)))
    pairs.sort()
    ih = np.array([p[0] for p in pairs])
    it = np.array([p[1] for p in pairs])
    return EigenMatch(eh[ih], et[it], dist[ih, it])


@dataclass(frozen=True)
class SimilarityFit:
    Q: list
    residuals: np.ndarray
    singular: list


def _rel(a, b) -> float:
    scale = max(np.linalg.norm(b), 1e-300)
    return float(np.linalg.norm(a - b) / scale)


def similarity_fit(identified, truth: GlobalModel, cond_limit: float = 1e12) -> SimilarityFit:
    """Fit ``Q_i`` per subsystem so the identified model is ``diag(Q)``-similar to the truth.

    Each ``Q_i`` solves the local relations ``A Q = Q Ahat``, ``C Q = Chat``,
    ``Q Bhat = B`` in the least-squares sense; the reported residual is the
    largest relative residual over all relations, couplings included.
    """
    model = identified.model if isinstance(identified, IdentifiedGlobal) else identified
    if (model.N, model.n, model.m, model.r) != (truth.N, truth.n, truth.m, truth.r):
        raise ValueError("identified model and truth have different dimensions")
    Qs, singular = [], []
    for i, (h, t) in enumerate(zip(model.locals, truth.locals)):
        Q = fit_similarity(t.A_ii, t.B_i, t.C_i, h.A_ii, h.B_i, h.C_i)
        if not np.isfinite(np.linalg.cond(Q)) or np.linalg.cond(Q) > cond_limit:
            singular.append(i + 1)
        Qs.append(Q)
    res = np.zeros(truth.N)
    for i, (h, t) in enumerate(zip(model.locals, truth.locals)):
        Q = Qs[i]
        terms = [_rel(Q @ h.A_ii, t.A_ii @ Q), _rel(Q @ h.B_i, t.B_i), _rel(t.C_i @ Q, h.C_i)]
        if i > 0:
            terms.append(_rel(Q @ h.E_left, t.E_left @ Qs[i - 1]))
        if i < truth.N - 1:
            terms.append(_rel(Q @ h.E_right, t.E_right @ Qs[i + 1]))
        res[i] = max(terms)
    return SimilarityFit(Qs, res, singular)


@dataclass
class ExperimentConfig:
    """Everything that determines a Monte-Carlo experiment.

    ``snr_db = None`` means noise-free outputs. ``reg_values`` lists the
    ridge parameters to compare (0 disables regularisation).
    """

    model: str = "benchmark"
    N: int = 500
    T: int = 10000
    val_T: Optional[int] = None
    snr_db: Optional[float] = 25.0
    variants: tuple = (2,)
    p: int = 1
    t: int = 0
    past_window: int = 15
    future_window: int = 10
    reg_values: tuple = (0.05, 0.0)
    order: Union[int, str] = 2
    share_model: bool = True
    n_runs: int = 20
    master_seed: int = 0
    out_dir: Optional[str] = None

    def __post_init__(self):
        self.variants = tuple(self.variants)
        self.reg_values = tuple(float(r) for r in self.reg_values)
        if self.N < 1 or self.T < 1 or self.n_runs < 1:
            raise ValueError("N, T and n_runs must be positive")
        if self.val_T is not None and self.val_T < 2:
            raise ValueError("val_T must be at least 2")
        if self.snr_db is not None and not self.snr_db > -math.inf:
            raise ValueError("snr_db must be a number or None")
        if any(r < 0 for r in self.reg_values) or not self.reg_values:
            raise ValueError("reg_values must be non-empty and non-negative")
        for v in self.variants:
            OmegaSpec(v, self.p, self.t)
        self.sim_config(self.reg_values[0])

    def sim_config(self, reg: float) -> SimConfig:
        return SimConfig(self.past_window, self.future_window, reg, self.order)

    def to_json(self) -> dict:
        out = asdict(self)
        out["variants"] = list(self.variants)
        out["reg_values"] = list(self.reg_values)
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**obj)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=1))

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_json(json.loads(Path(path).read_text()))

    def truth(self) -> GlobalModel:
        if self.model == "benchmark":
            return homogeneous_chain(make_heat_benchmark(), self.N)
        model = GlobalModel.load(self.model)
        if model.N != self.N:
            raise ValueError(f"model file has N={model.N}, config says N={self.N}")
        return model


def run_seeds(master_seed: int, n_runs: int) -> list:
    """Per-run seed sequences; run ``j`` depends only on ``(master_seed, j)``."""
    return np.random.SeedSequence(master_seed).spawn(n_runs)


def generate_data(truth: GlobalModel, T: int, snr_db: Optional[float], seed) -> DataSet:
    """White-input experiment with measurement noise at the given SNR."""
    s_in, s_noise = seed.spawn(2)
    d = simulate(truth, white_inputs(T, truth.N, truth.m, s_in))
    if snr_db is None or math.isinf(snr_db):
        return d
    return d.with_outputs(add_noise_snr(d.Y, snr_db, s_noise))


def validation_vaf(model: GlobalModel, data: DataSet) -> np.ndarray:
    """Per-subsystem VAF (mean over output channels) of a free-run simulation from rest."""
    Yh = simulate(model, data.U).Y
    T, N, r = data.Y.shape
    v = vaf(data.Y.reshape(T, N * r), Yh.reshape(T, N * r))
    return np.asarray(v).reshape(N, r).mean(axis=1)


def reg_label(reg: float) -> str:
    return "without" if reg == 0 else "with"


@dataclass
class VafReport:
    runs: list
    table: list
    config: dict = field(default_factory=dict)

    def summary(self, variant, reg: float) -> dict:
        for row in self.table:
            if row["variant"] == variant and row["reg"] == reg:
                return row
        raise KeyError((variant, reg))

    def to_json(self) -> dict:
        return {"config": self.config, "table": self.table, "runs": self.runs}


def _single_run(config: ExperimentConfig, truth: GlobalModel, run: int, seed) -> list:
    s_id, s_val = seed.spawn(2)
    data = generate_data(truth, config.T, config.snr_db, s_id)
    val = generate_data(truth, config.val_T or config.T, config.snr_db, s_val)
    rows = []
    for variant in config.variants:
        spec = OmegaSpec(variant, config.p, config.t)
        for reg in config.reg_values:
            row = {"run": run, "variant": variant, "reg": reg, "status": "ok", "error": ""}
            try:
                ident = run_algorithm1(data, spec, config.sim_config(reg),
                                       share_model=config.share_model)
                v = validation_vaf(ident.model, val)
            except (IdentificationError, np.linalg.LinAlgError, ValueError) as exc:
                log.info("run %d variant %s reg %g failed: %s", run, variant, reg, exc)
                row.update(status="failed", error=str(exc).split(";")[0],
                           vaf_mean=0.0, vaf_min=0.0, vaf_max=0.0, vaf_S1=0.0, vaf_S2=0.0,
                           eig_A=[], eig_E=[])
                rows.append(row)
                continue
            row.update(
                vaf_mean=float(v.mean()), vaf_min=float(v.min()), vaf_max=float(v.max()),
                vaf_S1=float(v[0]), vaf_S2=float(v[min(1, v.size - 1)]),
                eig_A=[[float(z.real), float(z.imag)]
                       for z in np.linalg.eigvals(ident.model.locals[min(1, truth.N - 1)].A_ii)],
                eig_E=[[float(z.real), float(z.imag)]
                       for z in np.linalg.eigvals(ident.model.locals[0].E_right)]
                if truth.N > 1 else [],
            )
            rows.append(row)
    return rows


def monte_carlo(config: ExperimentConfig) -> VafReport:
    """Repeat the identification experiment ``n_runs`` times.

    A failed identification scores VAF 0 (a model that predicts nothing)
    and is counted in ``n_failed``. Artifacts are written when
    ``config.out_dir`` is set.
    """
    truth = config.truth()
    runs = []
    for run, seed in enumerate(run_seeds(config.master_seed, config.n_runs)):
        runs.extend(_single_run(config, truth, run, seed))
    runs.sort(key=lambda r: (r["run"], str(r["variant"]), -r["reg"]))
    table = []
    for variant in config.variants:
        for reg in config.reg_values:
            sel = [r for r in runs if r["variant"] == variant and r["reg"] == reg]
            vals = np.array([r["vaf_mean"] for r in sel])
            table.append({
                "variant": variant, "reg": reg, "regularization": reg_label(reg),
                "mean_vaf": float(vals.mean()), "min_vaf": float(vals.min()),
                "max_vaf": float(vals.max()),
                "mean_vaf_S1": float(np.mean([r["vaf_S1"] for r in sel])),
                "mean_vaf_S2": float(np.mean([r["vaf_S2"] for r in sel])),
                "n_ok": sum(r["status"] == "ok" for r in sel),
                "n_failed": sum(r["status"] != "ok" for r in sel),
            })
    report = VafReport(runs, table, config.to_json())
    if config.out_dir:
        write_report(report, config.out_dir)
    return report


RUN_FIELDS = ["run", "variant", "reg", "status", "vaf_mean", "vaf_min", "vaf_max",
              "vaf_S1", "vaf_S2", "error"]
TABLE_FIELDS = ["variant", "reg", "regularization", "mean_vaf", "min_vaf", "max_vaf",
                "mean_vaf_S1", "mean_vaf_S2", "n_ok", "n_failed"]


def _fmt(v):
    return repr(v) if isinstance(v, float) else v


def write_report(report: VafReport, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "runs.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(RUN_FIELDS)
        for r in report.runs:
            w.writerow([_fmt(r[k]) for k in RUN_FIELDS])
    with open(out / "table.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TABLE_FIELDS)
        for r in report.table:
            w.writerow([_fmt(r[k]) for k in TABLE_FIELDS])
    with open(out / "eigenvalues.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["run", "variant", "reg", "matrix", "real", "imag"])
        for r in report.runs:
            for name in ("A", "E"):
                for re_, im in r[f"eig_{name}"]:
                    w.writerow([r["run"], r["variant"], repr(r["reg"]), name, repr(re_), repr(im)])
    with open(out / "vaf_histogram.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["variant", "reg", "bin_lo", "bin_hi", "count"])
        edges = np.linspace(0.0, 100.0, 201)
        for row in report.table:
            vals = [r["vaf_S1"] for r in report.runs
                    if r["variant"] == row["variant"] and r["reg"] == row["reg"]]
            counts, _ = np.histogram(vals, bins=edges)
            for lo, hi, c in zip(edges[:-1], edges[1:], counts):
                if c:
                    w.writerow([row["variant"], repr(row["reg"]), repr(float(lo)),
                                repr(float(hi)), int(c)])
    (out / "report.json").write_text(json.dumps(report.to_json(), indent=1, sort_keys=True))


def read_table(path) -> list:
    """Parse ``table.csv`` back into dictionaries."""
    ints = {"n_ok", "n_failed"}
    strs = {"regularization"}
    rows = []
    with open(path, newline="") as fh:
        for raw in csv.DictReader(fh):
            row = {}
            for k, v in raw.items():
                if k in ints:
                    row[k] = int(v)
                elif k in strs:
                    row[k] = v
                elif k == "variant":
                    row[k] = v if v == GENERAL else int(v)
                else:
                    row[k] = float(v)
            rows.append(row)
    return rows


def block_envelope(c: float, lam: float, n: int, block_distance: int) -> float:
    """Frobenius norm of the entrywise envelope over one ``n x n`` block."""
    a, b = np.indices((n, n))
    d = np.abs(n * block_distance + b - a)
    return float(np.sqrt(np.sum((c * lam ** d) ** 2)))


def decay_study(model: GlobalModel, ps: Sequence[int] = (2,), row: int = 50) -> list:
    """Block norms of one block row of the Gramian inverse, with their envelope.

    ``row`` is 1-based. Returns dictionaries with keys
    ``p, j, norm, envelope, kappa``.
    """
    if not 1 <= row <= model.N:
        raise ValueError(f"row {row} outside 1..{model.N}")
    n = model.n
    out = []
    for p in ps:
        bundle = finite_time_gramian(model, p)
        env = decay_envelope(bundle)
        R = row - 1
        for J in range(model.N):
            blk = bundle.D[R * n:(R + 1) * n, J * n:(J + 1) * n]
            out.append({"p": p, "j": J + 1, "norm": float(np.linalg.norm(blk)),
                        "envelope": block_envelope(env.c, env.lam, n, abs(R - J)),
                        "kappa": bundle.kappa})
    return out


def write_decay_csv(rows: list, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["p", "j", "frobenius_norm", "envelope"])
        for r in rows:
            w.writerow([r["p"], r["j"], repr(r["norm"]), repr(r["envelope"])])
