import json

import numpy as np
import pytest

from decentsid.evaluation import (ExperimentConfig, block_envelope, decay_study, eigen_compare,
                                  monte_carlo, read_table, run_seeds, similarity_fit, vaf,
                                  write_decay_csv)
from decentsid.lti import GlobalModel, LocalModel, StructureSimilarity, homogeneous_chain

from conftest import random_stable_chain


def test_vaf_identity_and_mean():
    y = np.sin(np.arange(100.0))
    assert vaf(y, y) == 100.0
    assert vaf(y, np.full_like(y, y.mean())) == pytest.approx(0.0, abs=1e-12)


def test_vaf_clamped():
    y = np.sin(np.arange(100.0))
    assert vaf(y, -3 * y) == 0.0


def test_vaf_known_noise_level():
    rng = np.random.default_rng(0)
    y = rng.standard_normal(200_000)
    e = 0.1 * rng.standard_normal(200_000)
    assert vaf(y, y + e) == pytest.approx(99.0, abs=0.05)


def test_vaf_monotone_in_residual():
    rng = np.random.default_rng(1)
    y, e = rng.standard_normal((2, 5000))
    vals = [vaf(y, y + s * e) for s in (1.0, 0.5, 0.1, 0.01)]
    assert all(a < b for a, b in zip(vals, vals[1:]))


def test_vaf_columnwise_and_errors():
    y = np.column_stack([np.arange(10.0), np.sin(np.arange(10.0))])
    np.testing.assert_array_equal(vaf(y, y), [100.0, 100.0])
    with pytest.raises(ValueError):
        vaf(np.ones(10), np.ones(10))
    with pytest.raises(ValueError):
        vaf(np.ones(1), np.ones(1))
    with pytest.raises(ValueError):
        vaf(np.ones(3), np.ones(4))


def test_eigen_compare(bench):
    m = eigen_compare(bench.A_ii, bench.A_ii)
    assert m.max_distance == 0.0
    np.testing.assert_allclose(np.sort(m.true.real), [0.4660, 0.6796], atol=1e-12)
    Q = np.array([[1.0, 0.4], [-0.3, 2.0]])
    m = eigen_compare(np.linalg.solve(Q, bench.A_ii @ Q), bench.A_ii)
    assert m.max_distance <= 1e-8
    with pytest.raises(ValueError):
        eigen_compare(np.eye(2), np.eye(3))


def test_eigen_compare_greedy_pairs():
    m = eigen_compare(np.diag([0.1, 0.9]), np.diag([0.95, 0.05]))
    np.testing.assert_allclose(m.distances, [0.05, 0.05])


def test_similarity_fit_identity():
    g = random_stable_chain(4, 2, 1, 1, seed=0)
    fit = similarity_fit(g, g)
    for Q in fit.Q:
        np.testing.assert_allclose(Q, np.eye(2), atol=1e-10)
    assert fit.residuals.max() <= 1e-10 and not fit.singular


def test_similarity_fit_known_transform():
    g = random_stable_chain(5, 2, 1, 1, seed=1)
    sim = StructureSimilarity.random(5, 2, seed=2)
    fit = similarity_fit(g.transformed(sim), g)
    assert fit.residuals.max() <= 1e-8
    for Q, Qtrue in zip(fit.Q, sim.Q):
        np.testing.assert_allclose(Q, Qtrue, atol=1e-8)


def test_similarity_fit_dimension_mismatch(bench):
    with pytest.raises(ValueError):
        similarity_fit(homogeneous_chain(bench, 3), homogeneous_chain(bench, 4))


def test_config_roundtrip(tmp_path):
    cfg = ExperimentConfig(N=30, T=500, snr_db=None, variants=(2, "general"), reg_values=(0.1,),
                           order="auto", master_seed=9, out_dir="x")
    cfg.save(tmp_path / "c.json")
    assert ExperimentConfig.load(tmp_path / "c.json") == cfg


@pytest.mark.parametrize("bad", [{"N": 0}, {"reg_values": [-1.0]}, {"variants": [7]},
                                 {"past_window": 3}, {"bogus": 1}, {"reg_values": []}])
def test_config_rejects_invalid(bad):
    with pytest.raises((ValueError, TypeError)):
        ExperimentConfig.from_json(bad)


def test_config_model_file(tmp_path, bench):
    homogeneous_chain(bench, 4).save(tmp_path / "m.json")
    cfg = ExperimentConfig(model=str(tmp_path / "m.json"), N=4)
    assert cfg.truth().N == 4
    with pytest.raises(ValueError):
        ExperimentConfig(model=str(tmp_path / "m.json"), N=5).truth()


def test_run_seeds_prefix_stable():
    a = [s.generate_state(2) for s in run_seeds(3, 5)]
    b = [s.generate_state(2) for s in run_seeds(3, 2)]
    np.testing.assert_array_equal(a[:2], b)


def _small_mc(tmp_path=None, **kw):
    base = dict(N=6, T=1500, n_runs=3, variants=(2, 3), master_seed=5,
                out_dir=None if tmp_path is None else str(tmp_path))
    base.update(kw)
    return monte_carlo(ExperimentConfig(**base))


def test_monte_carlo_table_and_failures():
    rep = _small_mc()
    assert len(rep.runs) == 3 * 2 * 2
    assert rep.summary(2, 0.05)["mean_vaf"] > 95
    v3 = rep.summary(3, 0.0)
    assert v3["n_failed"] == 3 and v3["mean_vaf"] == 0.0
    with pytest.raises(KeyError):
        rep.summary(4, 0.05)


def test_monte_carlo_deterministic(tmp_path):
    names = ("runs.csv", "table.csv", "eigenvalues.csv", "vaf_histogram.csv", "report.json")
    a = _small_mc(tmp_path)
    first = {name: (tmp_path / name).read_bytes() for name in names}
    b = _small_mc(tmp_path)
    assert a.to_json() == b.to_json()
    for name in names:
        assert (tmp_path / name).read_bytes() == first[name]


def test_table_roundtrip(tmp_path):
    rep = _small_mc(tmp_path)
    assert read_table(tmp_path / "table.csv") == rep.table
    assert json.loads((tmp_path / "report.json").read_text())["table"] == rep.table


def test_histogram_counts(tmp_path):
    _small_mc(tmp_path)
    lines = (tmp_path / "vaf_histogram.csv").read_text().splitlines()[1:]
    total = sum(int(l.split(",")[-1]) for l in lines)
    assert total == 3 * 2 * 2


def test_block_envelope_scalar_case():
    assert block_envelope(2.0, 0.5, 1, 3) == pytest.approx(2.0 * 0.5 ** 3)


def test_decay_identity_model():
    N, n = 6, 2
    loc = lambda i: LocalModel(np.zeros((n, n)), np.ones((n, 1)), np.eye(n),
                               np.zeros((n, n)) if i else None,
                               np.zeros((n, n)) if i < N - 1 else None)
    rows = decay_study(GlobalModel([loc(i) for i in range(N)]), (1,), row=3)
    assert all(r["norm"] == 0.0 for r in rows if r["j"] != 3)
    assert all(r["kappa"] == 1.0 for r in rows)


def test_decay_benchmark_rapid_and_bounded(bench, tmp_path):
    rows = decay_study(homogeneous_chain(bench, 60), (1, 2), row=50)
    for p in (1, 2):
        sel = {r["j"]: r for r in rows if r["p"] == p}
        assert all(r["norm"] <= r["envelope"] for r in sel.values())
        diag = sel[50]["norm"]
        # below 1e-6 of the diagonal block eight block columns away
        assert all(sel[50 + d]["norm"] < 1e-6 * diag for d in (-10, -9, -8, 8, 9, 10))
    write_decay_csv(rows, tmp_path / "d.csv")
    lines = (tmp_path / "d.csv").read_text().splitlines()
    assert lines[0] == "p,j,frobenius_norm,envelope" and len(lines) == 121
    with pytest.raises(ValueError):
        decay_study(homogeneous_chain(bench, 10), (2,), row=50)
