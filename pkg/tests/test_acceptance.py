"""Acceptance criteria, one test each. Every test prints a single PASS/FAIL line."""
import time

import numpy as np
import pytest

from decentsid.decentral import OmegaSpec, fit_local_matrices, identify_local_state, run_algorithm1
from decentsid.evaluation import (ExperimentConfig, eigen_compare, generate_data, monte_carlo,
                                  validation_vaf)
from decentsid.gramian import (band_truncate, decay_envelope, finite_time_gramian,
                               observability_rank_check, reconstruct_state, truncation_bound)
from decentsid.lifting import (build_permutations, data_equation_residual, lift_space_major,
                               structured_lifted_matrices)
from decentsid.lti import StructureSimilarity, homogeneous_chain, simulate
from decentsid.subspace import AUTO, SimConfig

TRUE_EIGS = np.array([0.6796, 0.4660])


@pytest.fixture(scope="module")
def bench_chain(bench):
    return lambda N: homogeneous_chain(bench, N)


def test_c01_exact_state_reconstruction(bench_chain, acceptance):
    t0 = time.perf_counter()
    worst = 0.0
    for N in (10, 50):
        g = bench_chain(N)
        rng = np.random.default_rng(N)
        d = simulate(g, rng.standard_normal((200, N, 1)), x0=rng.standard_normal(2 * N))
        ks = np.arange(2, 200)
        X = reconstruct_state(g, d, 2, ks)
        ref = d.X[ks].reshape(len(ks), -1)
        worst = max(worst, float((np.linalg.norm(X - ref, axis=1)
                                  / np.linalg.norm(ref, axis=1)).max()))
    dt = time.perf_counter() - t0
    acceptance(1, "full-inverse state reconstruction", worst <= 1e-8 and dt < 10,
               f"max relative error {worst:.2e} (<= 1e-8), {dt:.1f} s (< 10 s)")


def test_c02_structured_rank(bench_chain, acceptance):
    t0 = time.perf_counter()
    g = bench_chain(20)
    nu = observability_rank_check(g, 4).nu_estimate
    ok, parts = nu is not None, []
    for p in range(1, 5):
        rep = observability_rank_check(g, p)
        ok &= rep.rank == rep.rank_classical
        if p >= nu:
            ok &= rep.rank == 40
        parts.append(f"p={p}: {rep.rank}/{rep.rank_classical}")
    dt = time.perf_counter() - t0
    acceptance(2, "structured observability rank", ok and dt < 5,
               f"nu={nu}; structured/classical rank {', '.join(parts)}; {dt:.1f} s (< 5 s)")


def test_c03_decay_envelope(bench_chain, acceptance):
    t0 = time.perf_counter()
    bundle = finite_time_gramian(bench_chain(50), 2)
    env = decay_envelope(bundle)
    i, j = np.indices(bundle.D.shape)
    ratio = np.abs(bundle.D) / env.bound(np.abs(i - j))
    dt = time.perf_counter() - t0
    acceptance(3, "exponential decay envelope", ratio.max() <= 1.0 and dt < 30,
               f"{bundle.D.size} entries, max |d_ij| / (c lambda^|i-j|) = {ratio.max():.3f}, "
               f"c={env.c:.2f}, lambda={env.lam:.4f}; {dt:.1f} s (< 30 s)")


def test_c04_truncation_bound(bench_chain, acceptance):
    t0 = time.perf_counter()
    N, n = 50, 2
    bundle = finite_time_gramian(bench_chain(N), 2)
    env = decay_envelope(bundle)
    errs, ok = [], True
    for s in range(0, n * N + 1, n):
        err = np.linalg.norm(bundle.D - band_truncate(bundle.D, s), 1)
        _, bound = truncation_bound(env, s, N, n)
        # at s = nN nothing is truncated and the bound is exactly zero
        ok &= (err < bound) if s < n * N else (err == 0.0 and bound == 0.0)
        errs.append(err)
    monotone = all(a >= b for a, b in zip(errs, errs[1:]))
    dt = time.perf_counter() - t0
    acceptance(4, "banded-truncation bound", ok and monotone and dt < 30,
               f"{len(errs)} half-bandwidths, error < c*k1 for s < nN and 0 = 0 at s = nN: {ok}; "
               f"non-increasing: {monotone}; {dt:.1f} s (< 30 s)")


@pytest.mark.slow
def test_c05_monte_carlo_table(acceptance, tmp_path):
    t0 = time.perf_counter()
    cfg = ExperimentConfig(N=500, T=10_000, snr_db=25.0, variants=(2, 3, 4, 5),
                           reg_values=(0.05, 0.0), n_runs=20, master_seed=2024,
                           out_dir=str(tmp_path))
    rep = monte_carlo(cfg)
    dt = time.perf_counter() - t0
    m = {(r["variant"], r["reg"]): r["mean_vaf"] for r in rep.table}
    ok = m[(2, 0.05)] >= 97 and m[(2, 0.0)] >= 97
    ok &= all(m[(v, 0.0)] <= 60 for v in (3, 4, 5))
    ok &= all(m[(v, 0.05)] >= 90 for v in (3, 4, 5))
    cells = "; ".join(f"v{v} {'reg' if r else 'no-reg'} {m[(v, r)]:.2f}"
                      for v in (2, 3, 4, 5) for r in (0.05, 0.0))
    acceptance(5, "variant table, N=500, 20 runs", ok and dt < 600,
               f"mean VAF {cells}; {dt:.0f} s (< 600 s)")


def test_c06_noise_free_identification(bench_chain, acceptance):
    t0 = time.perf_counter()
    g = bench_chain(500)
    s_id, s_val = np.random.SeedSequence(6).spawn(2)
    data, val = generate_data(g, 10_000, None, s_id), generate_data(g, 10_000, None, s_val)
    ident = run_algorithm1(data, OmegaSpec(2), SimConfig(order=2), share_model=True)
    v = float(validation_vaf(ident.model, val).mean())
    eigs = np.concatenate([np.linalg.eigvals(loc.A_ii) for loc in ident.locals_hat.values()])
    dist = max(np.abs(TRUE_EIGS - z).min() for z in eigs)
    dt = time.perf_counter() - t0
    acceptance(6, "noise-free identification", v >= 99.5 and dist <= 0.1 and dt < 120,
               f"VAF {v:.2f} (>= 99.5), eigenvalues {np.round(np.sort(eigs.real), 4).tolist()}, "
               f"max distance {dist:.3f} (<= 0.1); {dt:.0f} s (< 120 s)")


def test_c07_order_selection(bench_chain, acceptance):
    t0 = time.perf_counter()
    g = bench_chain(500)
    picks, gaps = [], []
    for seed in np.random.SeedSequence(7).spawn(20):
        d = generate_data(g, 10_000, 25.0, seed)
        est = identify_local_state(2, d, OmegaSpec(3), SimConfig(order=AUTO))
        s = est.singular_values
        picks.append(est.order_used)
        gaps.append(int(np.argmax(s[:-1] / s[1:])) + 1)
    hits = picks.count(2)
    dt = time.perf_counter() - t0
    acceptance(7, "automatic order selection", hits >= 18 and dt < 120,
               f"n=2 selected in {hits}/20 runs (>= 18), dominant gap at index 2 in "
               f"{gaps.count(2)}/20; {dt:.0f} s (< 120 s)")


def test_c08_oracle_regression(bench_chain, bench, acceptance):
    t0 = time.perf_counter()
    N = 6
    g = bench_chain(N)
    rng = np.random.default_rng(8)
    d = simulate(g, rng.standard_normal((500, N, 1)), x0=rng.standard_normal(2 * N))
    Q = StructureSimilarity.random(N, 2, seed=8).Q
    err_plain = err_q = err_eig = 0.0
    for i in range(1, N + 1):
        for Qs in (None, Q):
            X = [d.X[:, j] if Qs is None else d.X[:, j] @ np.linalg.inv(Qs[j]).T
                 for j in range(N)]
            fit = fit_local_matrices(X[i - 2] if i > 1 else None, X[i - 1],
                                     X[i] if i < N else None, d.U[:, i - 1], d.Y[:, i - 1])
            if Qs is None:
                Qi = Qp = Qn = np.eye(2)
            else:
                Qi, Qp, Qn = Qs[i - 1], Qs[max(i - 2, 0)], Qs[min(i, N - 1)]
            Qinv = np.linalg.inv(Qi)
            pairs = [(fit.A_ii, Qinv @ bench.A_ii @ Qi), (fit.B_i, Qinv @ bench.B_i),
                     (fit.C_i, bench.C_i @ Qi)]
            if i > 1:
                pairs.append((fit.E_left, Qinv @ bench.E_left @ Qp))
            if i < N:
                pairs.append((fit.E_right, Qinv @ bench.E_right @ Qn))
            e = max(np.abs(a - b).max() for a, b in pairs)
            if Qs is None:
                err_plain = max(err_plain, e)
            else:
                err_q = max(err_q, e)
            err_eig = max(err_eig, eigen_compare(fit.A_ii, bench.A_ii).max_distance)
    dt = time.perf_counter() - t0
    ok = err_plain <= 1e-6 and err_q <= 1e-6 and err_eig <= 1e-6 and dt < 5
    acceptance(8, "oracle regression", ok,
               f"max error true states {err_plain:.1e}, conjugated {err_q:.1e}, "
               f"eigenvalues {err_eig:.1e} (all <= 1e-6); {dt:.2f} s (< 5 s)")


def test_c09_structural_suite(bench_chain, acceptance):
    t0 = time.perf_counter()
    ok, notes = True, []
    for N, p in [(1, 3), (2, 1), (10, 2), (20, 3)]:
        perms = build_permutations(N, p, 1, 1)
        for P in (perms.P_Y, perms.P_U):
            D = P.dense()
            ok &= np.array_equal(D @ D.T, np.eye(D.shape[0]))
    notes.append(f"permutations orthogonal: {ok}")
    g = bench_chain(10)
    rng = np.random.default_rng(9)
    d = simulate(g, rng.standard_normal((60, 10, 1)), x0=rng.standard_normal(20))
    res = rec = 0.0
    bw_ok = True
    for p in (1, 2, 3):
        mats = structured_lifted_matrices(g, p)
        widths = (mats.O.actual_bandwidth(), mats.G.actual_bandwidth(),
                  mats.R.actual_bandwidth(), mats.O.gram().actual_bandwidth())
        bw_ok &= widths == (p, p - 1, p - 1, 2 * p)
        Ap = np.linalg.matrix_power(g.A, p)
        for k in range(p, 60):
            r = data_equation_residual(mats, d, k, p)
            res = max(res, np.linalg.norm(r) / np.linalg.norm(lift_space_major(d.Y, k, p)))
            x = Ap @ d.X[k - p].ravel() + mats.R.matvec(lift_space_major(d.U, k, p, "input"))
            rec = max(rec, np.linalg.norm(x - d.X[k].ravel()) / np.linalg.norm(d.X[k]))
    dt = time.perf_counter() - t0
    ok &= bw_ok and res <= 1e-10 and rec <= 1e-10 and dt < 10
    acceptance(9, "structural suite", ok,
               f"{notes[0]}; bandwidths tight (p, p-1, p-1, 2p): {bw_ok}; "
               f"data-equation residual {res:.1e}; state recursion {rec:.1e}; {dt:.2f} s (< 10 s)")


def test_c10_determinism(acceptance, tmp_path):
    names = ("runs.csv", "table.csv", "eigenvalues.csv", "vaf_histogram.csv", "report.json")
    blobs = []
    for _ in range(2):
        cfg = ExperimentConfig(N=40, T=3000, variants=(2, 3), n_runs=3, master_seed=10,
                               out_dir=str(tmp_path))
        monte_carlo(cfg)
        blobs.append({name: (tmp_path / name).read_bytes() for name in names})
    same = blobs[0] == blobs[1]
    acceptance(10, "determinism", same,
               f"two invocations with master seed 10 (N=40, 3 runs, variants 2-3): "
               f"{len(names)} report files bitwise identical: {same}")
