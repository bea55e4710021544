"""Acceptance criteria, one test each. Every test records a PASS/FAIL line
that is printed in the terminal summary."""
import os
import time
from pathlib import Path

import numpy as np
import pytest

from conftest import ACCEPTANCE_RESULTS, random_graph
from oracles import (
    brute_mismatch,
    dense_block_edge_counts,
    dense_block_sums,
    dense_confusion,
    dense_two_paths,
    oriented_vote,
)
from plcomm import SbmConfig, SpectralConfig, nmi, sample_dcsbm, spectral_cluster
from plcomm.datasets import load_gml
from plcomm.em import FitConfig, fit
from plcomm.generators import DirectedPairConfig, InfeasibleConfigError, sample_directed
from plcomm.graph import (block_edge_counts, block_sums, confusion, degrees, mismatch_ratio,
                          two_path_counts)
from plcomm.cli import loglog_slope
from plcomm.theory import (TheoryConfig, min_feasible_eps, one_step_cpl, sample_gamma_labeling,
                           summarize_sweep, theorem_sweep)

TAU2_GRID = [1, 2, 4, 8, 16, 32]
BETAS = [0.0, 0.05, 0.10, 0.15, 0.20]


def record(name, ok, detail):
    ACCEPTANCE_RESULTS[name] = (bool(ok), detail)
    assert ok, detail


def non_increasing(values):
    return all(b <= a for a, b in zip(values, values[1:]))


def test_1_oracle_equivalence():
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    failures = 0
    for _ in range(200):
        n = int(rng.integers(1, 13))
        k = int(rng.integers(1, 5))
        g, A = random_graph(rng, n, rng.uniform(0, 0.6))
        e = rng.integers(0, k, n)
        c = rng.integers(0, k, n)
        o, npairs = block_edge_counts(g, e, k)
        o_ref, np_ref = dense_block_edge_counts(A, e, k)
        checks = [
            np.array_equal(block_sums(g, e, k), dense_block_sums(A, e, k)),
            np.array_equal(confusion(e, c, k), dense_confusion(e, c, k)),
            np.array_equal(o, o_ref) and np.array_equal(npairs, np_ref),
            np.array_equal(two_path_counts(g), dense_two_paths(A)),
            mismatch_ratio(e, c, k) == brute_mismatch(e, c, k),
        ]
        failures += not all(checks)
    secs = time.perf_counter() - t0
    record("1 oracle equivalence", failures == 0 and secs < 10,
           f"{failures} mismatching graphs of 200, {secs:.2f} s (limit 10 s)")


def test_2_em_monotonicity():
    t0 = time.perf_counter()
    worst = 0.0
    violations = 0
    for seed in range(50):
        rng = np.random.default_rng(seed)
        while True:
            n = int(rng.integers(20, 201))
            k = int(rng.integers(2, 5))
            try:
                cfg = SbmConfig(n=n, K=k, beta=float(rng.uniform(0, 0.5)),
                                lambda_=float(rng.uniform(2, 12)),
                                rho=float(rng.uniform(0, 0.8)), seed=seed)
                g, _, _ = sample_dcsbm(cfg)
                break
            except InfeasibleConfigError:
                continue  # rates above 1 for this draw
        e0 = np.r_[np.arange(k), rng.integers(0, k, n - k)]
        for method in ("upl", "cpl"):
            res = fit(g, e0, method, FitConfig(T_outer=5), k=k)
            rounds = {}
            for outer, _, v in res.loglik_trace:
                rounds.setdefault(outer, []).append(v)
            for vals in rounds.values():
                for a, b in zip(vals, vals[1:]):
                    drop = (a - b) / max(abs(a), 1e-300)
                    worst = max(worst, drop)
                    violations += drop > 1e-9
    secs = time.perf_counter() - t0
    record("2 EM monotonicity", violations == 0 and secs < 60,
           f"{violations} decreases beyond 1e-9 relative (worst {worst:.2e}), {secs:.1f} s (limit 60 s)")


def test_3_recovery_trend():
    t0 = time.perf_counter()
    medians = []
    for beta in BETAS:
        scores = []
        for seed in range(10):
            cfg = SbmConfig(n=600, K=3, beta=beta, lambda_=12, rho=0.0, seed=seed)
            g, truth, _ = sample_dcsbm(cfg)
            e0 = spectral_cluster(g, SpectralConfig(K=3, seed=seed))
            scores.append(nmi(fit(g, e0, "cpl", FitConfig(T_outer=20), k=3).labels, truth))
        medians.append(float(np.median(scores)))
    rises = [b - a for a, b in zip(medians, medians[1:]) if b > a]
    trend_ok = len(rises) <= 1 and all(r <= 0.02 for r in rises)
    secs = time.perf_counter() - t0
    ok = medians[0] >= 0.99 and trend_ok and secs < 300
    record("3 recovery trend", ok,
           "median NMI by beta " + ", ".join(f"{b:g}:{m:.4f}" for b, m in zip(BETAS, medians))
           + f"; {secs:.1f} s (limit 300 s)")


def test_4_scp_beats_sc():
    scp, sc = [], []
    for seed in range(20):
        g, truth, _ = sample_dcsbm(SbmConfig(n=1000, K=3, beta=0.05, lambda_=3, seed=seed))
        scp.append(nmi(spectral_cluster(g, SpectralConfig(K=3, seed=seed)), truth))
        sc.append(nmi(spectral_cluster(g, SpectralConfig(K=3, perturb=False, seed=seed)), truth))
    a, b = float(np.median(scp)), float(np.median(sc))
    record("4 SCP beats plain SC", a > b, f"median NMI SCP {a:.4f} vs SC {b:.4f}")


def test_5_one_step_consistency():
    t0 = time.perf_counter()
    seeds = list(range(20))
    directed = summarize_sweep(theorem_sweep(TheoryConfig(m=1000, gamma=0.3, seeds=seeds),
                                             TAU2_GRID, ratio=4))
    d_meds = [r["median_mismatch"] for r in directed]
    d_ok = non_increasing(d_meds) and d_meds[-1] <= 0.05

    # ratio 4 never satisfies the undirected degree condition; use a ratio that does
    infeasible = [min_feasible_eps(4, 1, 0.3) is None]
    rows = theorem_sweep(TheoryConfig(m=1000, a=20, b=1, gamma=0.1, model="undirected",
                                      seeds=seeds), TAU2_GRID)
    feasible = all(r["degree_condition_ok"] for r in rows)
    u_meds = [r["median_mismatch"] for r in summarize_sweep(rows)]
    u_ok = feasible and non_increasing(u_meds) and u_meds[-1] <= 0.05
    secs = time.perf_counter() - t0
    ok = d_ok and u_ok and all(infeasible) and secs < 180
    record("5 one-step CPL consistency", ok,
           "directed gamma=0.3 a/b=4 medians " + ", ".join(f"{m:.4f}" for m in d_meds)
           + "; undirected gamma=0.1 a/b=20 (degree condition feasible in every cell) medians "
           + ", ".join(f"{m:.4f}" for m in u_meds) + f"; {secs:.1f} s (limit 180 s)")


def test_6_majority_vote_equivalence():
    rng = np.random.default_rng(77)
    disagreements = 0
    variant_changes = 0
    for _ in range(100):
        m = int(rng.integers(2, 40))
        j = int(rng.integers(1, m))
        if 2 * j == m:
            j += 1
        gamma = j / m
        a, b = sorted(rng.uniform(0.1, m / 2, size=2))[::-1]
        if rng.random() < 0.3:
            a, b = b, a  # disassortative
        gd, _ = sample_directed(DirectedPairConfig(m=m, a=float(a), b=float(b),
                                                   seed=int(rng.integers(2**31))))
        e = sample_gamma_labeling(m, gamma, int(rng.integers(2**31)))
        A = gd.to_dense()
        ref = one_step_cpl(gd, e, a, b, gamma=gamma)
        disagreements += not np.array_equal(ref, oriented_vote(A, e, a, b, gamma))
        # other estimates with the same ordering, and other overlaps on the same side
        for _ in range(3):
            lo, hi = sorted(rng.uniform(0.01, m, size=2))
            a2, b2 = (hi, lo) if a > b else (lo, hi)
            g2 = float(rng.uniform(0.51, 0.99) if gamma > 0.5 else rng.uniform(0.01, 0.49))
            for kwargs in ({"gamma": gamma}, {"gamma": g2}):
                variant_changes += not np.array_equal(ref, one_step_cpl(gd, e, a2, b2, **kwargs))
    record("6 majority-vote equivalence", disagreements == 0 and variant_changes == 0,
           f"{disagreements} of 100 instances disagree with the sign test; "
           f"{variant_changes} label changes across 600 alternative (a_hat, b_hat, gamma) choices")


def test_7_runtime_scaling():
    sizes = [10_000, 20_000, 40_000, 80_000]
    per_outer = []
    for n in sizes:
        samples = []
        for rep in range(3):
            g, _, _ = sample_dcsbm(SbmConfig(n=n, K=3, beta=0.1, lambda_=10, seed=rep))
            e0 = spectral_cluster(g, SpectralConfig(K=3, seed=rep))
            t0 = time.perf_counter()
            res = fit(g, e0, "cpl", k=3)
            samples.append((time.perf_counter() - t0) / res.outer_rounds_run)
        per_outer.append(float(np.median(samples)))
    slope = loglog_slope(sizes, per_outer)

    t0 = time.perf_counter()
    g, truth, _ = sample_dcsbm(SbmConfig(n=1_000_000, K=3, beta=0.1, lambda_=10, seed=0))
    t1 = time.perf_counter()
    e0 = spectral_cluster(g, SpectralConfig(K=3, seed=0))
    t2 = time.perf_counter()
    res = fit(g, e0, "cpl", k=3)
    t3 = time.perf_counter()
    record("7 runtime scaling", slope <= 1.3 and t3 - t2 < 600,
           f"per-outer fit slope {slope:.3f} (limit 1.3); n=1e6: generate {t1 - t0:.1f} s, "
           f"SCP {t2 - t1:.1f} s, CPL fit {t3 - t2:.1f} s (limit 600 s), "
           f"NMI {nmi(res.labels, truth):.3f}")


def _blogs_path():
    env = os.environ.get("PLCOMM_POLBLOGS")
    candidates = [Path(env)] if env else []
    root = Path(__file__).resolve().parents[1]
    candidates += [root / "data" / "polblogs.gml", root / "examples" / "polblogs.gml"]
    return next((p for p in candidates if p.is_file()), None)


def test_8_political_blogs():
    path = _blogs_path()
    name = "8 political blogs"
    if path is None:
        ACCEPTANCE_RESULTS[name] = (None, "dataset not available; set PLCOMM_POLBLOGS to polblogs.gml")
        pytest.skip("political blogs GML not available")
    g, labels = load_gml(path)
    d = degrees(g)
    e0 = spectral_cluster(g, SpectralConfig(K=2, seed=0))
    cpl = nmi(fit(g, e0, "cpl", k=2).labels, labels)
    upl = nmi(fit(g, e0, "upl", k=2).labels, labels)
    ok = g.n == 1222 and abs(d.mean() - 27) <= 0.5 and cpl > upl
    record(name, ok, f"n={g.n}, mean degree {d.mean():.2f}, NMI CPL {cpl:.4f} vs UPL {upl:.4f}")
