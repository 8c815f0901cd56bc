"""Acceptance criteria for the estimator stack.

Each test prints one pass/fail line with the measured quantities, then
asserts.  Tolerances and runtime budgets are part of the criteria; random
seeds are fixed so every run measures the same draws.
"""

import math
import subprocess
import sys
import time
from dataclasses import replace

import numpy as np
import pytest

from precise.calibration import calibration_pairs, fit_isotonic
from precise.data import save_dataset, split_gold, split_indices
from precise.estimators import (
    DEFAULT_POLICY,
    GOLD_ONLY,
    LLM_PROB,
    LambdaPolicy,
    PRECISE_PPI,
    PerQueryStats,
    estimate_gold,
    estimate_llm_prob,
    estimate_precise_ppi,
    per_query_stats,
    select_lambda,
)
from precise.experiments import (
    PROFILES,
    TrialConfig,
    ablate_unlabeled_size,
    calibration_diagnostics,
    run_resampling,
    simulate_pool,
)
from precise.metrics import PRECISION_AT_K, expected_metric_enumerate, vector_probabilities

from test_calibration import monotone_lsq_oracle


def report(capsys, name, ok, detail):
    with capsys.disabled():
        print(f"\ncriterion {name}: {'PASS' if ok else 'FAIL'} ({detail})")


def random_stats(rng, n, N, correlated=True):
    mu_g = rng.random(n)
    phi = 0.7 * mu_g + 0.3 * rng.random(n) if correlated else rng.random(n)
    mu_u = rng.random(N)
    gold = [PerQueryStats(f"g{i}", float(m), float(p)) for i, (m, p) in enumerate(zip(mu_g, phi))]
    unl = [PerQueryStats(f"u{i}", float(m)) for i, m in enumerate(mu_u)]
    return gold, unl


def test_criterion_01_enumeration_closed_form(capsys):
    start = time.perf_counter()
    rng = np.random.default_rng(101)
    worst_metric, worst_mass = 0.0, 0.0
    for k in range(1, 13):
        vectors = rng.random((1000, k))
        for p in vectors:
            err = abs(expected_metric_enumerate(PRECISION_AT_K, p) - float(p.mean()))
            worst_metric = max(worst_metric, err)
            mass_err = abs(float(np.sum(vector_probabilities(p))) - 1.0)
            worst_mass = max(worst_mass, mass_err)
    elapsed = time.perf_counter() - start
    ok = worst_metric <= 1e-10 and worst_mass <= 1e-12 and elapsed < 5.0
    report(
        capsys,
        "1 enumeration vs closed form",
        ok,
        f"max metric err {worst_metric:.2e}, max mass err {worst_mass:.2e}, {elapsed:.2f}s",
    )
    assert worst_metric <= 1e-10
    assert worst_mass <= 1e-12
    assert elapsed < 5.0


def test_criterion_02_lambda_zero_reduction(capsys):
    start = time.perf_counter()
    rng = np.random.default_rng(102)
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(5, 40))
        N = int(rng.integers(10, 200))
        gold, unl = random_stats(rng, n, N)
        ppi = estimate_precise_ppi(gold, unl, LambdaPolicy.fixed(0.0))
        ref = estimate_gold(gold)
        worst = max(worst, abs(ppi.value - ref.value), abs(ppi.variance - ref.variance))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-12 and elapsed < 1.0
    report(capsys, "2 lambda-zero reduction", ok, f"max diff {worst:.2e}, {elapsed:.2f}s")
    assert worst <= 1e-12
    assert elapsed < 1.0


def test_criterion_03_perfect_annotator_identity(capsys):
    start = time.perf_counter()
    worst = 0.0
    for seed in (0, 1, 2):
        pool = simulate_pool(500, 4, 0.5, PROFILES["perfect"], seed=seed)
        ds = split_gold(pool, 100, seed=seed)
        gold, unl = per_query_stats(ds)
        ppi = estimate_precise_ppi(gold, unl, LambdaPolicy.fixed(1.0))
        ref = estimate_llm_prob(unl)
        worst = max(worst, abs(ppi.value - ref.value))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-12 and elapsed < 1.0
    report(capsys, "3 perfect-annotator identity", ok, f"max diff {worst:.2e}, {elapsed:.2f}s")
    assert worst <= 1e-12
    assert elapsed < 1.0


def test_criterion_04_debiasing_under_shift(capsys):
    start = time.perf_counter()
    profile = replace(PROFILES["overconfident"], systematic_shift=0.15)
    pool = simulate_pool(20_000, 4, 0.8973, profile, seed=2024)
    cfg = TrialConfig(
        n_gold=100,
        trials=500,
        base_seed=0,
        estimators=(LLM_PROB, PRECISE_PPI),
    )
    rep = run_resampling(pool, cfg, max_unlabeled=10_000)
    elapsed = time.perf_counter() - start
    ppi = rep.estimators[PRECISE_PPI]
    prob = rep.estimators[LLM_PROB]
    ppi_limit = 3.0 * ppi.std_error / math.sqrt(cfg.trials)
    ok = abs(ppi.bias) <= ppi_limit and prob.bias >= 5.0 and elapsed < 300.0
    report(
        capsys,
        "4 debiasing under systematic shift",
        ok,
        f"truth {rep.truth:.4f}, ppi bias {ppi.bias:+.3f}pp (limit {ppi_limit:.3f}),"
        f" prob bias {prob.bias:+.2f}pp, {elapsed:.1f}s",
    )
    assert abs(ppi.bias) <= ppi_limit
    assert prob.bias >= 5.0
    assert elapsed < 300.0


def test_criterion_05_variance_reduction(capsys):
    start = time.perf_counter()
    pool = simulate_pool(20_000, 4, 0.6, PROFILES["sonnet"], seed=2025)
    diag = calibration_diagnostics(calibration_pairs(pool))
    cfg = TrialConfig(
        n_gold=30,
        trials=500,
        base_seed=0,
        estimators=(GOLD_ONLY, PRECISE_PPI),
    )
    rep = run_resampling(pool, cfg, max_unlabeled=10_000)
    elapsed = time.perf_counter() - start
    gold_se = rep.estimators[GOLD_ONLY].std_error
    ppi_se = rep.estimators[PRECISE_PPI].std_error
    ratio = ppi_se / gold_se
    separated = diag.frac_positive_high > 0.9 and diag.frac_negative_low > 0.9
    ok = separated and ratio <= 0.9 and elapsed < 300.0
    report(
        capsys,
        "5 variance reduction",
        ok,
        f"separation {diag.frac_positive_high:.3f}/{diag.frac_negative_low:.3f},"
        f" gold se {gold_se:.2f}pp, ppi se {ppi_se:.2f}pp, ratio {ratio:.3f}, {elapsed:.1f}s",
    )
    assert separated
    assert ratio <= 0.9
    assert elapsed < 300.0


def test_criterion_06_ablation_plateau(capsys):
    start = time.perf_counter()
    pool = simulate_pool(60_030, 4, 0.6, PROFILES["sonnet"], seed=2026)
    cfg = TrialConfig(
        n_gold=30,
        trials=50,
        base_seed=0,
        estimators=(GOLD_ONLY, PRECISE_PPI),
        per_query_cost_usd=0.25,
    )
    reports = ablate_unlabeled_size(pool, cfg, [10, 100, 2000])
    elapsed = time.perf_counter() - start
    se_100 = reports[1].estimators[PRECISE_PPI].std_error
    se_2000 = reports[2].estimators[PRECISE_PPI].std_error
    plateau = abs(se_100 - se_2000) / se_2000
    cost_exact = reports[1].cost_usd == 0.05 * reports[2].cost_usd
    golds = {r.estimators[GOLD_ONLY].std_error for r in reports}
    ok = plateau <= 0.15 and cost_exact and len(golds) == 1 and elapsed < 600.0
    report(
        capsys,
        "6 unlabeled-size ablation plateau",
        ok,
        f"se x100 {se_100:.2f}pp vs x2000 {se_2000:.2f}pp (rel diff {plateau:.3f}),"
        f" cost ${reports[1].cost_usd:.2f} vs ${reports[2].cost_usd:.2f}, {elapsed:.1f}s",
    )
    assert plateau <= 0.15
    assert cost_exact
    assert len(golds) == 1  # gold draw shared across multipliers
    assert elapsed < 600.0


@pytest.mark.filterwarnings("ignore:all calibration pairs")
def test_criterion_07_isotonic_oracle(capsys):
    start = time.perf_counter()
    rng = np.random.default_rng(107)
    worst = 0.0
    for _ in range(500):
        m = int(rng.integers(2, 11))
        raws = np.round(rng.random(m), 2)
        labels = (rng.random(m) < rng.random()).astype(float)
        uniq, expected = monotone_lsq_oracle(raws, labels)
        cal = fit_isotonic(list(zip(raws, labels)))
        worst = max(worst, float(np.max(np.abs(cal.apply_array(uniq) - expected))))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-9 and elapsed < 10.0
    report(capsys, "7 isotonic fit vs partition oracle", ok, f"max diff {worst:.2e}, {elapsed:.2f}s")
    assert worst <= 1e-9
    assert elapsed < 10.0


def test_criterion_08_ci_coverage(capsys):
    start = time.perf_counter()
    pool = simulate_pool(10_100, 4, 0.6, PROFILES["sonnet"], seed=2028)
    stats, _ = per_query_stats(pool)
    phi = np.array([s.phi for s in stats])
    truth = math.fsum(phi) / phi.size
    covered = 0
    trials = 1000
    for t in range(trials):
        gidx, uidx = split_indices(len(stats), 100, seed=t)
        gold = [stats[i] for i in gidx]
        unl = [stats[i] for i in uidx]
        est = estimate_precise_ppi(gold, unl, DEFAULT_POLICY)
        if est.ci[0] <= truth <= est.ci[1]:
            covered += 1
    elapsed = time.perf_counter() - start
    coverage = 100.0 * covered / trials
    ok = 92.0 <= coverage <= 98.0 and elapsed < 600.0
    report(capsys, "8 interval coverage", ok, f"coverage {coverage:.1f}%, {elapsed:.1f}s")
    assert 92.0 <= coverage <= 98.0
    assert elapsed < 600.0


def test_criterion_09_lambda_selection_consistency(capsys):
    start = time.perf_counter()
    rng = np.random.default_rng(109)
    kept, worst = 0, 0.0
    while kept < 200:
        weight = rng.uniform(0.2, 0.9)
        n, N = 30, 200
        mu_g = rng.random(n)
        phi = weight * mu_g + (1 - weight) * rng.random(n)
        mu_u = rng.random(N)
        gold = [PerQueryStats(f"g{i}", float(m), float(p)) for i, (m, p) in enumerate(zip(mu_g, phi))]
        unl = [PerQueryStats(f"u{i}", float(m)) for i, m in enumerate(mu_u)]
        analytic = select_lambda(gold, unl, LambdaPolicy.analytic())
        if not 0.0 < analytic < 1.0:
            continue
        kept += 1
        gridded = select_lambda(gold, unl, LambdaPolicy.grid(0.001))
        worst = max(worst, abs(analytic - gridded))
    elapsed = time.perf_counter() - start
    ok = worst <= 0.001 + 1e-9 and elapsed < 30.0
    report(capsys, "9 analytic vs grid lambda", ok, f"max gap {worst:.5f}, {elapsed:.2f}s")
    assert worst <= 0.001 + 1e-9
    assert elapsed < 30.0


def test_criterion_10_cli_determinism(capsys, tmp_path, monkeypatch):
    monkeypatch.delenv("PRECISE_CONFIG", raising=False)
    start = time.perf_counter()
    pool = simulate_pool(130, 3, 0.5, PROFILES["sonnet"], seed=0)
    ds = split_gold(pool, 30, seed=0)
    data_path = tmp_path / "pool.jsonl"
    save_dataset(ds, data_path)
    full_path = tmp_path / "full.jsonl"
    save_dataset(pool, full_path)

    def run_twice(label, argv_for):
        dirs = [tmp_path / f"{label}{i}" for i in (1, 2)]
        for d in dirs:
            d.mkdir()
            cmd = [sys.executable, "-m", "precise"] + [str(a) for a in argv_for(d)]
            proc = subprocess.run(cmd, capture_output=True, text=True)
            assert proc.returncode == 0, proc.stderr
        first, second = dirs
        files = sorted(p.name for p in first.iterdir())
        assert files == sorted(p.name for p in second.iterdir())
        mismatched = [
            name for name in files if (first / name).read_bytes() != (second / name).read_bytes()
        ]
        return files, mismatched

    bad = []
    _, m = run_twice(
        "est", lambda d: ["estimate", data_path, "--k", "3", "--format", "json",
                          "--seed", "7", "--out", d / "estimates.json"]
    )
    bad += m
    _, m = run_twice(
        "cal", lambda d: ["calibrate", data_path, "--k", "3", "--out", d / "map.json"]
    )
    bad += m
    _, m = run_twice(
        "exp", lambda d: ["experiment", full_path, "--k", "3", "--n", "20", "--trials", "4",
                          "--seed", "3", "--ablate", "2,5", "--out", d]
    )
    bad += m
    elapsed = time.perf_counter() - start
    ok = not bad
    report(
        capsys,
        "10 byte-identical reruns",
        ok,
        f"estimate, calibrate, experiment outputs compared; mismatches {bad or 'none'},"
        f" {elapsed:.1f}s",
    )
    assert not bad
