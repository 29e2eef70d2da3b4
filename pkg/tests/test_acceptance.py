"""Acceptance criteria 1-15.

Each test prints one PASS/FAIL line (collected again in the terminal summary).
The statistical criteria run fresh Monte-Carlo sweeps; the shared d = 1 sweep
is a session fixture used by criteria 8, 9, 10 and 14.
"""
import math
import subprocess
import sys
import time

import numpy as np
import pytest

from msre import rng as rngmod
from msre.disorder import (HeightGrid, HurstParams, fbm_covariance, sample_disorder,
                           sample_fbm_line)
from msre.experiments import (CouplingConfig, ExperimentConfig, check_scaling_relations,
                              delocalization_coupling_demo, estimate_chi, estimate_h_minus,
                              estimate_h_plus, estimate_xi, run_height_sweep)
from msre.experiments.estimators import concentration_check
from msre.lattice import Domain, pi_bump
from msre.solvers import build_problem, maxflow
from msre.solvers.graphcut import build_network
from msre.verify import (check_boundary_reduction, check_claim_a, check_greens,
                         check_main_identity, check_solver_oracles)


def _timed(fn, *a, **kw):
    t0 = time.perf_counter()
    out = fn(*a, **kw)
    return out, time.perf_counter() - t0


# deterministic

def test_c01_main_identity(report_line):
    res, dt = _timed(check_main_identity, 1000)
    ok = res.ok and dt < 30
    report_line(1, ok, f"{res.detail}; {dt:.1f}s (< 30s)")
    assert ok


def test_c02_boundary_reduction(report_line):
    res, dt = _timed(check_boundary_reduction, 200, alpha=0.01)
    ok = res.ok and dt < 120
    report_line(2, ok, f"{res.detail}; {dt:.1f}s (< 120s)")
    assert ok


def test_c03_solver_oracles(report_line):
    res, dt = _timed(check_solver_oracles, 50, 100)
    ok = res.ok and dt < 120
    report_line(3, ok, f"{res.detail}; {dt:.1f}s (< 120s)")
    assert ok


def test_c04_claim_a(report_line):
    check_claim_a(1000)  # warm-up
    res, dt = _timed(check_claim_a, 1_000_000)
    ok = res.ok and dt < 10
    report_line(4, ok, f"{res.detail}; {dt:.1f}s (< 10s)")
    assert ok


def test_c05_greens(report_line):
    res, dt = _timed(check_greens, 20)
    ok = res.ok and dt < 60
    report_line(5, ok, f"{res.detail}; {dt:.1f}s (< 60s)")
    assert ok


def test_c06_bump_function(report_line):
    t0 = time.perf_counter()
    reps = [pi_bump(L, 0.1, 2, "product", check=False)[1] for L in (8, 16, 32)]
    dt = time.perf_counter() - t0
    exact = all(r["vanishes_outside"] and r["inner_min"] >= 1 - 1e-12 for r in reps)
    lap = [r["laplace_const"] for r in reps]
    en = [r["energy_const"] for r in reps]
    ratio_lap, ratio_en = max(lap) / min(lap), max(en) / min(en)
    ok = exact and ratio_lap <= 1.5 and ratio_en <= 1.5 and dt < 60
    report_line(6, ok, f"exact conditions {'hold' if exact else 'fail'}; "
                       f"max Δπ·L² = {[f'{x:.3g}' for x in lap]} (ratio {ratio_lap:.3g}), "
                       f"‖∇π‖² = {[f'{x:.3g}' for x in en]} (ratio {ratio_en:.3g}); "
                       f"stability needs ratio <= 1.5")
    assert ok


# statistical

COV_PAIRS = [(1.0, 1.0), (1.0, -1.0), (2.0, 0.5), (-1.5, 3.0), (4.0, 4.0), (0.5, -4.0)]


def test_c07_fbm_covariance(report_line):
    t0 = time.perf_counter()
    grid = HeightGrid(1, 0.5, 8)
    worst = []
    ok = True
    for j, H in enumerate((0.3, 0.5, 0.8)):
        x = sample_fbm_line(grid, H, rngmod.stream(7, 7, j), size=100_000)
        for t, s in COV_PAIRS:
            a, b = x[:, int(round(t / 0.5)) + 8], x[:, int(round(s / 0.5)) + 8]
            prod = a * b
            emp = prod.mean()
            true = fbm_covariance(np.array([t]), np.array([s]), H)
            se = prod.std(ddof=1) / math.sqrt(prod.size)
            tol = max(0.05 * abs(true), 3 * se)
            ok &= abs(emp - true) <= tol
            worst.append(abs(emp - true) / tol)
    dt = time.perf_counter() - t0
    ok &= dt < 120
    report_line(7, ok, f"{len(worst)} (H, t, s) cases, worst |error|/tolerance "
                       f"{max(worst):.2f}; {dt:.1f}s (< 120s)")
    assert ok


D1_CONFIG = dict(d=1, n=1, H=0.5, L_values=[32, 64, 128, 256, 512], samples_per_L=200,
                 seed=2024, solver="chain_dp")


@pytest.fixture(scope="session")
def d1_sweep(tmp_path_factory):
    cfg = ExperimentConfig(**D1_CONFIG)
    path = tmp_path_factory.mktemp("d1") / "records.jsonl"
    (recs, errs), dt = _timed(run_height_sweep, cfg, path, 1, False)
    return cfg, recs, errs, dt


@pytest.fixture(scope="session")
def d1_estimates(d1_sweep):
    _, recs, _, _ = d1_sweep
    return estimate_xi(recs, min_samples=200, seed=1), estimate_chi(recs, min_samples=200, seed=2)


def test_c08_xi_d1(d1_sweep, d1_estimates, report_line):
    _, recs, errs, dt = d1_sweep
    xi, _ = d1_estimates
    ok = 0.85 <= xi.slope <= 1.15 and dt < 20 * 60 and not errs
    report_line(8, ok, f"xi = {xi.slope:.3f} ± {xi.stderr:.3f} (bootstrap CI "
                       f"[{xi.ci_low:.3f}, {xi.ci_high:.3f}]), band [0.85, 1.15]; "
                       f"{len(recs)} samples in {dt / 60:.1f} min (< 20 min)")
    assert ok


def test_c09_chi_d1(d1_estimates, report_line):
    _, chi = d1_estimates
    in_band = 0.8 <= chi.slope <= 1.2
    ci_hits = chi.ci_low <= 1.1 and chi.ci_high >= 0.9
    ok = in_band and ci_hits
    report_line(9, ok, f"chi = {chi.slope:.3f} ± {chi.stderr:.3f}, band [0.8, 1.2]; bootstrap CI "
                       f"[{chi.ci_low:.3f}, {chi.ci_high:.3f}] must meet [0.9, 1.1]")
    assert ok


def test_c10_scaling_relations(d1_estimates, report_line):
    xi, chi = d1_estimates
    rep = check_scaling_relations(xi, chi, 1, 0.5)
    ok = rep.within(0.3)
    report_line(10, ok, f"residuals chi-(2xi+d-2) = {rep.residual_energy:+.3f}, "
                        f"chi-(H xi+d/2) = {rep.residual_hurst:+.3f} (|.| <= 0.3)")
    assert ok


def test_c11_xi_d2(tmp_path, report_line):
    cfg = ExperimentConfig(d=2, n=1, H=0.5, L_values=[8, 12, 16, 24, 32], samples_per_L=100,
                           seed=2025, kappa=1.5, delta=1.0, solver="graphcut")
    (recs, errs), dt = _timed(run_height_sweep, cfg, tmp_path / "d2.jsonl", 1, False)
    xi = estimate_xi(recs, min_samples=100, seed=3)
    doublings = sum(r.K_doublings > 0 for r in recs)
    ok = 0.50 <= xi.slope <= 0.85 and dt < 3600 and not errs
    report_line(11, ok, f"xi = {xi.slope:.3f} ± {xi.stderr:.3f} (bootstrap CI "
                        f"[{xi.ci_low:.3f}, {xi.ci_high:.3f}]), band [0.50, 0.85]; "
                        f"{len(recs)} samples, {doublings} grid doublings, {dt / 60:.1f} min (< 60)")
    assert ok


def test_c12_hurst_direction(tmp_path, report_line):
    est = {}
    for k, H in enumerate((0.3, 0.5, 0.8)):
        cfg = ExperimentConfig(d=1, n=1, H=H, L_values=[16, 32, 64, 128, 256], samples_per_L=200,
                               seed=3000 + k, solver="chain_dp")
        recs, errs = run_height_sweep(cfg, tmp_path / f"h{k}.jsonl", 1, False)
        assert not errs
        est[H] = estimate_xi(recs, min_samples=200, seed=k)
    lo = {H: e.slope - e.stderr for H, e in est.items()}
    hi = {H: e.slope + e.stderr for H, e in est.items()}
    ordered = est[0.8].slope > est[0.5].slope > est[0.3].slope
    separate = lo[0.8] > hi[0.5] and lo[0.5] > hi[0.3]
    ok = ordered and separate
    report_line(12, ok, "xi(H) = " + ", ".join(
        f"{H}: {e.slope:.3f} ± {e.stderr:.3f}" for H, e in est.items())
        + " (1-sigma intervals must be ordered and disjoint)")
    assert ok


def test_c13_coupling(report_line):
    cfg = CouplingConfig(d=1, H=0.5, L=64, N=500, seed=13)
    rep, dt = _timed(delocalization_coupling_demo, cfg)
    s = rep.summary()
    ok = rep.conditional_significant and not rep.control_significant and dt < 900
    report_line(13, ok, f"delocalized fraction base {s['mean_frac_base']:.3f}, lower-tail "
                        f"{s['mean_frac_conditional']:.3f} (p = {rep.p_cond:.1e}), upper-tail "
                        f"control {s['mean_frac_control']:.3f} (p = {rep.p_ctrl:.2f}); premise "
                        f"rate {rep.premise_rate:.2f}, marginal KS p = {rep.p_marginal_ks:.2f}; "
                        f"N = 500, {dt / 60:.1f} min (< 15)")
    assert ok


def test_c14_localization_contrast(d1_sweep, d1_estimates, tmp_path, report_line):
    _, recs, errs, _ = d1_sweep
    xi, _ = d1_estimates
    grows = xi.ci_low > 0
    recheck = max(r.ge_recheck / (1 + abs(r.GE)) for r in recs)
    doubled = np.mean([r.K_doublings > 0 for r in recs])
    monitors = recheck < 1e-9 and doubled <= 0.01 and not errs
    # d = 4 diagnostic, no assertion on the values
    cfg4 = ExperimentConfig(d=4, n=1, H=0.5, L_values=[2, 3], samples_per_L=100, seed=4,
                            store_heights=True, solver="graphcut", delta=0.25, kappa=2.0)
    recs4, errs4 = run_height_sweep(cfg4, tmp_path / "d4.jsonl", 1, False)
    diag = []
    for L in cfg4.L_values:
        rs = [r for r in recs4 if r.L == L]
        diag.append(f"L={L}: h- = {estimate_h_minus(rs):.2f}, h+ = {estimate_h_plus(rs, 0.5):.2f}")
    ok = grows and monitors and not errs4
    report_line(14, ok, f"d=1 median max height slope CI [{xi.ci_low:.3f}, {xi.ci_high:.3f}] "
                        f"excludes 0; GE recheck {recheck:.1e}, grid doublings {doubled:.1%}; "
                        f"d=4 diagnostic (not asserted) {'; '.join(diag)}; d>=5 and "
                        f"quantitative d=4 claims not reproduced")
    assert ok


def test_concentration_diagnostic(tmp_path, capsys):
    """Not an acceptance criterion: d=1, L=128, 2000 samples, reported only."""
    cfg = ExperimentConfig(d=1, n=1, H=0.5, L_values=[128], samples_per_L=2000, seed=128,
                           solver="chain_dp")
    recs, _ = run_height_sweep(cfg, tmp_path / "c.jsonl", 1, False)
    rep = concentration_check(recs, 1, 0.5)
    tail = rep.tail
    with capsys.disabled():
        print(f"\n[diagnostic] concentration d=1 L=128: P(|GE-mean| >= t L^chi) = "
              f"{dict(zip(rep.ts, rep.probabilities))}; stretch exponent "
              f"{'n/a' if tail is None else f'{tail.exponent:.2f} [{tail.ci_low:.2f}, {tail.ci_high:.2f}]'}"
              f" vs 2-H = {rep.target_exponent}")
    assert rep.monotone and rep.finite


# performance

def test_c15_performance(report_line):
    dom = Domain.box(32, 2)
    field = sample_disorder(dom, HeightGrid(1, 1.0, 16), HurstParams(0.5), 15)
    small = sample_disorder(Domain.box(2, 2), HeightGrid(1, 1.0, 2), HurstParams(0.5), 0)
    maxflow(build_network(build_problem(small))[0])  # compile
    problem = build_problem(field, window=(-16, 15))
    net, _ = build_network(problem)
    res, dt_flow = _timed(maxflow, net)
    t0 = time.perf_counter()
    r = subprocess.run([sys.executable, "-m", "msre", "verify", "--quick"], capture_output=True,
                       text=True)
    t_verify = time.perf_counter() - t0
    ok = dt_flow < 10 and r.returncode == 0 and t_verify < 60
    report_line(15, ok, f"max-flow on d=2, L=32, M=32 ({dom.size} vertices, {net.n_nodes} nodes, "
                        f"{net.tails.size} arcs) in {dt_flow:.2f}s (< 10s); verify --quick exit "
                        f"{r.returncode} in {t_verify:.1f}s (< 60s)")
    assert ok
