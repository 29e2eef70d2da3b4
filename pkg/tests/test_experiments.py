import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from msre.errors import ConfigError, FitError, InsufficientDataError, PaddingError
from msre.experiments.config import (ExperimentConfig, chi_pred, merge_sources, read_env,
                                     read_kv_file, xi_pred)
from msre.experiments.coupling import (CouplingConfig, delocalization_coupling_demo,
                                       shift_field)
from msre.experiments.estimators import (check_scaling_relations, concentration_check,
                                         estimate_chi, estimate_from_summary, estimate_h_minus,
                                         estimate_h_plus, estimate_xi, read_summary_csv,
                                         summarize, tail_fit, write_summary_csv)
from msre.experiments.plots import write_plot_data
from msre.experiments.records import ExperimentRecord, body_lines, read_records
from msre.experiments.sweep import run_height_sweep, solve_sample
from msre.lattice import Domain


def rec(L, sample=0, **kw):
    base = dict(config_hash="x", L=L, sample=sample, seed=0, GE=0.0, max_height=1.0,
                heights_ell2H=1.0, frac_above=[], h_ladder=[], solver="chain_dp",
                solver_stats={}, K=1)
    base.update(kw)
    return ExperimentRecord(**base)


# config

def test_predicted_exponents():
    assert xi_pred(1, 0.5) == pytest.approx(1.0)
    assert xi_pred(2, 0.5) == pytest.approx(2 / 3)
    assert chi_pred(1, 0.5) == pytest.approx(1.0)
    assert chi_pred(3, 0.5) == pytest.approx(5 / 3)
    assert chi_pred(6, 0.3) == pytest.approx(3.0)


def test_config_validation():
    with pytest.raises(ConfigError):
        ExperimentConfig(d=1, n=1, H=0.5, L_values=[8, 4], samples_per_L=1, seed=0)
    with pytest.raises(ConfigError):
        ExperimentConfig(d=2, n=1, H=0.5, L_values=[4], samples_per_L=1, seed=0, solver="chain_dp")
    with pytest.raises(ConfigError):
        ExperimentConfig(d=1, n=2, H=0.5, L_values=[4], samples_per_L=1, seed=0, solver="graphcut")
    with pytest.raises(ConfigError):
        ExperimentConfig(d=1, n=1, H=1.5, L_values=[4], samples_per_L=1, seed=0)


def test_config_solver_and_grid():
    c = ExperimentConfig(d=2, n=1, H=0.5, L_values=[8], samples_per_L=1, seed=0)
    assert c.resolved_solver() == "graphcut"
    assert ExperimentConfig(d=1, n=2, H=0.5, L_values=[8], samples_per_L=1,
                            seed=0).resolved_solver() == "chain_dp"
    assert ExperimentConfig(d=2, n=2, H=0.5, L_values=[8], samples_per_L=1,
                            seed=0).resolved_solver() == "coord_descent"
    # K = ceil(κ L^ξ / δ) + ceil(|τ|/δ)
    c1 = ExperimentConfig(d=1, n=1, H=0.5, L_values=[32], samples_per_L=1, seed=0,
                          kappa=4.0, delta=0.5, tau_const=1.2)
    assert c1.grid_K(32) == math.ceil(4 * 32 / 0.5) + 3


def test_config_dict_roundtrip_and_errors():
    c = ExperimentConfig(d=1, n=1, H=0.3, L_values=[4, 8], samples_per_L=2, seed=9)
    assert ExperimentConfig.from_dict(c.to_dict()) == c
    other = ExperimentConfig.from_dict({**c.to_dict(), "output": "elsewhere.jsonl"})
    assert other.hash() == c.hash()
    with pytest.raises(ConfigError, match="unknown"):
        ExperimentConfig.from_dict({**c.to_dict(), "colour": 1})
    raw = c.to_dict()
    del raw["H"]
    with pytest.raises(ConfigError, match="missing required key: H"):
        ExperimentConfig.from_dict(raw)


def test_config_sources(tmp_path):
    p = tmp_path / "c.txt"
    p.write_text("# comment\nd = 1\nL-values = 4, 8\nH=0.3\n")
    fv = read_kv_file(p)
    env = read_env(["H", "seed"], {"MSRE_H": "0.4", "MSRE_SEED": "3"})
    merged = merge_sources(fv, env, {"H": 0.6, "seed": None})
    assert merged["H"] == 0.6 and merged["seed"] == "3" and merged["L_values"] == "4, 8"
    c = ExperimentConfig.from_dict({**merged, "n": 1, "samples_per_L": 1})
    assert c.L_values == [4, 8] and c.seed == 3


# sweep and records

def _small(**kw):
    base = dict(d=1, n=1, H=0.5, L_values=[4, 8], samples_per_L=3, seed=1, kappa=2.0)
    base.update(kw)
    return ExperimentConfig(**base)


def test_empty_sweep(tmp_path):
    recs, errs = run_height_sweep(_small(samples_per_L=0), tmp_path / "r.jsonl")
    assert recs == [] and errs == []


def test_sweep_deterministic_bytes(tmp_path):
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    run_height_sweep(_small(), a)
    run_height_sweep(_small(), b)
    assert body_lines(a) == body_lines(b)
    assert len(body_lines(a)) == 6


def test_sweep_resume_after_interrupt(tmp_path):
    full, part = tmp_path / "full.jsonl", tmp_path / "part.jsonl"
    run_height_sweep(_small(), full)
    lines = full.read_text().split("\n")
    # header, two records and half of a third line
    part.write_text("\n".join(lines[:3]) + "\n" + lines[3][:20])
    recs, _ = run_height_sweep(_small(), part)
    assert body_lines(part) == body_lines(full)
    assert len(recs) == 6


def test_resume_rejects_other_config(tmp_path):
    p = tmp_path / "r.jsonl"
    run_height_sweep(_small(samples_per_L=1), p)
    with pytest.raises(Exception, match="different configuration"):
        run_height_sweep(_small(samples_per_L=1, seed=2), p)


def test_sweep_parallel_matches_serial(tmp_path):
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    run_height_sweep(_small(), a, jobs=1)
    run_height_sweep(_small(), b, jobs=2)
    assert body_lines(a) == body_lines(b)


def test_solve_sample_monitors():
    r, res = solve_sample(_small(store_heights=True), 8, 0)
    assert r.ge_recheck < 1e-9
    assert len(r.site_heights) == Domain.box(8, 1).size
    assert r.max_height == pytest.approx(max(abs(x) for x in r.site_heights))
    assert r.frac_above[0] >= r.frac_above[-1]
    assert not res.pinned()
    assert "wall_time" not in r.solver_stats


def test_sweep_pin_doubling():
    # a grid that is far too small forces at least one doubling
    r, res = solve_sample(_small(kappa=0.05, max_doublings=6), 8, 0)
    assert r.K_doublings >= 1 and not res.pinned()


def test_records_reader_tolerates_partial_line(tmp_path):
    p = tmp_path / "r.jsonl"
    run_height_sweep(_small(samples_per_L=1), p)
    with open(p, "a") as fh:
        fh.write('{"kind": "rec')
    rs = read_records(p)
    assert len(rs.records) == 2


# estimators

def test_exact_power_law_slope():
    recs = [rec(L, i, max_height=L ** 0.75) for L in (8, 16, 32, 64) for i in range(30)]
    est = estimate_xi(recs)
    assert est.slope == pytest.approx(0.75, abs=1e-12)
    assert est.r_squared == pytest.approx(1.0, abs=1e-12)


def test_estimator_needs_data():
    recs = [rec(L, i, max_height=L) for L in (8, 16) for i in range(30)]
    with pytest.raises(InsufficientDataError):
        estimate_xi(recs)
    recs = [rec(L, i, max_height=L) for L in (8, 16, 32) for i in range(5)]
    with pytest.raises(InsufficientDataError):
        estimate_xi(recs)


def test_chi_synthetic_normal():
    g = np.random.default_rng(0)
    recs = [rec(L, i, GE=float(g.normal(0, L))) for L in (8, 16, 32, 64, 128)
            for i in range(400)]
    est = estimate_chi(recs, seed=1)
    assert est.ci_low <= 1.0 <= est.ci_high
    assert est.slope == pytest.approx(1.0, abs=0.1)


@pytest.mark.parametrize("xi,chi,d,H", [(1, 1, 1, 0.5), (2 / 3, 4 / 3, 2, 0.5)])
def test_scaling_relation_zero_residuals(xi, chi, d, H):
    rep = check_scaling_relations(xi, chi, d, H)
    assert rep.residual_energy == pytest.approx(0, abs=1e-12)
    assert rep.residual_hurst == pytest.approx(0, abs=1e-12)


@pytest.mark.parametrize("d,H", [(5, 0.3), (7, 0.9)])
def test_scaling_relation_high_dimension(d, H):
    assert check_scaling_relations(0.0, d / 2, d, H).residual_hurst == pytest.approx(0, abs=1e-12)


def test_h_minus_h_plus_constant_heights():
    fives = [rec(4, i, site_heights=[5.0] * 9, heights_ell2H=5.0 ** (2 * 0.3))
             for i in range(100)]
    assert estimate_h_minus(fives) == 5.0
    assert estimate_h_plus(fives, 0.3) == pytest.approx(5.0)
    zeros = [rec(4, i, site_heights=[0.0] * 9, heights_ell2H=0.0) for i in range(100)]
    assert estimate_h_minus(zeros) == 0.0
    assert estimate_h_plus(zeros, 0.3) == 0.0


@given(st.lists(st.lists(st.integers(-6, 6), min_size=5, max_size=5), min_size=100,
                max_size=130))
def test_h_minus_below_upper_median_of_max(heights):
    recs = [rec(2, i, site_heights=[float(x) for x in h], max_height=float(max(map(abs, h))))
            for i, h in enumerate(heights)]
    hm = estimate_h_minus(recs)
    mx = np.sort([r.max_height for r in recs])
    upper_median = mx[len(mx) // 2]
    assert hm <= upper_median


def test_h_minus_needs_heights():
    with pytest.raises(InsufficientDataError):
        estimate_h_minus([rec(4, i) for i in range(100)])


def test_tail_fit_normal_and_exponential():
    g = np.random.default_rng(3)
    a = tail_fit(np.abs(g.standard_normal(10_000)), seed=1)
    assert a.ci_low <= 2.0 <= a.ci_high
    b = tail_fit(g.exponential(size=10_000), seed=1)
    assert b.ci_low <= 1.0 <= b.ci_high
    assert a.note.startswith("diagnostic")


def test_tail_fit_degenerate():
    with pytest.raises(FitError):
        tail_fit(np.full(2000, 3.0))


def test_concentration_monotone():
    g = np.random.default_rng(4)
    recs = [rec(16, i, GE=float(g.normal(0, 16))) for i in range(1000)]
    rep = concentration_check(recs, 1, 0.5, ts=(0.0, 0.5, 1.0, 2.0, 4.0), fit_tail=False)
    assert rep.probabilities[0] == 1.0
    assert rep.monotone and rep.finite and rep.ok
    with pytest.raises(InsufficientDataError):
        concentration_check(recs[:10], 1, 0.5)


def test_summary_roundtrip(tmp_path):
    recs = [rec(L, i, max_height=float(L) ** 0.5 * (1 + 0.01 * i), GE=float(i * L))
            for L in (4, 8, 16) for i in range(10)]
    rows = summarize(recs, 0.5)
    assert [r["L"] for r in rows] == [4, 8, 16]
    assert all(math.isnan(r["h_minus"]) for r in rows)
    p = tmp_path / "s.csv"
    write_summary_csv(rows, p)
    back = read_summary_csv(p)
    assert back[1]["median_max_height"] == rows[1]["median_max_height"]
    est = estimate_from_summary(back, "median_max_height")
    assert est.slope == pytest.approx(0.5, abs=1e-12)


def test_plot_data(tmp_path):
    recs = [rec(L, i, max_height=float(L)) for L in (4, 8) for i in range(3)]
    csv_path, gp_path = write_plot_data(recs, str(tmp_path / "p"))
    lines = open(csv_path).read().splitlines()
    assert lines[0].startswith("#")
    x, y = map(float, lines[2].split(","))
    assert x == pytest.approx(math.log(8)) and y == pytest.approx(math.log(8))
    assert "fit f(x)" in open(gp_path).read()


# coupling

def test_coupling_h_beyond_grid():
    with pytest.raises(ConfigError):
        CouplingConfig(L=16, h=100.0, K=20).resolved()


def test_coupling_padding():
    with pytest.raises(PaddingError):
        CouplingConfig(L=16, h=2.0, K=20).resolved()


def test_shift_field_shape():
    c = CouplingConfig(L=16, h=2.0, N=2).resolved()
    dom = Domain.box(16, 1)
    s = shift_field(c, dom)
    vals = s.interior()[:, 0]
    assert vals.max() == pytest.approx(round(2 * c.beta * c.h / c.delta) * c.delta)
    assert vals[0] == 0.0 and vals[-1] == 0.0
    assert np.all(np.mod(vals, c.delta) == 0)


def test_coupling_small_run_deterministic():
    c = CouplingConfig(L=16, h=2.0, N=12, seed=3)
    a = delocalization_coupling_demo(c)
    b = delocalization_coupling_demo(c)
    assert np.array_equal(a.frac_cond, b.frac_cond)
    assert a.frac_base.shape == (12,)
    assert a.implication_violations == 0
    s = a.summary()
    assert 0.0 <= s["mean_frac_base"] <= 1.0
    json.dumps(s)
