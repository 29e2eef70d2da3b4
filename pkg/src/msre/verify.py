"""Deterministic verification suite (the CI gate).

Each check returns a CheckResult naming the invariant, whether it held, the
worst observed discrepancy and the seed that produced it.
"""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
from scipy import stats
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_flow

from . import rng as rngmod
from .disorder import HeightGrid, HurstParams, kernel_bounds_check, sample_disorder
from .energy import boundary_reduction_check, main_identity_terms
from .lattice import (Domain, LatticeField, grad_inner, greens_function, greens_random_walk,
                      inner, laplacian, pi_bump)
from .solvers import (FlowNetwork, maxflow, solve_bruteforce, solve_chain_dp, solve_graphcut)


@dataclass
class CheckResult:
    name: str
    ok: bool
    detail: str
    seed: int | None = None
    runtime: float = 0.0

    def line(self) -> str:
        tag = "PASS" if self.ok else "FAIL"
        where = "" if self.seed is None else f" (seed {self.seed})"
        return f"[{tag}] {self.name}: {self.detail}{where} [{self.runtime:.1f}s]"


def _timed(fn):
    def wrapper(*args, **kw):
        t0 = time.perf_counter()
        res = fn(*args, **kw)
        res.runtime = time.perf_counter() - t0
        return res
    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


def _random_interior(dom, n, K, g):
    return g.integers(-K, K + 1, size=(dom.size, n)).astype(float)


@_timed
def check_main_identity(n_instances: int = 1000, seed: int = 0, tol: float = 1e-9) -> CheckResult:
    """Random (φ, s, η) with d ∈ {1,2}, L ≤ 8, n ∈ {1,2}; relative residual."""
    worst, worst_seed = 0.0, None
    for i in range(n_instances):
        g = rngmod.stream(seed, rngmod.MISC, 1, i)
        d = int(g.integers(1, 3))
        n = int(g.integers(1, 3))
        L = int(g.integers(1, 9 if d == 1 else 5))
        a = 3 if n == 1 else 2
        dom = Domain.box(L, d)
        grid = HeightGrid(n, 1.0, 2 * a)
        field = sample_disorder(dom, grid, HurstParams(float(g.uniform(0.05, 0.95)), n),
                                int(g.integers(2 ** 31)))
        phi = LatticeField.from_interior(dom, _random_interior(dom, n, a, g))
        s = LatticeField.from_interior(dom, _random_interior(dom, n, a, g))
        lhs, rhs, h0 = main_identity_terms(phi, s, field)
        rel = abs(lhs - rhs) / max(1.0, abs(lhs), abs(rhs), abs(h0))
        if rel > worst:
            worst, worst_seed = rel, i
    return CheckResult("main identity", worst < tol,
                       f"max relative residual {worst:.2e} over {n_instances} instances (tol {tol:g})",
                       worst_seed)


def _boundary_case(i, seed):
    g = rngmod.stream(seed, rngmod.MISC, 2, i)
    d = 1 if i % 2 == 0 else 2
    L = 4 if d == 1 else 2
    c = int(g.integers(-3, 4))
    n = 1
    dom = Domain.box(L, d)
    K = 4 + abs(c) + 2
    grid = HeightGrid(n, 1.0, K)
    field = sample_disorder(dom, grid, HurstParams(0.5, n), rngmod.child_seed(seed, 2, i))
    tau = LatticeField.constant(dom, np.array([float(c)]))
    return dom, field, tau, c


@_timed
def check_boundary_reduction(n_seeds: int = 200, seed: int = 0, tol: float = 1e-9,
                             ks: bool = True, alpha: float = 0.01) -> CheckResult:
    """Constant τ = c e₁: surface and ground-energy identities, and the law of φ^τ − c."""
    worst_s = worst_g = 0.0
    bad = None
    for i in range(n_seeds):
        dom, field, tau, c = _boundary_case(i, seed)
        solver = solve_chain_dp if dom.d == 1 else solve_graphcut
        rep = boundary_reduction_check(tau, field, solver)
        rel_g = abs(rep.ge_residual) / (1.0 + abs(rep.ge_tau))
        if rep.surface_residual > worst_s or rel_g > worst_g:
            bad = i
        worst_s = max(worst_s, rep.surface_residual)
        worst_g = max(worst_g, rel_g)
    ok = worst_s <= tol and worst_g <= tol
    detail = f"surface {worst_s:.1e}, GE {worst_g:.1e} over {n_seeds} seeds"
    if ks:
        p = boundary_law_pvalue(n_seeds, seed)
        ok = ok and p >= alpha
        detail += f"; KS p={p:.3f}"
    return CheckResult("boundary reduction", ok, detail, bad)


def boundary_law_pvalue(n_seeds: int = 200, seed: int = 0, c: float = 3.0) -> float:
    """KS p-value comparing max|φ^{η,τ} − c| with max|φ^η| on independent seeds (d = 1)."""
    dom = Domain.box(8, 1)
    grid = HeightGrid(1, 1.0, 40)
    params = HurstParams(0.5, 1)
    tau = LatticeField.constant(dom, np.array([c]))
    a, b = [], []
    for i in range(n_seeds):
        f1 = sample_disorder(dom, grid, params, rngmod.child_seed(seed, 3, 0, i))
        f2 = sample_disorder(dom, grid, params, rngmod.child_seed(seed, 3, 1, i))
        a.append(np.abs(solve_chain_dp(f1, tau=tau).phi.interior() - c).max())
        b.append(np.abs(solve_chain_dp(f2).phi.interior()).max())
    return float(stats.ks_2samp(a, b).pvalue)


@_timed
def check_solver_oracles(n2d: int = 50, n1d: int = 100, seed: int = 0) -> CheckResult:
    """graphcut = brute force on 5×5 (M = 4); chain DP = brute force on L = 3 (M = 5)."""
    for i in range(n2d):
        dom = Domain.box(2, 2)
        f = sample_disorder(dom, HeightGrid(1, 1.0, 2), HurstParams(0.5, 1),
                            rngmod.child_seed(seed, 4, 0, i))
        a = solve_graphcut(f, window=(-2, 1))
        b = solve_bruteforce(f, window=(-2, 1), mode="bnb")
        if not (np.array_equal(a.phi.values, b.phi.values) and a.ground_energy == b.ground_energy):
            return CheckResult("solver oracles", False,
                               f"graphcut/bruteforce disagree: {a.ground_energy} vs {b.ground_energy}", i)
    for i in range(n1d):
        n = 1 + i % 2
        dom = Domain.box(3, 1)
        f = sample_disorder(dom, HeightGrid(n, 1.0, 2), HurstParams(0.5, n),
                            rngmod.child_seed(seed, 4, 1, i))
        a = solve_chain_dp(f)
        b = solve_bruteforce(f, mode="enumerate" if n == 1 else "bnb")
        if not (np.array_equal(a.phi.values, b.phi.values) and a.ground_energy == b.ground_energy):
            return CheckResult("solver oracles", False,
                               f"chain/bruteforce disagree (n={n}): {a.ground_energy} vs "
                               f"{b.ground_energy}", i)
    return CheckResult("solver oracles", True,
                       f"{n2d} graphcut and {n1d} chain instances match brute force exactly")


@_timed
def check_claim_a(n: int = 1_000_000, seed: int = 0, chunk: int = 200_000) -> CheckResult:
    """Random (t, H) in dimensions 1..3: lower ≤ value ≤ upper."""
    g = rngmod.stream(seed, rngmod.MISC, 5)
    violations = 0
    worst = 0.0
    done = 0
    while done < n:
        m = min(chunk, n - done)
        H = g.uniform(1e-3, 1 - 1e-3, m)
        dim = g.integers(1, 4, m)
        r = np.exp(g.uniform(np.log(1e-4), np.log(1e4), m))
        u = g.standard_normal((m, 3))
        u[:, 1] *= dim > 1
        u[:, 2] *= dim > 2
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        t = u * r[:, None]
        lo, val, up = kernel_bounds_check(t, H)
        tol = 1e-9 * np.maximum(1.0, np.abs(val))
        bad = (val < lo - tol) | (val > up + tol)
        violations += int(bad.sum())
        worst = max(worst, float(np.max(np.maximum(lo - val, val - up))))
        done += m
    return CheckResult("Claim A sandwich", violations == 0,
                       f"{violations} violations in {n} draws (largest excess {worst:.2e})")


@_timed
def check_greens(n_points: int = 20, n_walks: int = 40_000, seed: int = 0,
                 n_identity: int = 50) -> CheckResult:
    """Green's identity on random fields and linear solve vs random walks (3 s.e.)."""
    worst_id = 0.0
    for i in range(n_identity):
        g = rngmod.stream(seed, rngmod.MISC, 6, i)
        d = int(g.integers(1, 4))
        dom = Domain.box(int(g.integers(1, 5)), d)
        f = LatticeField(dom, g.standard_normal(dom.frame_shape + (2,)))
        h = LatticeField(dom, g.standard_normal(dom.frame_shape + (2,)))
        a = grad_inner(f, h)
        b = inner(f, -laplacian(h))
        c = inner(-laplacian(f), h)
        worst_id = max(worst_id, abs(a - b) / (1 + abs(a)), abs(a - c) / (1 + abs(a)))
    worst_z = 0.0
    worst_i = None
    for i in range(n_points):
        g = rngmod.stream(seed, rngmod.MISC, 7, i)
        d = int(g.integers(1, 3))
        L = int(g.integers(2, 6))
        dom = Domain.box(L, d)
        verts = dom.vertices()
        v = verts[g.integers(len(verts))]
        x = verts[g.integers(len(verts))]
        G = greens_function(dom, v)
        exact = float(G.at(x)[0])
        est, se = greens_random_walk(dom, v, x, n_walks, rngmod.child_seed(seed, 7, i))
        z = abs(est - exact) / se if se > 0 else (0.0 if est == exact else np.inf)
        if z > worst_z:
            worst_z, worst_i = z, i
    ok = worst_id < 1e-12 and worst_z <= 3.0
    return CheckResult("Green's function", ok,
                       f"identity residual {worst_id:.1e}; walk/solve max |z| {worst_z:.2f} "
                       f"at {n_points} points", worst_i)


@_timed
def check_bump_conditions(Ls=(8, 16, 32), eps: float = 0.1, d: int = 2,
                          profile: str = "product", seed: int = 0) -> CheckResult:
    """π vanishes off Λ_L and π ≥ 1 on the inner box (exact conditions only)."""
    for L in Ls:
        _, rep = pi_bump(L, eps, d, profile, check=False)
        if not rep["vanishes_outside"] or rep["inner_min"] < 1.0 - 1e-12:
            return CheckResult("bump conditions", False, f"L={L}: {rep}")
    return CheckResult("bump conditions", True, f"support and lower bound hold for L in {list(Ls)}")


@_timed
def check_maxflow(n_graphs: int = 200, seed: int = 0) -> CheckResult:
    """Push-relabel flow value equals scipy's on random integer-capacity graphs."""
    for i in range(n_graphs):
        g = rngmod.stream(seed, rngmod.MISC, 8, i)
        nv = int(g.integers(2, 12))
        m = int(g.integers(1, 40))
        tails = g.integers(0, nv, m)
        heads = g.integers(0, nv, m)
        keep = tails != heads
        tails, heads = tails[keep], heads[keep]
        caps = g.integers(1, 20, tails.size).astype(float)
        if tails.size == 0:
            continue
        ours = maxflow(FlowNetwork(nv, tails, heads, caps, 0, nv - 1)).value
        A = csr_matrix((caps.astype(np.int32), (tails, heads)), shape=(nv, nv))
        ref = maximum_flow(A, 0, nv - 1).flow_value
        if abs(ours - ref) > 1e-9:
            return CheckResult("max-flow", False, f"flow {ours} vs reference {ref}", i)
    return CheckResult("max-flow", True, f"{n_graphs} random graphs match the reference flow")


def run_suite(quick: bool = False, seed: int = 0, log=print):
    """Run all checks; returns the list of results."""
    if quick:
        plan = [
            (check_main_identity, {"n_instances": 200}),
            (check_boundary_reduction, {"n_seeds": 20, "ks": False}),
            (check_solver_oracles, {"n2d": 10, "n1d": 20}),
            (check_claim_a, {"n": 100_000}),
            (check_greens, {"n_points": 6, "n_walks": 20_000, "n_identity": 10}),
            (check_bump_conditions, {}),
            (check_maxflow, {"n_graphs": 50}),
        ]
    else:
        plan = [
            (check_main_identity, {}),
            (check_boundary_reduction, {}),
            (check_solver_oracles, {}),
            (check_claim_a, {}),
            (check_greens, {}),
            (check_bump_conditions, {}),
            (check_maxflow, {}),
        ]
    out = []
    for fn, kw in plan:
        res = fn(seed=seed, **kw)
        out.append(res)
        if log:
            log(res.line())
    return out
