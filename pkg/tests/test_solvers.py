import time

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_flow

from msre import rng as rngmod
from msre.disorder import DisorderField, HeightGrid, HurstParams, sample_disorder, zero_disorder
from msre.energy import hamiltonian
from msre.errors import CapacityError, ParameterError
from msre.lattice import Domain, LatticeField
from msre.solvers import (FlowNetwork, build_problem, get_solver, maxflow, solve,
                          solve_bruteforce, solve_chain_dp, solve_coordinate_descent,
                          solve_graphcut, solve_transfer)
from msre.solvers.maxflow import NetworkError

EXACT = [solve_bruteforce, solve_chain_dp, solve_graphcut, solve_transfer]


@pytest.mark.parametrize("solver", EXACT)
def test_zero_disorder_gives_flat_surface(solver):
    dom = Domain.box(2, 1)
    f = zero_disorder(dom, HeightGrid(1, 1.0, 2), HurstParams(0.5))
    res = solver(f)
    assert np.all(res.phi.values == 0.0) and res.ground_energy == 0.0


def test_coord_descent_zero_disorder_one_sweep():
    dom = Domain.box(3, 2)
    f = zero_disorder(dom, HeightGrid(1, 1.0, 2), HurstParams(0.5))
    res = solve_coordinate_descent(f, init=LatticeField.zeros(dom))
    assert np.all(res.phi.values == 0.0)
    assert res.stats["sweeps"] == [1]


def test_bruteforce_hand_example():
    # Λ = {0, 1}, labels {−1, 0, 1}; E(a, b) = ½(a² + (a−b)² + b²) + η₀(a) + η₁(b).
    # Enumerating the 9 configurations by hand gives the minimum −4.5 at (−1, −1).
    dom = Domain([0], [1])
    table = np.array([[-3.0, 0.0, 1.0], [-2.5, 0.0, 0.5]])
    f = DisorderField(dom, HeightGrid(1, 1.0, 1), HurstParams(0.5), table)
    res = solve_bruteforce(f)
    assert res.ground_energy == pytest.approx(-4.5)
    assert res.phi.interior()[:, 0].tolist() == [-1.0, -1.0]


def test_bruteforce_lexicographic_ties():
    # flat disorder with a symmetric double well: (−1, −1) and (1, 1) tie; the first wins
    dom = Domain([0], [1])
    table = np.array([[-5.0, 0.0, -5.0], [-5.0, 0.0, -5.0]])
    f = DisorderField(dom, HeightGrid(1, 1.0, 1), HurstParams(0.5), table)
    for solver in (solve_bruteforce, solve_chain_dp):
        assert solver(f).phi.interior()[:, 0].tolist() == [-1.0, -1.0]


def test_bruteforce_cap():
    f = zero_disorder(Domain.box(6, 1), HeightGrid(1, 1.0, 4), HurstParams(0.5))
    with pytest.raises(CapacityError):
        solve_bruteforce(f, mode="enumerate")


@given(st.integers(0, 2 ** 31), st.integers(1, 2), st.floats(0.1, 0.9))
def test_chain_matches_bruteforce_and_transfer(seed, n, H):
    dom = Domain.box(2, 1)
    f = sample_disorder(dom, HeightGrid(n, 1.0, 2 if n == 1 else 1), HurstParams(H, n), seed)
    a = solve_chain_dp(f)
    b = solve_bruteforce(f, mode="bnb")
    c = solve_transfer(f)
    assert np.array_equal(a.phi.values, b.phi.values)
    assert np.array_equal(a.phi.values, c.phi.values)
    assert a.ground_energy == pytest.approx(b.ground_energy, abs=1e-12)


@given(st.integers(0, 2 ** 31), st.integers(-2, 2))
def test_graphcut_matches_bruteforce_with_boundary(seed, c):
    dom = Domain.box(1, 2)
    f = sample_disorder(dom, HeightGrid(1, 1.0, 3), HurstParams(0.5), seed)
    tau = LatticeField.constant(dom, [float(c)])
    a = solve_graphcut(f, tau=tau)
    b = solve_bruteforce(f, tau=tau, mode="bnb")
    assert np.array_equal(a.phi.values, b.phi.values)
    assert a.ground_energy == pytest.approx(b.ground_energy, abs=1e-12)


@given(st.integers(0, 2 ** 31))
def test_ground_energy_nonpositive(seed):
    dom = Domain.box(3, 2)
    f = sample_disorder(dom, HeightGrid(1, 1.0, 3), HurstParams(0.5), seed)
    res = solve_graphcut(f)
    assert res.ground_energy <= 0.0
    assert res.ground_energy == pytest.approx(hamiltonian(res.phi, f).total)


def test_coord_descent_is_upper_bound():
    dom = Domain.box(3, 2)
    f = sample_disorder(dom, HeightGrid(1, 1.0, 4), HurstParams(0.5), 7)
    exact = solve_graphcut(f).ground_energy
    approx = solve_coordinate_descent(f, restarts=3, anneal="auto", seed=1)
    assert approx.ground_energy >= exact - 1e-12
    assert not approx.exact


def test_tilt_enters_objective():
    dom = Domain.box(2, 1)
    f = zero_disorder(dom, HeightGrid(1, 1.0, 4), HurstParams(0.5))
    tilt = np.full((dom.size, 1), -0.5)
    a = solve_chain_dp(f, tilt=tilt)
    b = solve_bruteforce(f, tilt=tilt, mode="bnb")
    assert np.array_equal(a.phi.values, b.phi.values)
    assert a.phi.interior().max() > 0


def test_dispatch():
    dom1 = Domain.box(2, 1)
    f1 = zero_disorder(dom1, HeightGrid(2, 1.0, 1), HurstParams(0.5, 2))
    assert solve(f1).solver_id == "chain_dp"
    f2 = zero_disorder(Domain.box(1, 2), HeightGrid(1, 1.0, 1), HurstParams(0.5))
    assert solve(f2).solver_id == "graphcut"
    with pytest.raises(ParameterError):
        get_solver("simplex")


def test_window_outside_grid():
    f = zero_disorder(Domain.box(1, 1), HeightGrid(1, 1.0, 2), HurstParams(0.5))
    with pytest.raises(ParameterError):
        build_problem(f, window=(-3, 1))


def test_pinned_flag():
    dom = Domain([0], [0])
    f = DisorderField(dom, HeightGrid(1, 1.0, 1), HurstParams(0.5), np.array([[0.0, 0.0, -9.0]]))
    res = solve_chain_dp(f)
    assert res.max_height() == 1.0 and res.pinned()


# max-flow

def _net(n, arcs, s=0, t=None):
    tails, heads, caps = zip(*arcs)
    return FlowNetwork(n, np.array(tails), np.array(heads), np.array(caps, float), s,
                       n - 1 if t is None else t)


def test_single_arc():
    assert maxflow(_net(2, [(0, 1, 3.0)])).value == 3.0


def test_diamond():
    # s=0, a=1, b=2, t=3. The four s–t cuts have capacities 4, 4, 5, 4, so the
    # maximum flow is 4 (paths s-a-t 1, s-a-b-t 1, s-b-t 2).
    res = maxflow(_net(4, [(0, 1, 2), (0, 2, 2), (1, 3, 1), (2, 3, 3), (1, 2, 1)]))
    assert res.value == 4.0
    assert res.cut_capacity == 4.0


@given(st.integers(0, 2 ** 31))
def test_maxflow_matches_scipy(seed):
    g = rngmod.stream(seed, 31)
    nv = int(g.integers(2, 15))
    m = int(g.integers(1, 60))
    tails, heads = g.integers(0, nv, m), g.integers(0, nv, m)
    keep = tails != heads
    tails, heads = tails[keep], heads[keep]
    if tails.size == 0:
        return
    caps = g.integers(1, 50, tails.size)
    res = maxflow(FlowNetwork(nv, tails, heads, caps.astype(float), 0, nv - 1))
    ref = maximum_flow(csr_matrix((caps.astype(np.int32), (tails, heads)), shape=(nv, nv)),
                       0, nv - 1).flow_value
    assert res.value == ref
    assert res.source_side[0] and not res.source_side[nv - 1]


def test_network_validation():
    with pytest.raises(NetworkError):
        _net(2, [(0, 1, -1.0)])
    with pytest.raises(NetworkError):
        _net(2, [(0, 1, 1.0)], s=0, t=0)
    with pytest.raises(NetworkError):
        _net(2, [(0, 5, 1.0)])


def test_graphcut_stats_and_speed():
    dom = Domain.box(8, 2)
    f = sample_disorder(dom, HeightGrid(1, 1.0, 6), HurstParams(0.5), 0)
    t0 = time.perf_counter()
    res = solve_graphcut(f)
    assert time.perf_counter() - t0 < 10
    assert res.stats["nodes"] > dom.size
    assert res.exact
