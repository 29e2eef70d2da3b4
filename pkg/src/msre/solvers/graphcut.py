"""Exact minimisation for n = 1 by a single minimum cut (layered construction).

Each vertex v gets M − 1 level nodes (v, i), i = 1..M−1; node (v, i) on the
sink side means a_v ≥ i. With x_i = [a ≥ i], y_j = [b ≥ j] and w = ½δ²,

    w (a − b)² = w Σ_i (2i − 1) x_i + w Σ_j (2j − 1) y_j − 2w(M−1) Σ_i x_i
                 + 2w Σ_{i,j} x_i (1 − y_j),

so every interior edge u < v contributes the unary terms above plus arcs
(v, j) → (u, i) of capacity 2w = δ². Infinite arcs (v, i) → (v, i+1) keep the
levels of a column monotone. The maximal source side of the minimum cut gives
the componentwise smallest, hence lexicographically first, minimiser.
"""
from __future__ import annotations

import time

import numba as nb
import numpy as np

from ..errors import ParameterError, SolverError
from .maxflow import FlowNetwork, maxflow
from .problem import LabelProblem, build_problem, check_cap, crop_infinite, finish

ARC_CAP = 60_000_000
PRUNE_REL = 1e-14


@nb.njit(cache=True)
def _build_arcs(unary, edges, w2, prune):
    """Arc arrays for the layered network; node 0 is the source, 1 the sink."""
    N, M = unary.shape
    L = M - 1
    E = edges.shape[0]
    D = np.empty((N, L))
    for v in range(N):
        for i in range(1, M):
            D[v, i - 1] = unary[v, i] - unary[v, i - 1]
    half = 0.5 * w2
    for e in range(E):
        u = edges[e, 0]
        v = edges[e, 1]
        for i in range(1, M):
            lin = half * (2 * i - 1)
            D[u, i - 1] += lin - w2 * (M - 1)
            D[v, i - 1] += lin
    keep_pair = w2 > prune
    n_arcs = N * L + N * (L - 1) + (E * L * L if keep_pair else 0)
    tails = np.empty(n_arcs, np.int64)
    heads = np.empty(n_arcs, np.int64)
    caps = np.empty(n_arcs)
    const = 0.0
    k = 0
    for v in range(N):
        for i in range(L):
            node = 2 + v * L + i
            c = D[v, i]
            if c >= 0:
                tails[k] = 0
                heads[k] = node
                caps[k] = c
            else:
                tails[k] = node
                heads[k] = 1
                caps[k] = -c
                const += c
            k += 1
        for i in range(L - 1):
            node = 2 + v * L + i
            tails[k] = node
            heads[k] = node + 1
            caps[k] = np.inf
            k += 1
    if keep_pair:
        # arcs (v, j) -> (u, i) for the edge u < v
        for e in range(E):
            u = edges[e, 0]
            v = edges[e, 1]
            for j in range(L):
                src = 2 + v * L + j
                for i in range(L):
                    tails[k] = src
                    heads[k] = 2 + u * L + i
                    caps[k] = w2
                    k += 1
    return tails[:k], heads[:k], caps[:k], const


def build_network(problem: LabelProblem):
    """Flow network for the problem plus the constant offset.

    The energy of a labelling equals Σ_v U[v, 0] + const + (capacity of its cut).
    """
    if problem.n != 1:
        raise ParameterError("graph cut needs n = 1")
    N, M = problem.N, problem.M
    E = problem.edges.shape[0]
    check_cap(1.0 * E * (M - 1) ** 2 + 2.0 * N * M, ARC_CAP, "graph-cut arc count")
    if not np.all(np.isfinite(problem.unary)):
        raise SolverError("graph cut needs finite unary costs")
    w2 = problem.delta ** 2
    scale = float(np.max(np.abs(problem.unary))) if problem.unary.size else 0.0
    tails, heads, caps, const = _build_arcs(np.ascontiguousarray(problem.unary),
                                            np.ascontiguousarray(problem.edges), w2,
                                            PRUNE_REL * scale)
    net = FlowNetwork(2 + N * (M - 1), tails, heads, caps, 0, 1)
    return net, const


def minimise_graphcut(problem: LabelProblem):
    problem = crop_infinite(problem)
    if not np.all(np.isfinite(problem.unary)):
        problem = _big_m(problem)
    N, M = problem.N, problem.M
    if M == 1:
        return problem, np.zeros(N, np.int64), {"nodes": 0, "arcs": 0}
    net, const = build_network(problem)
    res = maxflow(net)
    sink_side = ~res.source_side[2:].reshape(N, M - 1)
    labels = sink_side.sum(axis=1).astype(np.int64)
    stats = {"nodes": net.n_nodes, "arcs": int(net.tails.size), "flow": res.value,
             "pushes": res.pushes, "relabels": res.relabels, "global_updates": res.global_updates}
    return problem, labels, stats


def _big_m(problem: LabelProblem) -> LabelProblem:
    """Replace interior +inf unary entries by a penalty exceeding any finite energy."""
    U = problem.unary
    fin = np.isfinite(U)
    if not fin.any(axis=1).all():
        raise SolverError("a vertex has no feasible label")
    span = float(np.ptp(problem.heights[:, 0])) if problem.M > 1 else 0.0
    bound = np.sum(np.abs(np.where(fin, U, 0.0)).max(axis=1)) + 0.5 * span ** 2 * (
        problem.edges.shape[0] + 1)
    big = 4.0 * bound + 1.0
    U2 = np.where(fin, U, big)
    return LabelProblem(problem.domain, problem.disorder, problem.tau, problem.window_lo,
                        problem.window_hi, problem.labels_k, problem.heights, U2, problem.edges,
                        problem.tilt)


def solve_graphcut(field, tau=None, window=None, tilt=None):
    t0 = time.perf_counter()
    problem = build_problem(field, tau, window, tilt)
    cropped, labels, stats = minimise_graphcut(problem)
    if not np.all(np.isfinite(problem.unary)):
        # map back to the uncropped label window and reject penalised labels
        k = cropped.labels_k[labels]
        labels = np.searchsorted(problem.labels_k[:, 0], k[:, 0])
        if not np.isfinite(problem.energy(labels)):
            raise SolverError("graph cut selected an infeasible label")
    return finish(problem, labels, "graphcut", True, stats, t0)
