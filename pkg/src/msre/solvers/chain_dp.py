"""Exact dynamic programming along a one-dimensional chain.

The backward pass uses the squared-distance transform, so each site costs
O(n · M) for M labels instead of O(M²). The forward pass picks, at each site,
the first label attaining the optimum, which yields the lexicographically
smallest minimiser.
"""
from __future__ import annotations

import time

import numba as nb
import numpy as np

from ..errors import ParameterError, SolverError
from .problem import LabelProblem, build_problem, check_cap, finish

STATE_CAP = 4 * 10 ** 6


@nb.njit(cache=True)
def _dt_rows(F, w):
    """Row-wise D[p] = min_q w (p − q)² + F[q] (Felzenszwalb–Huttenlocher)."""
    R, m = F.shape
    D = np.empty_like(F)
    v = np.empty(m, np.int64)
    z = np.empty(m + 1)
    for r in range(R):
        f = F[r]
        k = -1
        for q in range(m):
            fq = f[q]
            if not np.isfinite(fq):
                continue
            if k < 0:
                k = 0
                v[0] = q
                z[0] = -np.inf
                z[1] = np.inf
                continue
            while True:
                p = v[k]
                s = ((fq + w * q * q) - (f[p] + w * p * p)) / (2.0 * w * (q - p))
                if s <= z[k]:
                    k -= 1
                    if k < 0:
                        break
                else:
                    break
            k += 1
            v[k] = q
            z[k] = -np.inf if k == 0 else s
            z[k + 1] = np.inf
        if k < 0:
            for p in range(m):
                D[r, p] = np.inf
            continue
        j = 0
        for p in range(m):
            while z[j + 1] < p:
                j += 1
            d = p - v[j]
            D[r, p] = w * d * d + f[v[j]]
    return D


def distance_transform(F: np.ndarray, axis_sizes, delta: float) -> np.ndarray:
    """min_b ½‖t_a − t_b‖² + F[b] for every label a (labels on a product window)."""
    w = 0.5 * delta * delta
    G = F.reshape(axis_sizes)
    for ax in range(len(axis_sizes)):
        moved = np.ascontiguousarray(np.moveaxis(G, ax, -1))
        shp = moved.shape
        out = _dt_rows(moved.reshape(-1, shp[-1]), w).reshape(shp)
        G = np.moveaxis(out, -1, ax)
    return np.ascontiguousarray(G).reshape(-1)


def _first_min(c, tie_tol):
    m = np.min(c)
    if not np.isfinite(m):
        raise SolverError("no feasible labelling")
    return int(np.flatnonzero(c <= m + tie_tol * (1.0 + abs(m)))[0])


def minimise_chain(problem: LabelProblem, tie_tol: float = 1e-12):
    if problem.domain.d != 1 or not problem.domain.is_box:
        raise ParameterError("chain DP needs a one-dimensional box domain")
    N, M = problem.N, problem.M
    check_cap(M, STATE_CAP, "chain DP state count")
    e = problem.edges
    if e.shape[0] != N - 1 or not np.array_equal(e[:, 1] - e[:, 0], np.ones(N - 1, np.int64)):
        raise ParameterError("domain is not a chain")
    U = problem.unary
    J = np.empty_like(U)
    J[N - 1] = U[N - 1]
    for i in range(N - 2, -1, -1):
        J[i] = U[i] + distance_transform(J[i + 1], problem.axis_sizes, problem.delta)
    labels = np.empty(N, np.int64)
    labels[0] = _first_min(J[0], tie_tol)
    h = problem.heights
    for i in range(1, N):
        d = h - h[labels[i - 1]]
        labels[i] = _first_min(0.5 * np.sum(d * d, axis=1) + J[i], tie_tol)
    return labels, {"states": M, "sites": N, "value": float(J[0].min())}


def solve_chain_dp(field, tau=None, window=None, tilt=None):
    t0 = time.perf_counter()
    problem = build_problem(field, tau, window, tilt)
    labels, stats = minimise_chain(problem)
    return finish(problem, labels, "chain_dp", True, stats, t0)
