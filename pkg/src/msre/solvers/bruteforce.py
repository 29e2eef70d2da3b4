"""Exhaustive minimisation in lexicographic order (the reference oracle)."""
from __future__ import annotations

import time

import numba as nb
import numpy as np

from ..errors import CapacityError, SolverError
from .problem import LabelProblem, build_problem, check_cap, finish

ENUM_CAP = 10 ** 7
NODE_BUDGET = 5 * 10 ** 9


@nb.njit(cache=True)
def _dfs(U, W, prev_ptr, prev_idx, lb_suffix, prune, bound, find_first, budget):
    """Depth-first walk over labellings in lexicographic order.

    find_first=False: return the minimum energy (pruning with the running best).
    find_first=True: return the first labelling with energy <= bound.
    """
    N, M = U.shape
    a = -np.ones(N, np.int64)
    cost = np.zeros(N + 1)
    best = np.inf
    best_a = -np.ones(N, np.int64)
    nodes = 0
    k = 0
    while k >= 0:
        a[k] += 1
        if a[k] >= M:
            a[k] = -1
            k -= 1
            continue
        nodes += 1
        if nodes > budget:
            return best, best_a, -nodes
        c = cost[k] + U[k, a[k]]
        for p in range(prev_ptr[k], prev_ptr[k + 1]):
            c += W[a[prev_idx[p]], a[k]]
        if prune:
            lim = bound if find_first else best
            if c + lb_suffix[k + 1] > lim:
                continue
        if k == N - 1:
            if find_first:
                if c <= bound:
                    return c, a.copy(), nodes
            elif c < best:
                best = c
                best_a[:] = a
            continue
        cost[k + 1] = c
        k += 1
    return best, best_a, nodes


def _prev_lists(problem: LabelProblem):
    N = problem.N
    e = problem.edges
    order = np.lexsort((e[:, 0], e[:, 1])) if e.size else np.zeros(0, np.int64)
    later = e[order, 1] if e.size else np.zeros(0, np.int64)
    earlier = e[order, 0] if e.size else np.zeros(0, np.int64)
    ptr = np.zeros(N + 1, np.int64)
    np.add.at(ptr, later + 1, 1)
    return np.cumsum(ptr), earlier.astype(np.int64)


def minimise_bruteforce(problem: LabelProblem, mode: str = "enumerate", tie_tol: float = 1e-10):
    """Return (labels, stats). mode "enumerate" visits every labelling
    (capped at ENUM_CAP); mode "bnb" prunes with a unary lower bound and is exact
    as well."""
    N, M = problem.N, problem.M
    if mode == "enumerate":
        check_cap(float(M) ** N, ENUM_CAP, "brute-force configuration count")
        prune = False
    elif mode == "bnb":
        prune = True
    else:
        raise SolverError(f"unknown brute-force mode {mode!r}")
    U = np.ascontiguousarray(problem.unary)
    W = np.ascontiguousarray(problem.pairwise_matrix())
    ptr, idx = _prev_lists(problem)
    mins = U.min(axis=1)
    lb = np.zeros(N + 1)
    lb[:N] = np.cumsum(mins[::-1])[::-1]
    emin, _, nodes1 = _dfs(U, W, ptr, idx, lb, prune, np.inf, False, NODE_BUDGET)
    if nodes1 < 0:
        raise CapacityError("branch-and-bound node budget exhausted")
    if not np.isfinite(emin):
        raise SolverError("no feasible labelling")
    thr = emin + tie_tol * (1.0 + abs(emin))
    e, labels, nodes2 = _dfs(U, W, ptr, idx, lb, True, thr, True, NODE_BUDGET)
    if nodes2 < 0 or labels[0] < 0:
        raise SolverError("tie-break pass failed to recover a minimiser")
    return labels, {"nodes": int(nodes1 + nodes2), "mode": mode}


def solve_bruteforce(field, tau=None, window=None, tilt=None, mode: str = "enumerate"):
    t0 = time.perf_counter()
    problem = build_problem(field, tau, window, tilt)
    labels, stats = minimise_bruteforce(problem, mode)
    return finish(problem, labels, "bruteforce", True, stats, t0)
