"""Approximate minimisation by single-site moves (any n, any d).

Each restart runs a heat-bath annealing phase and then deterministic sweeps in
vertex order, where a site moves only if some label strictly lowers its local
cost. The energy never increases during the deterministic phase. The best
restart is returned; the result carries exact = False.
"""
from __future__ import annotations

import time

import numba as nb
import numpy as np

from .. import rng as rngmod
from .problem import LabelProblem, build_problem, finish


@nb.njit(cache=True)
def _local_costs(v, labels, U, h, indptr, nbrs, out):
    M = U.shape[1]
    n = h.shape[1]
    for a in range(M):
        c = U[v, a]
        for p in range(indptr[v], indptr[v + 1]):
            b = labels[nbrs[p]]
            s = 0.0
            for k in range(n):
                d = h[a, k] - h[b, k]
                s += d * d
            c += 0.5 * s
        out[a] = c


@nb.njit(cache=True)
def _energy(labels, U, h, indptr, nbrs):
    N = U.shape[0]
    n = h.shape[1]
    e = 0.0
    for v in range(N):
        e += U[v, labels[v]]
        for p in range(indptr[v], indptr[v + 1]):
            u = nbrs[p]
            if u > v:
                s = 0.0
                for k in range(n):
                    d = h[labels[v], k] - h[labels[u], k]
                    s += d * d
                e += 0.5 * s
    return e


@nb.njit(cache=True)
def _descend(labels, U, h, indptr, nbrs, max_sweeps, tol, trace):
    N, M = U.shape
    buf = np.empty(M)
    sweeps = 0
    for it in range(max_sweeps):
        changed = 0
        for v in range(N):
            _local_costs(v, labels, U, h, indptr, nbrs, buf)
            cur = buf[labels[v]]
            best = labels[v]
            bval = cur
            for a in range(M):
                if buf[a] < bval:
                    bval = buf[a]
                    best = a
            if bval < cur - tol * (1.0 + abs(cur)):
                labels[v] = best
                changed += 1
        trace[it] = _energy(labels, U, h, indptr, nbrs)
        sweeps += 1
        if changed == 0:
            break
    return sweeps


@nb.njit(cache=True)
def _anneal(labels, U, h, indptr, nbrs, temps, uniforms):
    N, M = U.shape
    buf = np.empty(M)
    p = np.empty(M)
    k = 0
    for T in temps:
        for v in range(N):
            _local_costs(v, labels, U, h, indptr, nbrs, buf)
            m = np.min(buf)
            tot = 0.0
            for a in range(M):
                p[a] = np.exp(-(buf[a] - m) / T) if np.isfinite(buf[a]) else 0.0
                tot += p[a]
            r = uniforms[k] * tot
            k += 1
            acc = 0.0
            choice = M - 1
            for a in range(M):
                acc += p[a]
                if r < acc:
                    choice = a
                    break
            labels[v] = choice


def default_schedule(problem: LabelProblem, steps: int = 30):
    """Geometric temperatures from the unary spread down to 1% of it."""
    U = problem.unary
    fin = U[np.isfinite(U)]
    scale = float(np.std(fin)) if fin.size else 1.0
    scale = max(scale, 1e-12)
    return np.geomspace(scale, 0.01 * scale, steps)


def minimise_coordinate_descent(problem: LabelProblem, init=None, restarts: int = 1,
                                anneal=None, seed: int = 0, max_sweeps: int = 10_000,
                                tol: float = 1e-12):
    U = np.ascontiguousarray(problem.unary)
    h = np.ascontiguousarray(problem.heights)
    indptr, nbrs = problem.neighbour_csr()
    N, M = problem.N, problem.M
    if init is None:
        # start from the label closest to height 0
        zero = int(np.argmin(np.sum(h * h, axis=1)))
        init_labels = np.full(N, zero, np.int64)
    else:
        init_labels = np.asarray(init, dtype=np.int64).copy()
    if anneal == "auto":
        anneal = default_schedule(problem)
    best, best_e, stats = None, np.inf, {"restarts": int(restarts), "sweeps": []}
    for r in range(max(1, int(restarts))):
        labels = init_labels.copy()
        if anneal is not None and len(anneal):
            g = rngmod.stream(seed, rngmod.MISC, r)
            temps = np.asarray(anneal, dtype=np.float64)
            _anneal(labels, U, h, indptr, nbrs, temps, g.random(temps.size * N))
        trace = np.empty(max_sweeps)
        sweeps = _descend(labels, U, h, indptr, nbrs, max_sweeps, tol, trace)
        e = _energy(labels, U, h, indptr, nbrs)
        stats["sweeps"].append(int(sweeps))
        stats.setdefault("traces", []).append(trace[:sweeps].tolist())
        if e < best_e:
            best, best_e = labels, e
    return best, stats


def solve_coordinate_descent(field, tau=None, window=None, tilt=None, init=None,
                             restarts: int = 1, anneal=None, seed: int = 0):
    """init: LatticeField or per-vertex label indices; anneal: None, "auto" or temperatures."""
    t0 = time.perf_counter()
    problem = build_problem(field, tau, window, tilt)
    init_labels = None
    if init is not None:
        if hasattr(init, "interior"):
            k = field.grid.to_index(init.interior())
            lookup = {tuple(x): i for i, x in enumerate(problem.labels_k.tolist())}
            init_labels = np.array([lookup[tuple(x)] for x in k.tolist()], dtype=np.int64)
        else:
            init_labels = np.asarray(init, dtype=np.int64)
    labels, stats = minimise_coordinate_descent(problem, init_labels, restarts, anneal, seed)
    return finish(problem, labels, "coord_descent", False, stats, t0)
