"""Exact slab transfer-matrix minimisation for small boxes in any dimension.

The box is cut into slabs orthogonal to axis 0; a state is the labelling of a
whole slab. Cost is O(rows · S²) for S = M^(slab size) states, which limits it
to small cross-sections. Used as an independent oracle for the graph cut.
"""
from __future__ import annotations

import time

import numpy as np

from ..errors import ParameterError, SolverError
from .problem import LabelProblem, build_problem, check_cap, finish

STATE_CAP = 4096


def minimise_transfer(problem: LabelProblem, tie_tol: float = 1e-12):
    dom = problem.domain
    if not dom.is_box:
        raise ParameterError("transfer solver needs a box domain")
    rows = dom.shape[0]
    w = dom.size // rows
    M = problem.M
    S = M ** w
    check_cap(S, STATE_CAP, "transfer state count")
    states = np.stack(np.unravel_index(np.arange(S), (M,) * w), axis=1)  # lex order
    W = problem.pairwise_matrix()
    U = problem.unary
    slab_of = np.arange(dom.size) // w
    pos = np.arange(dom.size) % w
    e = problem.edges
    intra = e[slab_of[e[:, 0]] == slab_of[e[:, 1]]]
    inter = e[slab_of[e[:, 0]] != slab_of[e[:, 1]]]
    # intra-slab edges have the same positions in every slab
    intra0 = intra[slab_of[intra[:, 0]] == 0]
    inter0 = inter[slab_of[inter[:, 0]] == 0]
    if np.any(pos[inter0[:, 0]] != pos[inter0[:, 1]]):
        raise SolverError("unexpected inter-slab edge")
    R = np.zeros((rows, S))
    for r in range(rows):
        R[r] = U[r * w + np.arange(w)[None, :], states].sum(axis=1)
    pair = np.zeros(S)
    for i, j in intra0:
        pair += W[states[:, pos[i]], states[:, pos[j]]]
    R += pair[None, :]
    V = np.zeros((S, S))
    for c in pos[inter0[:, 0]]:
        V += W[states[:, c][:, None], states[:, c][None, :]]
    J = np.empty((rows, S))
    J[-1] = R[-1]
    for r in range(rows - 2, -1, -1):
        J[r] = R[r] + np.min(V + J[r + 1][None, :], axis=1)
    seq = np.empty(rows, np.int64)

    def first_min(c):
        m = c.min()
        if not np.isfinite(m):
            raise SolverError("no feasible labelling")
        return int(np.flatnonzero(c <= m + tie_tol * (1 + abs(m)))[0])

    seq[0] = first_min(J[0])
    for r in range(1, rows):
        seq[r] = first_min(V[seq[r - 1]] + J[r])
    labels = states[seq].reshape(-1)
    return labels, {"states": S, "slabs": rows}


def solve_transfer(field, tau=None, window=None, tilt=None):
    t0 = time.perf_counter()
    problem = build_problem(field, tau, window, tilt)
    labels, stats = minimise_transfer(problem)
    return finish(problem, labels, "transfer", True, stats, t0)
