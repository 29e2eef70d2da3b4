"""Reduction of the discretised model to a pairwise labelling problem.

For configurations with φ_v on a window of the height grid for v ∈ Λ and
φ = τ on ∂Λ, the Hamiltonian splits as

    H(φ) = Σ_v U[v, a_v] + Σ_{(i,j) interior edges} ½‖t_{a_i} − t_{a_j}‖²

where U holds the disorder, the elastic terms of edges to ∂Λ and an optional
linear tilt. Labels are enumerated in C order over the window, so the label
order agrees with the lexicographic order of height indices.
"""
from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from ..disorder import DisorderField
from ..energy import hamiltonian
from ..errors import CapacityError, ParameterError, SolverError
from ..lattice import Domain, LatticeField


@dataclass
class LabelProblem:
    domain: Domain
    disorder: DisorderField
    tau: LatticeField
    window_lo: np.ndarray  # per-axis grid index bounds of the label window
    window_hi: np.ndarray
    labels_k: np.ndarray  # (M, n) grid multi-indices of the labels
    heights: np.ndarray  # (M, n)
    unary: np.ndarray  # (N, M)
    edges: np.ndarray  # (E, 2) interior edges, i < j
    tilt: np.ndarray | None = None

    @property
    def N(self) -> int:
        return self.unary.shape[0]

    @property
    def M(self) -> int:
        return self.unary.shape[1]

    @property
    def n(self) -> int:
        return self.heights.shape[1]

    @property
    def delta(self) -> float:
        return self.disorder.grid.delta

    @property
    def axis_sizes(self):
        return tuple(int(x) for x in self.window_hi - self.window_lo + 1)

    def pairwise_matrix(self) -> np.ndarray:
        """W[a, b] = ½‖t_a − t_b‖²."""
        diff = self.heights[:, None, :] - self.heights[None, :, :]
        return 0.5 * np.sum(diff * diff, axis=-1)

    def energy(self, labels) -> float:
        """Objective value of a labelling (equals H(φ) plus the tilt)."""
        labels = np.asarray(labels, dtype=np.int64)
        u = self.unary[np.arange(self.N), labels]
        t = self.heights[labels]
        if self.edges.size:
            d = t[self.edges[:, 0]] - t[self.edges[:, 1]]
            pw = 0.5 * np.sum(d * d, axis=-1)
        else:
            pw = np.zeros(0)
        return float(np.sum(u) + np.sum(pw))

    def to_field(self, labels) -> LatticeField:
        phi = self.tau.values.copy()
        phi[self.domain.mask] = self.heights[np.asarray(labels, dtype=np.int64)]
        return LatticeField(self.domain, phi)

    def neighbour_csr(self):
        """Interior adjacency in CSR form (indptr, indices)."""
        N = self.N
        if self.edges.size == 0:
            return np.zeros(N + 1, np.int64), np.zeros(0, np.int64)
        a = np.concatenate([self.edges[:, 0], self.edges[:, 1]])
        b = np.concatenate([self.edges[:, 1], self.edges[:, 0]])
        order = np.lexsort((b, a))
        a, b = a[order], b[order]
        indptr = np.zeros(N + 1, np.int64)
        np.add.at(indptr, a + 1, 1)
        return np.cumsum(indptr), b.astype(np.int64)


def build_problem(disorder: DisorderField, tau: LatticeField | None = None,
                  window=None, tilt: np.ndarray | None = None) -> LabelProblem:
    """Set up the labelling problem.

    window: None for the full grid, or (lo, hi) grid indices applied to every
    axis, or per-axis arrays. tilt: optional (|Λ|, n) array adding Σ_v tilt_v·φ_v.
    """
    dom = disorder.domain
    grid = disorder.grid
    n = grid.n
    if tau is None:
        tau = LatticeField.zeros(dom, n)
    if not tau.domain.same_frame(dom) or tau.n != n:
        raise ParameterError("boundary values do not match the domain or codimension")
    if window is None:
        lo = np.full(n, -grid.K)
        hi = np.full(n, grid.K)
    else:
        lo = np.broadcast_to(np.asarray(window[0], dtype=np.int64), (n,)).copy()
        hi = np.broadcast_to(np.asarray(window[1], dtype=np.int64), (n,)).copy()
    if np.any(lo > hi) or np.any(lo < -grid.K) or np.any(hi > grid.K):
        raise ParameterError(f"label window [{lo}, {hi}] is not inside the grid")
    axes = [np.arange(a, b + 1) for a, b in zip(lo, hi)]
    labels_k = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
    heights = labels_k * grid.delta
    unary = np.array(disorder.values[:, grid.flat(labels_k)], dtype=np.float64)

    # elastic terms of edges between Λ and ∂Λ
    num = disorder.vertex_numbering()
    tv = tau.values
    edges = []
    for _, s0, s1, _t in dom.edges():
        m0, m1 = dom.mask[s0], dom.mask[s1]
        both = m0 & m1
        if both.any():
            edges.append(np.stack([num[s0][both], num[s1][both]], axis=1))
        for inside, out_sl, in_sl in ((m0 & ~m1, s1, s0), (m1 & ~m0, s0, s1)):
            if inside.any():
                rows = num[in_sl][inside]
                tb = tv[out_sl][inside]  # (k, n)
                d = heights[None, :, :] - tb[:, None, :]
                np.add.at(unary, rows, 0.5 * np.sum(d * d, axis=-1))
    edges = np.concatenate(edges) if edges else np.zeros((0, 2), np.int64)
    edges = np.sort(edges, axis=1)
    edges = edges[np.lexsort((edges[:, 1], edges[:, 0]))]
    if tilt is not None:
        tilt = np.asarray(tilt, dtype=np.float64).reshape(dom.size, n)
        unary = unary + tilt @ heights.T
    return LabelProblem(dom, disorder, tau, lo, hi, labels_k, heights, unary, edges, tilt)


def crop_infinite(problem: LabelProblem) -> LabelProblem:
    """Drop labels that are +inf at every vertex when they form an axis-aligned margin.

    Used by solvers that need finite costs; the feasible set is unchanged.
    """
    finite_any = np.isfinite(problem.unary).any(axis=0).reshape(problem.axis_sizes)
    lo = problem.window_lo.copy()
    hi = problem.window_hi.copy()
    for a in range(problem.n):
        other = tuple(b for b in range(problem.n) if b != a)
        used = finite_any.any(axis=other) if other else finite_any
        idx = np.flatnonzero(used)
        if idx.size == 0:
            raise SolverError("no feasible label")
        lo[a] = problem.window_lo[a] + idx[0]
        hi[a] = problem.window_lo[a] + idx[-1]
    if np.array_equal(lo, problem.window_lo) and np.array_equal(hi, problem.window_hi):
        return problem
    sel = np.all((problem.labels_k >= lo) & (problem.labels_k <= hi), axis=1)
    return LabelProblem(problem.domain, problem.disorder, problem.tau, lo, hi,
                        problem.labels_k[sel], problem.heights[sel], problem.unary[:, sel],
                        problem.edges, problem.tilt)


@dataclass(frozen=True)
class SolveResult:
    phi: LatticeField
    ground_energy: float
    solver_id: str
    exact: bool
    stats: dict = dc_field(default_factory=dict)
    labels: np.ndarray | None = None
    objective: float | None = None
    grid_K: int = 0
    grid_delta: float = 1.0

    def max_height(self) -> float:
        return float(np.linalg.norm(self.phi.interior(), axis=-1).max())

    def pinned(self) -> bool:
        """Whether some height reached the edge of the grid."""
        k = np.abs(np.rint(self.phi.interior() / self.grid_delta))
        return bool(np.any(k >= self.grid_K))


def finish(problem: LabelProblem, labels, solver_id: str, exact: bool, stats: dict,
           t0: float | None = None) -> SolveResult:
    """Package a labelling; the energy is re-evaluated from the Hamiltonian."""
    import time
    labels = np.asarray(labels, dtype=np.int64)
    phi = problem.to_field(labels)
    objective = problem.energy(labels)
    if not np.isfinite(objective):
        raise SolverError(f"{solver_id}: returned an infeasible labelling")
    if problem.tilt is None:
        ge = hamiltonian(phi, problem.disorder, tau=problem.tau).total
    else:
        ge = objective
    stats = dict(stats)
    if t0 is not None:
        stats["wall_time"] = time.perf_counter() - t0
    return SolveResult(phi, ge, solver_id, exact, stats, labels, objective,
                       problem.disorder.grid.K, problem.disorder.grid.delta)


def check_cap(count: float, cap: float, what: str):
    if count > cap:
        raise CapacityError(f"{what}: {count:.3g} exceeds cap {cap:.3g}")
