"""Lattice domains, fields, Laplacian, Green's functions and related objects.

A Domain is a vertex set Λ inside an integer box. Every field lives on the
*frame*, the box padded by one site on each side, so that Λ⁺ (Λ plus its
nearest neighbours) always fits. Vertices are enumerated in C order over the
box (last axis fastest).
"""
from __future__ import annotations

import math
from functools import lru_cache

import numba as nb
import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy import ndimage

from .errors import (ConstructionError, ConvergenceError, DomainMismatchError,
                     ParameterError)

DIRECT_SOLVE_MAX = 10_000


class Domain:
    """Finite vertex set Λ ⊂ Z^d given by a box and an optional mask."""

    def __init__(self, lo, hi, mask=None):
        lo = np.atleast_1d(np.asarray(lo, dtype=np.int64))
        hi = np.atleast_1d(np.asarray(hi, dtype=np.int64))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ParameterError("lo and hi must be 1-D of equal length")
        if np.any(hi < lo):
            raise ParameterError("empty box")
        self.lo = lo
        self.hi = hi
        self.d = lo.size
        self.shape = tuple(int(x) for x in hi - lo + 1)
        self.frame_shape = tuple(s + 2 for s in self.shape)
        inner = np.ones(self.shape, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
        if inner.shape != self.shape:
            raise ParameterError(f"mask shape {inner.shape} does not match box {self.shape}")
        if not inner.any():
            raise ParameterError("domain must be nonempty")
        fm = np.zeros(self.frame_shape, dtype=bool)
        fm[(slice(1, -1),) * self.d] = inner
        fm.setflags(write=False)
        self.mask = fm
        closure = ndimage.binary_dilation(fm, structure=ndimage.generate_binary_structure(self.d, 1))
        closure.setflags(write=False)
        self.closure = closure
        boundary = closure & ~fm
        boundary.setflags(write=False)
        self.boundary = boundary
        self.size = int(fm.sum())
        self.is_box = bool(inner.all())

    @classmethod
    def box(cls, L: int, d: int) -> "Domain":
        """Λ_L = {−L,…,L}^d."""
        if L < 0 or d < 1:
            raise ParameterError("need L >= 0 and d >= 1")
        return cls([-L] * d, [L] * d)

    @classmethod
    def from_vertices(cls, vertices) -> "Domain":
        v = np.atleast_2d(np.asarray(vertices, dtype=np.int64))
        if v.size == 0:
            raise ParameterError("domain must be nonempty")
        lo, hi = v.min(axis=0), v.max(axis=0)
        mask = np.zeros(tuple(hi - lo + 1), dtype=bool)
        mask[tuple((v - lo).T)] = True
        return cls(lo, hi, mask)

    # coordinates

    @property
    def frame_lo(self):
        return self.lo - 1

    def frame_coords(self):
        """Integer coordinates of every frame site, shape frame_shape + (d,)."""
        axes = [np.arange(a - 1, b + 2) for a, b in zip(self.lo, self.hi)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def vertices(self) -> np.ndarray:
        """Coordinates of Λ in C order, shape (|Λ|, d)."""
        return np.argwhere(self.mask) + self.frame_lo

    def boundary_vertices(self) -> np.ndarray:
        return np.argwhere(self.boundary) + self.frame_lo

    def to_frame_index(self, coords):
        c = np.asarray(coords, dtype=np.int64) - self.frame_lo
        return tuple(np.moveaxis(c, -1, 0))

    def contains(self, coords) -> bool:
        c = np.asarray(coords, dtype=np.int64) - self.frame_lo
        if np.any(c < 0) or np.any(c >= self.frame_shape):
            return False
        return bool(self.mask[tuple(c)])

    def same_frame(self, other: "Domain") -> bool:
        return np.array_equal(self.lo, other.lo) and np.array_equal(self.hi, other.hi)

    def submask(self, frame_mask) -> "Domain":
        """Sub-domain on the same box given a frame-shaped mask (intersected with Λ)."""
        m = np.asarray(frame_mask, dtype=bool) & self.mask
        return Domain(self.lo, self.hi, m[(slice(1, -1),) * self.d])

    def window(self, center, radius_open) -> "Domain":
        """Λ ∩ (center + (−r, r)^d), on the same box."""
        c = np.asarray(center) - self.frame_lo
        idx = np.indices(self.frame_shape)
        inside = np.ones(self.frame_shape, dtype=bool)
        for a in range(self.d):
            inside &= np.abs(idx[a] - c[a]) < radius_open
        return self.submask(inside)

    def translate(self, offset) -> "Domain":
        off = np.asarray(offset, dtype=np.int64)
        return Domain(self.lo + off, self.hi + off, self.mask[(slice(1, -1),) * self.d])

    def key(self):
        return (tuple(self.lo), tuple(self.hi), self.mask.tobytes())

    def __eq__(self, other):
        return isinstance(other, Domain) and self.key() == other.key()

    def __hash__(self):
        return hash(self.key())

    def __repr__(self):
        kind = "box" if self.is_box else f"{self.size} sites"
        return f"Domain(lo={self.lo.tolist()}, hi={self.hi.tolist()}, {kind})"

    def edges(self):
        """Yield (axis, lo_slice, hi_slice, touch) for nearest-neighbour pairs in the frame.

        touch marks pairs with at least one endpoint in Λ.
        """
        for a in range(self.d):
            s0 = [slice(None)] * self.d
            s1 = [slice(None)] * self.d
            s0[a] = slice(0, -1)
            s1[a] = slice(1, None)
            s0, s1 = tuple(s0), tuple(s1)
            yield a, s0, s1, self.mask[s0] | self.mask[s1]


class LatticeField:
    """A map Λ⁺ → R^n stored on the domain frame (shape frame_shape + (n,))."""

    def __init__(self, domain: Domain, values):
        values = np.asarray(values, dtype=np.float64)
        if values.shape == domain.frame_shape:
            values = values[..., None]
        if values.shape[:-1] != domain.frame_shape:
            raise DomainMismatchError(
                f"values shape {values.shape} does not fit frame {domain.frame_shape}")
        self.domain = domain
        self.values = values
        self.n = values.shape[-1]

    @classmethod
    def zeros(cls, domain: Domain, n: int = 1) -> "LatticeField":
        return cls(domain, np.zeros(domain.frame_shape + (n,)))

    @classmethod
    def constant(cls, domain: Domain, c) -> "LatticeField":
        c = np.atleast_1d(np.asarray(c, dtype=np.float64))
        return cls(domain, np.broadcast_to(c, domain.frame_shape + c.shape).copy())

    @classmethod
    def from_interior(cls, domain: Domain, interior, boundary=None) -> "LatticeField":
        """Build from per-vertex values on Λ (C order) and optional boundary field."""
        interior = np.asarray(interior, dtype=np.float64)
        if interior.ndim == 1:
            interior = interior[:, None]
        n = interior.shape[1]
        vals = np.zeros(domain.frame_shape + (n,)) if boundary is None else boundary.values.copy()
        vals[domain.mask] = interior
        return cls(domain, vals)

    @property
    def scalar(self) -> np.ndarray:
        if self.n != 1:
            raise ParameterError("field is not scalar")
        return self.values[..., 0]

    def interior(self) -> np.ndarray:
        """Values on Λ in C order, shape (|Λ|, n)."""
        return self.values[self.domain.mask]

    def boundary_values(self) -> np.ndarray:
        return self.values[self.domain.boundary]

    def at(self, coords) -> np.ndarray:
        return self.values[self.domain.to_frame_index(coords)]

    def restricted(self) -> np.ndarray:
        """Values with everything outside Λ⁺ set to zero."""
        return np.where(self.domain.closure[..., None], self.values, 0.0)

    def __add__(self, other):
        _check_same(self, other)
        return LatticeField(self.domain, self.values + other.values)

    def __sub__(self, other):
        _check_same(self, other)
        return LatticeField(self.domain, self.values - other.values)

    def __neg__(self):
        return LatticeField(self.domain, -self.values)

    def __mul__(self, c):
        return LatticeField(self.domain, self.values * c)

    __rmul__ = __mul__

    def outer(self, e) -> "LatticeField":
        """Scalar field times a vector e ∈ R^n."""
        e = np.atleast_1d(np.asarray(e, dtype=np.float64))
        return LatticeField(self.domain, self.scalar[..., None] * e)


def _check_same(f: LatticeField, g: LatticeField):
    if not f.domain.same_frame(g.domain):
        raise DomainMismatchError("fields live on different frames")
    if f.n != g.n:
        raise DomainMismatchError(f"codimension mismatch {f.n} vs {g.n}")


def _resolve(f: LatticeField, domain: Domain | None) -> Domain:
    if domain is None:
        return f.domain
    if not domain.same_frame(f.domain):
        raise DomainMismatchError("field and domain have different frames")
    return domain


def laplacian(f: LatticeField, domain: Domain | None = None) -> LatticeField:
    """Δ_Λ f: sum over Λ-touching edges at v of (f_u − f_v); zero off Λ⁺."""
    dom = _resolve(f, domain)
    x = f.values
    out = np.zeros_like(x)
    for _, s0, s1, touch in dom.edges():
        diff = np.where(touch[..., None], x[s1] - x[s0], 0.0)
        out[s0] += diff
        out[s1] -= diff
    return LatticeField(f.domain, out)


def dirichlet_energy(f: LatticeField, domain: Domain | None = None) -> float:
    """‖∇f‖²_Λ, summed over edges with at least one endpoint in Λ."""
    dom = _resolve(f, domain)
    parts = []
    for _, s0, s1, touch in dom.edges():
        diff = f.values[s1][touch] - f.values[s0][touch]
        parts.append((diff * diff).ravel())
    return float(np.sum(np.concatenate(parts))) if parts else 0.0


def inner(f: LatticeField, g: LatticeField, where=None) -> float:
    """(f, g) summed over the frame (or over a boolean frame mask)."""
    _check_same(f, g)
    prod = np.sum(f.values * g.values, axis=-1)
    if where is not None:
        prod = prod[where]
    return float(np.sum(prod))


def grad_inner(f: LatticeField, g: LatticeField, domain: Domain | None = None) -> float:
    """(∇f, ∇g)_Λ over Λ-touching edges."""
    _check_same(f, g)
    dom = _resolve(f, domain)
    parts = []
    for _, s0, s1, touch in dom.edges():
        df = f.values[s1][touch] - f.values[s0][touch]
        dg = g.values[s1][touch] - g.values[s0][touch]
        parts.append((df * dg).ravel())
    return float(np.sum(np.concatenate(parts)))


# linear algebra on Λ

def _frame_numbering(dom: Domain):
    num = -np.ones(dom.frame_shape, dtype=np.int64)
    num[dom.mask] = np.arange(dom.size)
    return num


@lru_cache(maxsize=64)
def _operator(key):
    lo, hi, maskbytes = key
    dom = Domain(lo, hi, np.frombuffer(maskbytes, dtype=bool).reshape(
        tuple(b - a + 3 for a, b in zip(lo, hi)))[(slice(1, -1),) * len(lo)])
    num = _frame_numbering(dom)
    rows, cols = [], []
    for _, s0, s1, _touch in dom.edges():
        a, b = num[s0], num[s1]
        both = (a >= 0) & (b >= 0)
        rows.append(a[both])
        cols.append(b[both])
    r = np.concatenate(rows) if rows else np.zeros(0, np.int64)
    c = np.concatenate(cols) if cols else np.zeros(0, np.int64)
    N = dom.size
    adj = sp.coo_matrix((np.ones(r.size), (r, c)), shape=(N, N))
    A = (2 * dom.d * sp.identity(N) - adj - adj.T).tocsc()
    solve = spla.factorized(A) if N <= DIRECT_SOLVE_MAX else None
    return dom, num, A, solve


def solve_dirichlet(domain: Domain, rhs: np.ndarray, method: str = "auto") -> np.ndarray:
    """Solve (−Δ_Λ restricted to Λ) u = rhs for u on Λ (C order).

    method: "direct", "cg" or "auto" (direct up to DIRECT_SOLVE_MAX unknowns).
    """
    _, _, A, solve = _operator(domain.key())
    rhs = np.asarray(rhs, dtype=np.float64)
    N = domain.size
    if method == "auto":
        method = "direct" if N <= DIRECT_SOLVE_MAX else "cg"
    cols = rhs.reshape(N, -1)
    out = np.empty_like(cols)
    for k in range(cols.shape[1]):
        b = cols[:, k]
        if method == "direct":
            out[:, k] = solve(b) if solve is not None else spla.spsolve(A, b)
        elif method == "cg":
            if not np.any(b):
                out[:, k] = 0.0
                continue
            x, info = spla.cg(A, b, rtol=1e-10, atol=0.0, maxiter=10 * N)
            if info != 0:
                raise ConvergenceError(f"conjugate gradient did not converge (info={info})")
            out[:, k] = x
        else:
            raise ParameterError(f"unknown method {method!r}")
    return out.reshape(rhs.shape)


def greens_function(domain: Domain, v, method: str = "auto") -> LatticeField:
    """G_Λ^v: solves −Δ_Λ G = δ_v with G = 0 off Λ."""
    v = np.asarray(v, dtype=np.int64)
    if not domain.contains(v):
        raise ParameterError(f"vertex {v.tolist()} is not in the domain")
    num = _frame_numbering(domain)
    b = np.zeros(domain.size)
    b[num[domain.to_frame_index(v)]] = 1.0
    g = solve_dirichlet(domain, b, method)
    vals = np.zeros(domain.frame_shape + (1,))
    vals[domain.mask, 0] = g
    return LatticeField(domain, vals)


def harmonic_extension(tau: LatticeField, domain: Domain | None = None, method: str = "auto"):
    """Harmonic extension τ̄ of the boundary values of τ into Λ.

    Returns (τ̄, ‖τ‖²_DE) where the second entry is ‖∇τ̄‖²_Λ.
    """
    dom = _resolve(tau, domain)
    bvals = np.where(dom.boundary[..., None], tau.values, 0.0)
    rhs = np.zeros(dom.frame_shape + (tau.n,))
    for _, s0, s1, _t in dom.edges():
        # contributions from boundary neighbours to interior sites
        rhs[s0] += np.where(dom.mask[s0][..., None], bvals[s1], 0.0)
        rhs[s1] += np.where(dom.mask[s1][..., None], bvals[s0], 0.0)
    u = solve_dirichlet(dom, rhs[dom.mask], method)
    vals = tau.values.copy()
    vals[dom.mask] = u
    ext = LatticeField(tau.domain, vals)
    return ext, dirichlet_energy(ext, dom)


def dyadic_window(domain: Domain, v, j: int) -> Domain:
    """Λ_j = Λ ∩ (v + (−2^j, 2^j)^d)."""
    return domain.window(v, 2 ** j)


def num_scales(domain: Domain, v) -> int:
    """m: the first j with Λ_j = Λ."""
    j = 1
    while dyadic_window(domain, v, j).size < domain.size:
        j += 1
    return j


def shift_function_s_j(v, j: int, domain: Domain, e) -> LatticeField:
    """s_j = (G_j^v − G_{j−1}^v)·e for j ≥ 2 and s_1 = G_1^v·e."""
    m = num_scales(domain, v)
    if not 1 <= j <= m:
        raise ParameterError(f"scale index j={j} outside 1..{m}")
    gj = greens_function(dyadic_window(domain, v, j), v)
    gj = LatticeField(domain, gj.values)
    if j > 1:
        gprev = greens_function(dyadic_window(domain, v, j - 1), v)
        gj = gj - LatticeField(domain, gprev.values)
    return gj.outer(e)


def support(f: LatticeField, tol: float = 0.0) -> np.ndarray:
    """Frame mask of sites with ‖f_v‖ > tol."""
    return np.linalg.norm(f.values, axis=-1) > tol


def d_functional(s: LatticeField, domain: Domain | None, H: float, tol: float = 0.0) -> float:
    """D(s) = ‖∇s‖^{4−4H} Σ‖s_v‖^{2H} + ‖∇s‖⁴ |supp s|."""
    dom = _resolve(s, domain)
    grad2 = dirichlet_energy(s, dom)
    norms = np.linalg.norm(s.values, axis=-1)
    supp = norms > tol
    if np.any(supp & ~dom.mask):
        raise DomainMismatchError("s is not supported in the domain")
    l2h = float(np.sum(norms[supp] ** (2 * H)))
    return grad2 ** (2 - 2 * H) * l2h + grad2 ** 2 * int(supp.sum())


# bump function

def _q_product(x):
    return np.clip(1.0 - x * x, 0.0, None) ** 2


def _q_plateau(k, r, L):
    """1 on |k| ≤ r, then a squared parabola in the margin, 0 from L+1 on."""
    w = L + 1 - r
    u = np.clip((np.abs(k) - r) / w, 0.0, 1.0)
    return (1.0 - u * u) ** 2


def pi_bump(L: int, eps: float, d: int = 2, profile: str = "product", check: bool = True):
    """Bump function π on Z^d vanishing off Λ_L with π ≥ 1 on Λ_L^−.

    profile "product": π_v = A Π_i q(v_i/(L+1)), q(x) = ((1−x²)_+)².
    profile "plateau": product of per-axis profiles equal to 1 on the inner box
    and decaying as a squared parabola across the margin (A = 1).

    Returns (field on Λ_{L+1}, report). The report holds A, the inner radius,
    max Δπ · L² and ‖∇π‖² / L^{d−2}.
    """
    if L < 2 or not 0 < eps < 1:
        raise ParameterError("need L >= 2 and 0 < eps < 1")
    r = math.ceil((1 - eps / (2 * d)) * L)
    dom = Domain.box(L + 1, d)
    k = np.arange(-(L + 2), L + 3)
    if profile == "product":
        q = _q_product(k / (L + 1))
        A = 1.0 / float(_q_product(np.array(r / (L + 1)))) ** d
    elif profile == "plateau":
        q = _q_plateau(k, r, L)
        A = 1.0
    else:
        raise ParameterError(f"unknown profile {profile!r}")
    vals = A * np.ones(dom.frame_shape)
    for a in range(d):
        shape = [1] * d
        shape[a] = -1
        vals = vals * q.reshape(shape)
    field = LatticeField(dom, vals)
    # conditions; the frame reaches |v_i| = L+2 so every site with Δπ ≠ 0 is in it
    lap = np.zeros_like(vals)
    for a in range(d):
        p = np.pad(vals, [(1, 1) if b == a else (0, 0) for b in range(d)])
        sl0 = [slice(None)] * d
        sl2 = [slice(None)] * d
        sl0[a] = slice(0, -2)
        sl2[a] = slice(2, None)
        lap += p[tuple(sl0)] + p[tuple(sl2)] - 2 * vals
    coords = dom.frame_coords()
    cheb = np.abs(coords).max(axis=-1)
    outside_zero = bool(np.all(vals[cheb > L] == 0.0))
    inner_min = float(vals[cheb <= r].min())
    energy = 0.0
    for a in range(d):
        energy += float(np.sum(np.diff(vals, axis=a) ** 2))
    report = {
        "profile": profile,
        "L": L,
        "eps": eps,
        "d": d,
        "A": A,
        "inner_radius": r,
        "vanishes_outside": outside_zero,
        "inner_min": inner_min,
        "laplace_const": float(lap.max()) * L ** 2,
        "energy_const": energy / L ** (d - 2),
    }
    if check:
        if not outside_zero:
            raise ConstructionError("π does not vanish off Λ_L")
        if inner_min < 1.0 - 1e-12:
            raise ConstructionError(f"π < 1 on the inner box (min {inner_min})")
    return field, report


# random-walk oracle for Green's functions

@nb.njit(cache=True)
def _walk_visits(mask, start, target, n_walks, seed):
    np.random.seed(seed)
    d = start.shape[0]
    counts = np.zeros(n_walks)
    pos = np.empty(d, np.int64)
    for w in range(n_walks):
        for a in range(d):
            pos[a] = start[a]
        c = 0
        while True:
            inside = True
            for a in range(d):
                if pos[a] < 0 or pos[a] >= mask.shape[a]:
                    inside = False
            if not inside:
                break
            flat = 0
            for a in range(d):
                flat = flat * mask.shape[a] + pos[a]
            if not mask.flat[flat]:
                break
            same = True
            for a in range(d):
                if pos[a] != target[a]:
                    same = False
            if same:
                c += 1
            k = np.random.randint(0, 2 * d)
            if k < d:
                pos[k] += 1
            else:
                pos[k - d] -= 1
        counts[w] = c
    return counts


def greens_random_walk(domain: Domain, v, x, n_walks: int = 100_000, seed: int = 0):
    """Monte-Carlo estimate of G_Λ^v(x) = (1/2d) E_x[#visits to v before exit].

    Returns (estimate, standard error).
    """
    start = np.asarray(x, dtype=np.int64) - domain.frame_lo
    target = np.asarray(v, dtype=np.int64) - domain.frame_lo
    counts = _walk_visits(np.ascontiguousarray(domain.mask), start, target, int(n_walks),
                          int(seed) % (2 ** 32))
    scale = 1.0 / (2 * domain.d)
    return scale * counts.mean(), scale * counts.std(ddof=1) / math.sqrt(n_walks)
