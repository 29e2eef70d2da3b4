"""Fractional Brownian disorder on a discretised height space.

η_{v,·} is, for each vertex v, an independent fractional Brownian field over
R^n with Hurst index H, tabulated on a symmetric grid {−Kδ, …, Kδ}^n.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import linalg

from . import rng as rngmod
from .errors import (AlignmentError, CapacityError, PaddingError,
                     ParameterError, SamplerError)
from .lattice import Domain, LatticeField

DENSE_CAP = 4096
GRID_CAP = 50_000_000  # total table entries held in memory
ALIGN_TOL = 1e-9


@dataclass(frozen=True)
class HurstParams:
    H: float
    n: int = 1

    def __post_init__(self):
        if not 0.0 < self.H < 1.0:
            raise ParameterError(f"Hurst index must lie in (0,1), got {self.H}")
        if int(self.n) != self.n or self.n < 1:
            raise ParameterError(f"codimension must be a positive integer, got {self.n}")


@dataclass(frozen=True)
class HeightGrid:
    """The grid {−Kδ, …, Kδ}^n."""

    n: int
    delta: float
    K: int

    def __post_init__(self):
        if self.n < 1 or self.K < 0 or not self.delta > 0:
            raise ParameterError(f"invalid grid n={self.n} delta={self.delta} K={self.K}")

    @property
    def side(self) -> int:
        return 2 * self.K + 1

    @property
    def size(self) -> int:
        return self.side ** self.n

    @property
    def shape(self):
        return (self.side,) * self.n

    @property
    def origin(self) -> int:
        return (self.size - 1) // 2

    def indices(self) -> np.ndarray:
        """Integer multi-indices in [−K, K]^n, C order, shape (P, n)."""
        ax = np.arange(-self.K, self.K + 1)
        return np.stack(np.meshgrid(*([ax] * self.n), indexing="ij"), axis=-1).reshape(-1, self.n)

    def points(self) -> np.ndarray:
        return self.indices() * self.delta

    def to_index(self, heights, strict: bool = True):
        """Heights (..., n) → integer multi-index (..., n); raises on misalignment."""
        h = np.asarray(heights, dtype=np.float64)
        k = np.rint(h / self.delta)
        if np.any(np.abs(h / self.delta - k) > ALIGN_TOL * np.maximum(1.0, np.abs(k))):
            raise AlignmentError("height is not a grid multiple of delta")
        k = k.astype(np.int64)
        if strict and np.any(np.abs(k) > self.K):
            raise AlignmentError(f"height outside the grid (|index| > K = {self.K})")
        return k

    def flat(self, k) -> np.ndarray:
        """Multi-index (..., n) in [−K, K] → flat index."""
        k = np.asarray(k, dtype=np.int64) + self.K
        out = np.zeros(k.shape[:-1], dtype=np.int64)
        for a in range(self.n):
            out = out * self.side + k[..., a]
        return out

    def contains(self, heights) -> bool:
        try:
            self.to_index(heights)
        except AlignmentError:
            return False
        return True

    def refine(self) -> "HeightGrid":
        """Half the spacing, same extent."""
        return HeightGrid(self.n, self.delta / 2, 2 * self.K)


def _check_H(H):
    if not np.all((np.asarray(H) > 0.0) & (np.asarray(H) < 1.0)):
        raise ParameterError(f"Hurst index must lie in (0,1), got {H}")


def fbm_covariance(t, s, H: float):
    """½(‖t‖^{2H} + ‖s‖^{2H} − ‖t−s‖^{2H}); broadcasts over leading axes."""
    _check_H(H)
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    s = np.atleast_1d(np.asarray(s, dtype=np.float64))
    nt = np.linalg.norm(t, axis=-1)
    ns = np.linalg.norm(s, axis=-1)
    nd = np.linalg.norm(t - s, axis=-1)
    out = 0.5 * (nt ** (2 * H) + ns ** (2 * H) - nd ** (2 * H))
    return float(out) if np.ndim(out) == 0 else out


def _fgn_autocov(m, H, delta):
    k = np.arange(m + 1, dtype=np.float64)
    return 0.5 * delta ** (2 * H) * (np.abs(k + 1) ** (2 * H) - 2 * k ** (2 * H)
                                     + np.abs(k - 1) ** (2 * H))


@lru_cache(maxsize=32)
def _circulant_eigs(m: int, H: float, delta: float):
    g = _fgn_autocov(m, H, delta)
    c = np.concatenate([g, g[-2:0:-1]])
    lam = np.fft.fft(c).real
    floor = -1e-10 * lam.max()
    if lam.min() < floor:
        return None
    return np.sqrt(np.clip(lam, 0.0, None) / c.size)


def _jittered_cholesky(C):
    try:
        return linalg.cholesky(C, lower=True)
    except linalg.LinAlgError:
        pass
    jitter = 1e-12 * max(float(np.mean(np.diag(C))), 1e-300)
    for _ in range(3):
        try:
            return linalg.cholesky(C + jitter * np.eye(C.shape[0]), lower=True)
        except linalg.LinAlgError:
            jitter *= 10
    raise SamplerError(f"covariance not positive definite after jitter up to {jitter / 10:.1e}")


@lru_cache(maxsize=16)
def _line_cholesky(K: int, H: float, delta: float):
    k = np.concatenate([np.arange(-K, 0), np.arange(1, K + 1)]) * delta
    C = fbm_covariance(k[:, None, None], k[None, :, None], H)
    return _jittered_cholesky(C)


@lru_cache(maxsize=16)
def _field_cholesky(n: int, K: int, H: float, delta: float):
    grid = HeightGrid(n, delta, K)
    pts = np.delete(grid.points(), grid.origin, axis=0)
    C = fbm_covariance(pts[:, None, :], pts[None, :, :], H)
    return _jittered_cholesky(C)


def _line_from_normals(Z, K, H, delta):
    """Map standard normals (N, 4K) to fBm rows (N, 2K+1) via circulant embedding."""
    m = 2 * K
    root = _circulant_eigs(m, H, delta)
    if root is None:
        return None
    W = Z[:, : 2 * m] + 1j * Z[:, 2 * m: 4 * m]
    X = np.fft.fft(W * root, axis=1).real[:, :m]
    B = np.zeros((Z.shape[0], m + 1))
    np.cumsum(X, axis=1, out=B[:, 1:])
    B -= B[:, K: K + 1]
    B[:, K] = 0.0
    return B


def sample_fbm_line(grid: HeightGrid, H: float, rng: np.random.Generator, size=None,
                    method: str = "auto") -> np.ndarray:
    """Exact fBm on a 1-D grid, zero at t = 0.

    Circulant embedding of the increment sequence; falls back to a Cholesky
    factorisation if the embedding is not nonnegative definite.
    """
    _check_H(H)
    if grid.n != 1:
        raise ParameterError("sample_fbm_line needs a one-dimensional grid")
    rows = 1 if size is None else int(size)
    K = grid.K
    if K == 0:
        out = np.zeros((rows, 1))
        return out[0] if size is None else out
    out = None
    if method in ("auto", "circulant"):
        Z = rng.standard_normal((rows, 8 * K))
        out = _line_from_normals(Z, K, H, grid.delta)
        if out is None and method == "circulant":
            raise SamplerError(f"circulant embedding not nonnegative definite (K={K}, H={H})")
    if out is None:
        if 2 * K > DENSE_CAP:
            raise SamplerError(f"circulant embedding failed and 2K={2 * K} exceeds the dense cap")
        Lc = _line_cholesky(K, H, grid.delta)
        Z = rng.standard_normal((rows, 2 * K))
        vals = Z @ Lc.T
        out = np.zeros((rows, 2 * K + 1))
        out[:, :K] = vals[:, :K]
        out[:, K + 1:] = vals[:, K:]
    return out[0] if size is None else out


def sample_fbm_field(grid: HeightGrid, H: float, rng: np.random.Generator, size=None) -> np.ndarray:
    """Exact fractional Brownian field on a grid of any dimension (dense Cholesky)."""
    _check_H(H)
    rows = 1 if size is None else int(size)
    P = grid.size
    if P - 1 > DENSE_CAP:
        raise CapacityError(f"{P} grid points exceed the dense sampler cap {DENSE_CAP + 1}")
    out = np.zeros((rows, P))
    if P > 1:
        Lc = _field_cholesky(grid.n, grid.K, H, grid.delta)
        Z = rng.standard_normal((rows, P - 1))
        vals = Z @ Lc.T
        o = grid.origin
        out[:, :o] = vals[:, :o]
        out[:, o + 1:] = vals[:, o:]
    return out[0] if size is None else out


class DisorderField:
    """Tabulated disorder: values[i, p] = η_{v_i, t_p} with v_i in C order over Λ."""

    def __init__(self, domain: Domain, grid: HeightGrid, params: HurstParams, values,
                 rng_seed: int | None = None, resample: int = 0):
        values = np.asarray(values, dtype=np.float64)
        if values.shape != (domain.size, grid.size):
            raise ParameterError(
                f"values shape {values.shape} != ({domain.size}, {grid.size})")
        if grid.n != params.n:
            raise ParameterError("grid and params disagree on n")
        values = values.copy() if values.flags.writeable else values
        values.setflags(write=False)
        self.domain = domain
        self.grid = grid
        self.params = params
        self.values = values
        self.rng_seed = rng_seed
        self.resample = resample
        self._num = None

    @property
    def H(self) -> float:
        return self.params.H

    @property
    def n(self) -> int:
        return self.params.n

    def vertex_numbering(self) -> np.ndarray:
        """Frame-shaped array mapping sites of Λ to row indices (−1 elsewhere)."""
        if self._num is None:
            num = -np.ones(self.domain.frame_shape, dtype=np.int64)
            num[self.domain.mask] = np.arange(self.domain.size)
            self._num = num
        return self._num

    def rows_of(self, vertices) -> np.ndarray:
        """Row indices for vertex coordinates (k, d) or a Domain on the same frame."""
        if isinstance(vertices, Domain):
            if vertices.same_frame(self.domain):
                if np.any(vertices.mask & ~self.domain.mask):
                    raise ParameterError("subdomain is not contained in the field's domain")
                return self.vertex_numbering()[vertices.mask]
            vertices = vertices.vertices()
        v = np.atleast_2d(np.asarray(vertices, dtype=np.int64))
        idx = tuple((v - self.domain.frame_lo).T)
        try:
            rows = self.vertex_numbering()[idx]
        except IndexError:
            raise ParameterError("vertex outside the field's domain") from None
        if np.any(rows < 0):
            raise ParameterError("vertex outside the field's domain")
        return rows

    def lookup(self, heights) -> np.ndarray:
        """η_{v_i, heights[i]} for every vertex i of Λ; heights shape (|Λ|, n)."""
        h = np.asarray(heights, dtype=np.float64).reshape(self.domain.size, self.n)
        flat = self.grid.flat(self.grid.to_index(h))
        return self.values[np.arange(self.domain.size), flat]

    def table(self) -> np.ndarray:
        """values reshaped to (|Λ|, 2K+1, …, 2K+1)."""
        return self.values.reshape((self.domain.size,) + self.grid.shape)

    def with_values(self, values) -> "DisorderField":
        return DisorderField(self.domain, self.grid, self.params, values, self.rng_seed,
                             self.resample)

    def restrict(self, grid: HeightGrid) -> "DisorderField":
        """Restriction to a coarser or smaller grid whose points are all in this one."""
        if grid.n != self.n:
            raise ParameterError("codimension mismatch")
        ratio = grid.delta / self.grid.delta
        step = int(round(ratio))
        if abs(ratio - step) > ALIGN_TOL or step < 1 or grid.K * step > self.grid.K:
            raise AlignmentError("target grid is not a subgrid")
        sl = slice(self.grid.K - grid.K * step, self.grid.K + grid.K * step + 1, step)
        vals = self.table()[(slice(None),) + (sl,) * self.n].reshape(self.domain.size, -1)
        return DisorderField(self.domain, grid, self.params, np.ascontiguousarray(vals),
                             self.rng_seed, self.resample)

    def __eq__(self, other):
        return (isinstance(other, DisorderField) and self.domain == other.domain
                and self.grid == other.grid and self.params == other.params
                and np.array_equal(self.values, other.values))

    __hash__ = None


def zero_disorder(domain: Domain, grid: HeightGrid, params: HurstParams) -> DisorderField:
    return DisorderField(domain, grid, params, np.zeros((domain.size, grid.size)), None)


def sample_disorder(domain: Domain, grid: HeightGrid, params: HurstParams, seed: int,
                    resample: int = 0, chunk: int = 64) -> DisorderField:
    """Independent per-vertex fields, one counter-based stream per vertex.

    The stream of a vertex is keyed by (seed, vertex coordinates, resample), so
    the field at a vertex does not depend on the rest of the domain.
    """
    if params.n != grid.n:
        raise ParameterError("grid and params disagree on n")
    if domain.size * grid.size > GRID_CAP:
        raise CapacityError(f"table of {domain.size}x{grid.size} exceeds the memory cap")
    verts = domain.vertices()
    out = np.empty((domain.size, grid.size))
    H = params.H
    if grid.n == 1:
        nz = 8 * grid.K
        dense = _circulant_eigs(2 * grid.K, H, grid.delta) is None if grid.K else False
        if dense:
            nz = 2 * grid.K
    else:
        nz = grid.size - 1
        dense = True
    for start in range(0, domain.size, chunk):
        stop = min(start + chunk, domain.size)
        Z = np.empty((stop - start, nz))
        for i in range(start, stop):
            g = rngmod.vertex_stream(seed, rngmod.DISORDER, verts[i], resample)
            Z[i - start] = g.standard_normal(nz)
        if grid.size == 1:
            out[start:stop] = 0.0
        elif grid.n == 1 and not dense:
            out[start:stop] = _line_from_normals(Z, grid.K, H, grid.delta)
        else:
            if grid.size - 1 > DENSE_CAP:
                raise CapacityError(f"{grid.size} grid points exceed the dense sampler cap")
            if grid.n == 1:
                Lc = _line_cholesky(grid.K, H, grid.delta)
            else:
                Lc = _field_cholesky(grid.n, grid.K, H, grid.delta)
            vals = Z @ Lc.T
            o = grid.origin
            out[start:stop, :o] = vals[:, :o]
            out[start:stop, o] = 0.0
            out[start:stop, o + 1:] = vals[:, o:]
    return DisorderField(domain, grid, params, out, seed, resample)


def shift_recenter(field: DisorderField, s: LatticeField, out_grid: HeightGrid | None = None,
                   out_of_range: str = "error") -> DisorderField:
    """η^s_{v,t} = η_{v,t−s_v} − η_{v,−s_v} on out_grid (default: the input grid).

    out_of_range="error" raises PaddingError when t − s_v leaves the input grid;
    "inf" fills those entries with +inf, which excludes them from minimisation.
    """
    grid = field.grid
    og = grid if out_grid is None else out_grid
    if og.n != grid.n or abs(og.delta - grid.delta) > ALIGN_TOL * grid.delta:
        raise AlignmentError("output grid must share n and delta with the input grid")
    if s.n != grid.n:
        raise ParameterError("shift codimension mismatch")
    if not s.domain.same_frame(field.domain):
        raise ParameterError("shift and field live on different frames")
    shift = grid.to_index(s.interior(), strict=False)
    if np.any(np.abs(shift) > grid.K):
        bad = int(np.argmax(np.abs(shift).max(axis=1)))
        raise PaddingError(f"−s_v is off the grid at vertex {field.domain.vertices()[bad].tolist()}")
    N = field.domain.size
    out_idx = og.indices()  # (P_out, n)
    src = out_idx[None, :, :] - shift[:, None, :]  # (N, P_out, n)
    valid = np.all(np.abs(src) <= grid.K, axis=-1)
    if out_of_range == "error" and not valid.all():
        bad = int(np.argmin(valid.all(axis=1)))
        raise PaddingError(
            f"window underflow at vertex {field.domain.vertices()[bad].tolist()}: "
            f"need |t − s_v| ≤ {grid.K} grid steps")
    src = np.clip(src, -grid.K, grid.K)
    rows = np.arange(N)[:, None]
    vals = field.values[rows, grid.flat(src)]
    base = field.values[np.arange(N), grid.flat(-shift)]
    vals = vals - base[:, None]
    if out_of_range == "inf":
        vals = np.where(valid, vals, np.inf)
    elif out_of_range != "error":
        raise ParameterError(f"unknown out_of_range policy {out_of_range!r}")
    return DisorderField(field.domain, og, field.params, vals, field.rng_seed, field.resample)


# η̂ and the resampling coupling

def _aligned_pm(grid: HeightGrid, alpha_h: float):
    t = np.zeros(grid.n)
    t[0] = alpha_h
    k = grid.to_index(t)
    return grid.flat(k), grid.flat(-k)


def eta_hat(field: DisorderField, subdomain, alpha_h: float) -> float:
    """Σ_{v ∈ subdomain} (η_{v,αh e₁} + η_{v,−αh e₁})."""
    rows = field.rows_of(subdomain)
    ip, im = _aligned_pm(field.grid, alpha_h)
    return float(np.sum(field.values[rows, ip]) + np.sum(field.values[rows, im]))


def var_eta_hat(size: int, alpha_h: float, H: float) -> float:
    """|Λ′| (4 − 2^{2H}) (αh)^{2H}."""
    return size * (4.0 - 2.0 ** (2 * H)) * alpha_h ** (2 * H)


def cov_eta_hat(t, alpha_h: float, H: float):
    """Cov(η_{v,t}, η̂) for a vertex of the subdomain."""
    _check_H(H)
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    a = np.zeros(t.shape[-1])
    a[0] = alpha_h
    two_h = 2 * H
    out = 0.5 * (2 * np.linalg.norm(t, axis=-1) ** two_h + 2 * alpha_h ** two_h
                 - np.linalg.norm(t - a, axis=-1) ** two_h
                 - np.linalg.norm(t + a, axis=-1) ** two_h)
    return float(out) if np.ndim(out) == 0 else out


def kappa(t, alpha_h: float, H: float, var_hat: float):
    if not var_hat > 0:
        raise ParameterError("var_hat must be positive")
    if not alpha_h > 0:
        raise ParameterError("alpha_h must be positive")
    return cov_eta_hat(t, alpha_h, H) / var_hat


def decompose_and_resample(field: DisorderField, subdomain, alpha_h: float,
                           rng: np.random.Generator | None = None, new_hat: float | None = None):
    """Resample η̂ on a subdomain: ζ = η + κ (ζ̂ − η̂), ζ̂ an independent copy of η̂.

    Returns (ζ, η̂, ζ̂). Pass new_hat to inject a given value instead of drawing.
    """
    rows = field.rows_of(subdomain)
    old = eta_hat(field, subdomain, alpha_h)
    var = var_eta_hat(rows.size, alpha_h, field.H)
    if new_hat is None:
        if rng is None:
            raise ParameterError("need rng or new_hat")
        new_hat = math.sqrt(var) * float(rng.standard_normal())
    k = kappa(field.grid.points(), alpha_h, field.H, var)
    vals = np.array(field.values)
    vals[rows] += k[None, :] * (new_hat - old)
    return field.with_values(vals), old, float(new_hat)


# kernel inequalities

def kernel_value(t, H):
    """2‖t‖^{2H} + 2 − ‖t−e₁‖^{2H} − ‖t+e₁‖^{2H}.

    For ‖t‖ > 1 the terms are factored as ‖t‖^{2H}(1 + (1 ± 2t₁)/‖t‖²)^H and
    combined with expm1/log1p, which avoids cancellation at large ‖t‖.
    """
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    H = np.asarray(H, dtype=np.float64)
    e = np.zeros(t.shape[-1])
    e[0] = 1.0
    h2 = 2 * H
    r = np.linalg.norm(t, axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        direct = (2 * r ** h2 + 2 - np.linalg.norm(t - e, axis=-1) ** h2
                  - np.linalg.norm(t + e, axis=-1) ** h2)
        r2 = r * r
        a = np.log1p((1 - 2 * t[..., 0]) / r2)
        b = np.log1p((1 + 2 * t[..., 0]) / r2)
        far = 2 - r ** h2 * (np.expm1(H * a) + np.expm1(H * b))
    return np.where(r > 1, far, direct)


def g_claim(x, H):
    """g(x) = 2x^{2H} + 2 − 2(x²+1)^H (evaluated stably for x > 1)."""
    x = np.asarray(x, dtype=np.float64)
    H = np.asarray(H, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        direct = 2 * x ** (2 * H) + 2 - 2 * (x * x + 1) ** H
        far = 2 - 2 * x ** (2 * H) * np.expm1(H * np.log1p(1 / (x * x)))
    return np.where(x > 1, far, direct)


def g_lemma(x, H: float):
    """g(x) = x^H + 1 − (x+1)^H; note g_claim(x) = 2 g_lemma(x²)."""
    x = np.asarray(x, dtype=np.float64)
    return x ** H + 1 - (x + 1) ** H


def kernel_bounds_check(t, H: float, literal: bool = False):
    """(lower, value, upper) for the kernel sandwich.

    lower = g_claim(‖t‖), which is attained for t ⊥ e₁. With literal=True the
    lower bound is 2 g_claim(‖t‖); that form fails (e.g. t = 10e₁, H = ½).
    upper = min(2(‖t‖^{2H} + ‖t‖), 8). H may be an array matching t's leading axes.
    """
    _check_H(H)
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    r = np.linalg.norm(t, axis=-1)
    value = kernel_value(t, H)
    lower = g_claim(r, H) * (2.0 if literal else 1.0)
    upper = np.minimum(2 * (r ** (2 * H) + r), 8.0)
    if np.ndim(value) == 0:
        return float(lower), float(value), float(upper)
    return lower, value, upper


def _kernel_profile(H, n, radii):
    """Max and min of kernel_value over spheres of the given radii."""
    theta = np.linspace(0.0, np.pi, 721 if n > 1 else 2)
    if n == 1:
        theta = np.array([0.0, np.pi])
    c = np.cos(theta)
    sn = np.sin(theta)
    vmax = np.empty(radii.size)
    vmin = np.empty(radii.size)
    for i, r in enumerate(radii):
        t = np.stack([r * c, r * sn], axis=-1) if n > 1 else (r * c)[:, None]
        v = kernel_value(t, H)
        vmax[i] = v.max()
        vmin[i] = v.min()
    return vmax, vmin


@lru_cache(maxsize=64)
def alpha_beta(H: float, n: int = 1, step: float = 0.25, max_value: float = 1e4):
    """Smallest α ≥ 1 and β ≥ α on a grid of the given step such that

    sup_{‖t‖≤h} Cov(η̂, η_{v,t}) ≤ (αh)^{2H}/8 and
    inf_{‖t‖≥βh} Cov(η̂, η_{v,t}) ≥ (αh)^{2H}/2.

    Both conditions are scale free in h, so the scan uses u = t/(αh), where
    they read sup_{‖u‖≤1/α} value(u) ≤ 1/4 and inf_{‖u‖≥β/α} value(u) ≥ 1.
    """
    _check_H(H)
    alpha = 1.0
    while True:
        radii = np.linspace(0.0, 1.0 / alpha, 401)
        vmax, _ = _kernel_profile(H, n, radii)
        if vmax.max() <= 0.25:
            break
        alpha += step
        if alpha > max_value:
            raise ParameterError(f"no alpha found up to {max_value}")
    beta = alpha
    while True:
        r0 = beta / alpha
        radii = np.concatenate([np.linspace(r0, r0 + 4, 401), r0 + np.geomspace(4, 1e6, 400)])
        _, vmin = _kernel_profile(H, n, radii)
        if vmin.min() >= 1.0:
            break
        beta += step
        if beta > max_value:
            raise ParameterError(f"no beta found up to {max_value}")
    return alpha, beta
