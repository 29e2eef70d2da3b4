"""Exponent fits, scaling-relation residuals, critical-dimension height proxies
and tail diagnostics."""
from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import optimize, stats

from ..errors import FitError, InsufficientDataError
from .config import chi_pred

N_BOOT = 500


@dataclass(frozen=True)
class ExponentEstimate:
    slope: float
    stderr: float
    r_squared: float
    L_min: int
    L_max: int
    statistic: str
    intercept: float = 0.0
    ci_low: float = math.nan  # bootstrap 95% interval
    ci_high: float = math.nan
    n_L: int = 0

    def interval(self, k: float = 1.0):
        """slope ± k·stderr."""
        return self.slope - k * self.stderr, self.slope + k * self.stderr

    def to_dict(self) -> dict:
        return asdict(self)


def _attr(r, name):
    return r[name] if isinstance(r, dict) else getattr(r, name)


def group_by_L(records, name: str) -> dict:
    out = {}
    for r in records:
        out.setdefault(int(_attr(r, "L")), []).append(float(_attr(r, name)))
    return {L: np.asarray(v) for L, v in sorted(out.items())}


def _check(groups: dict, min_L: int, min_samples: int):
    ok = {L: v for L, v in groups.items() if v.size >= min_samples}
    if len(ok) < min_L:
        raise InsufficientDataError(
            f"need >= {min_L} box sizes with >= {min_samples} samples each, have "
            + ", ".join(f"L={L}:{v.size}" for L, v in groups.items()))
    return ok


def _fit(Ls, ys, statistic):
    x = np.log(np.asarray(Ls, float))
    ys = np.asarray(ys, float)
    if np.any(ys <= 0) or not np.all(np.isfinite(ys)):
        raise FitError(f"{statistic}: non-positive value, cannot take logs")
    y = np.log(ys)
    fit = stats.linregress(x, y)
    return fit


def _bootstrap_slopes(groups, stat_fn, rng, n_boot):
    Ls = list(groups)
    x = np.log(np.asarray(Ls, float))
    xc = x - x.mean()
    out = np.empty(n_boot)
    for b in range(n_boot):
        ys = []
        for L in Ls:
            v = groups[L]
            ys.append(stat_fn(v[rng.integers(0, v.size, v.size)]))
        ys = np.log(np.maximum(np.asarray(ys), 1e-300))
        out[b] = np.dot(xc, ys) / np.dot(xc, xc)
    return out


def _estimate(groups, stat_fn, statistic, n_boot, seed):
    Ls = list(groups)
    ys = [stat_fn(groups[L]) for L in Ls]
    fit = _fit(Ls, ys, statistic)
    lo = hi = math.nan
    if n_boot:
        boot = _bootstrap_slopes(groups, stat_fn, np.random.default_rng(seed), n_boot)
        lo, hi = np.percentile(boot, [2.5, 97.5])
    return ExponentEstimate(float(fit.slope), float(fit.stderr), float(fit.rvalue ** 2), min(Ls),
                            max(Ls), statistic, float(fit.intercept), float(lo), float(hi),
                            len(Ls))


def estimate_xi(records, statistic: str = "median_max_height", min_L: int = 3,
                min_samples: int = 30, n_boot: int = N_BOOT, seed: int = 0) -> ExponentEstimate:
    """Slope of log(median max height) against log L."""
    groups = _check(group_by_L(records, "max_height"), min_L, min_samples)
    if statistic == "median_max_height":
        fn = np.median
    elif statistic == "mean_max_height":
        fn = np.mean
    else:
        raise ValueError(f"unknown statistic {statistic!r}")
    return _estimate(groups, fn, statistic, n_boot, seed)


def estimate_chi(records, min_L: int = 3, min_samples: int = 30, n_boot: int = N_BOOT,
                 seed: int = 0) -> ExponentEstimate:
    """Slope of log std(GE) against log L; unbiased variance, bootstrap interval."""
    groups = _check(group_by_L(records, "GE"), min_L, min_samples)
    return _estimate(groups, lambda v: np.std(v, ddof=1), "std_GE", n_boot, seed)


@dataclass(frozen=True)
class ScalingReport:
    residual_energy: float  # χ − (2ξ + d − 2)
    stderr_energy: float
    residual_hurst: float  # χ − (Hξ + d/2)
    stderr_hurst: float

    def within(self, tol: float) -> bool:
        return abs(self.residual_energy) <= tol and abs(self.residual_hurst) <= tol


def check_scaling_relations(xi, chi, d: int, H: float) -> ScalingReport:
    """Residuals of the two scaling relations with propagated standard errors."""
    x, sx = (xi.slope, xi.stderr) if isinstance(xi, ExponentEstimate) else (float(xi), 0.0)
    c, sc = (chi.slope, chi.stderr) if isinstance(chi, ExponentEstimate) else (float(chi), 0.0)
    r1 = c - (2 * x + d - 2)
    r2 = c - (H * x + d / 2)
    return ScalingReport(r1, math.hypot(sc, 2 * sx), r2, math.hypot(sc, H * sx))


def _site_norms(r, n: int):
    h = np.asarray(_attr(r, "site_heights"), float)
    return np.linalg.norm(h.reshape(-1, n), axis=1)


def estimate_h_minus(records, n: int = 1, min_samples: int = 100) -> float:
    """Largest h with empirical E|{v: ‖φ_v‖ ≥ h}| ≥ |Λ|/2.

    The empirical expectation pools all site heights, so the answer is the
    ⌈T/2⌉-th largest of the T pooled norms.
    """
    if len(records) < min_samples:
        raise InsufficientDataError(f"h_minus needs >= {min_samples} samples, have {len(records)}")
    if any(_attr(r, "site_heights") is None for r in records):
        raise InsufficientDataError("h_minus needs per-site heights (store_heights)")
    sizes = {len(_attr(r, "site_heights")) for r in records}
    if len(sizes) != 1:
        raise InsufficientDataError("records mix different box sizes")
    pooled = np.sort(np.concatenate([_site_norms(r, n) for r in records]))[::-1]
    return float(pooled[math.ceil(pooled.size / 2) - 1])


def estimate_h_plus(records, H: float, min_samples: int = 100) -> float:
    """Smallest h with empirical P((Σ‖φ_v‖^{2H}/|Λ|)^{1/2H} ≥ h) ≤ 1/3."""
    if len(records) < min_samples:
        raise InsufficientDataError(f"h_plus needs >= {min_samples} samples, have {len(records)}")
    y = np.sort([float(_attr(r, "heights_ell2H")) ** (1 / (2 * H)) for r in records])
    S = y.size
    return float(y[S - S // 3 - 1])


@dataclass(frozen=True)
class TailFit:
    exponent: float
    ci_low: float
    ci_high: float
    prefactor: float
    rate: float
    n_points: int
    t_range: tuple
    note: str = "diagnostic, not acceptance"


def _tail_points(x, min_tail):
    x = np.sort(x)
    n = x.size
    # survival levels from 1/2 down to min_tail/n, log spaced
    levels = np.geomspace(0.5, min_tail / n, 25)
    idx = np.unique(np.clip(np.floor(n * (1 - levels)).astype(int), 0, n - 1))
    t = x[idx]
    surv = np.array([np.mean(x >= ti) for ti in t])
    keep = (t > 0) & (surv > 0)
    t, surv = t[keep], surv[keep]
    t, first = np.unique(t, return_index=True)
    return t, surv[first]


def _fit_stretched(t, surv):
    # density ∝ exp(−b t^k) gives log S = a − b t^k − (k − 1) log t
    def model(t, a, logb, k):
        return a - np.exp(logb) * t ** k - (k - 1) * np.log(t)

    y = np.log(surv)
    p0 = (0.0, 0.0, 1.0)
    popt, _ = optimize.curve_fit(model, t, y, p0=p0, bounds=([-20, -30, 0.05], [20, 30, 10]),
                                 maxfev=20000)
    return popt


def tail_fit(samples, scale: float = 1.0, min_samples: int = 1000, min_tail: int = 10,
             n_boot: int = 200, seed: int = 0) -> TailFit:
    """Stretch exponent k of a tail P(X ≥ t) ≈ A·exp(−b t^k), with bootstrap CI.

    Diagnostic only: fits log S(t) = a − b t^k − (k − 1) log t (the tail of a
    density proportional to exp(−b t^k)) by nonlinear least squares over
    survival levels between 1/2 and min_tail/n.
    """
    x = np.abs(np.asarray(samples, float)) / scale
    if x.size < min_samples:
        raise InsufficientDataError(f"tail fit needs >= {min_samples} samples, have {x.size}")
    if np.ptp(x) == 0:
        raise FitError("degenerate tail: all samples are equal")
    t, surv = _tail_points(x, min_tail)
    if t.size < 5:
        raise FitError("insufficient tail mass for a fit")
    a, logb, k = _fit_stretched(t, surv)
    rng = np.random.default_rng(seed)
    ks = []
    for _ in range(n_boot):
        xb = x[rng.integers(0, x.size, x.size)]
        tb, sb = _tail_points(xb, min_tail)
        if tb.size < 5:
            continue
        try:
            ks.append(_fit_stretched(tb, sb)[2])
        except RuntimeError:
            continue
    if len(ks) < max(10, n_boot // 2):
        raise FitError("bootstrap tail fits failed")
    lo, hi = np.percentile(ks, [2.5, 97.5])
    return TailFit(float(k), float(lo), float(hi), float(math.exp(a)), float(math.exp(logb)),
                   int(t.size), (float(t[0]), float(t[-1])))


@dataclass(frozen=True)
class ConcentrationReport:
    L: int
    ts: tuple
    probabilities: tuple
    scale: float
    monotone: bool
    finite: bool
    tail: TailFit | None
    target_exponent: float

    @property
    def ok(self) -> bool:
        return self.monotone and self.finite


def concentration_check(records, d: int, H: float, ts=(0.5, 1.0, 2.0, 4.0),
                        min_samples: int = 1000, fit_tail: bool = True) -> ConcentrationReport:
    """Empirical P(|GE − mean| ≥ t·L^χ) over t, plus a stretch-exponent diagnostic."""
    Ls = {int(_attr(r, "L")) for r in records}
    if len(Ls) != 1:
        raise InsufficientDataError("concentration_check needs records at a single L")
    if len(records) < min_samples:
        raise InsufficientDataError(f"need >= {min_samples} samples, have {len(records)}")
    L = Ls.pop()
    ge = np.array([float(_attr(r, "GE")) for r in records])
    dev = np.abs(ge - ge.mean())
    scale = L ** chi_pred(d, H)
    probs = tuple(float(np.mean(dev >= t * scale)) for t in ts)
    mono = all(b <= a for a, b in zip(probs, probs[1:]))
    fin = bool(np.all(np.isfinite(ge)))
    tail = None
    if fit_tail:
        try:
            tail = tail_fit(dev, scale)
        except (FitError, InsufficientDataError):
            tail = None
    return ConcentrationReport(L, tuple(ts), probs, scale, mono, fin, tail, 2 - H)


SUMMARY_COLUMNS = ("L", "n_samples", "median_max_height", "std_GE", "mean_GE", "h_minus", "h_plus")


def summarize(records, H: float, n: int = 1, min_hpm: int = 100):
    """One row per L with the summary columns; h± are NaN when not estimable."""
    by = {}
    for r in records:
        by.setdefault(int(_attr(r, "L")), []).append(r)
    rows = []
    for L in sorted(by):
        rs = by[L]
        mh = np.array([float(_attr(r, "max_height")) for r in rs])
        ge = np.array([float(_attr(r, "GE")) for r in rs])
        try:
            hm = estimate_h_minus(rs, n, min_hpm)
        except InsufficientDataError:
            hm = math.nan
        try:
            hp = estimate_h_plus(rs, H, min_hpm)
        except InsufficientDataError:
            hp = math.nan
        rows.append({"L": L, "n_samples": len(rs), "median_max_height": float(np.median(mh)),
                     "std_GE": float(np.std(ge, ddof=1)) if len(rs) > 1 else math.nan,
                     "mean_GE": float(np.mean(ge)), "h_minus": hm, "h_plus": hp})
    return rows


def write_summary_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=SUMMARY_COLUMNS)
        w.writeheader()
        for row in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})


def read_summary_csv(path):
    with open(path, newline="") as fh:
        rows = []
        for row in csv.DictReader(fh):
            rows.append({k: (int(v) if k in ("L", "n_samples") else float(v)) for k, v in row.items()})
    return rows


def estimate_from_summary(rows, column: str, min_L: int = 3) -> ExponentEstimate:
    """Regression on a summary table (no bootstrap: the samples are gone)."""
    rows = [r for r in rows if np.isfinite(r[column]) and r[column] > 0]
    if len(rows) < min_L:
        raise InsufficientDataError(f"need >= {min_L} rows with a positive {column}")
    Ls = [r["L"] for r in rows]
    fit = _fit(Ls, [r[column] for r in rows], column)
    return ExponentEstimate(float(fit.slope), float(fit.stderr), float(fit.rvalue ** 2), min(Ls),
                            max(Ls), column, float(fit.intercept), n_L=len(Ls))
