"""Resampling coupling of η̂ and its effect on surface heights.

For each of N independent disorders η we build coupled disorders

    ζ = η + κ (ζ̂ − η̂),

where η̂ = Σ_{v ∈ Λ'} (η_{v,αh e₁} + η_{v,−αh e₁}) over a centred sub-box Λ' and
ζ̂ is drawn from the law of η̂ restricted to a tail event. Because η − κ η̂ is
independent of η̂, ζ has exactly the law of η conditioned on that event.

Arms:
    conditional  ζ̂ ≤ q̂_p (lower tail, q̂ the empirical quantile of η̂)
    control      ζ̂ ≥ q̂_{1−p} (upper tail)
    marginal     ζ̂ unconditioned; GE^ζ must match GE of fresh disorders in law

For the conditional arm the deterministic delocalization observables
Δ₁, Δ₂, Δ₃ are evaluated with Π = {max_v |φ_v| ≤ R}, and the implication
"Δ₁+Δ₂+Δ₃ > ‖∇s‖² ⇒ one of φ^η, φ^{ζ^s}, φ^{ζ^{−s}} leaves Π" is checked.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

from .. import rng as rngmod
from ..disorder import (HeightGrid, HurstParams, alpha_beta, decompose_and_resample,
                        eta_hat, sample_disorder, var_eta_hat)
from ..energy import deloc_observables
from ..errors import ConfigError, PaddingError
from ..lattice import Domain, LatticeField, dirichlet_energy, laplacian, pi_bump
from ..solvers import solve
from .config import xi_pred

PREMISE_TOL = 1e-8


@dataclass
class CouplingConfig:
    d: int = 1
    H: float = 0.5
    L: int = 64
    h: float | None = None  # default L^{ξ/2}
    N: int = 500
    seed: int = 0
    quantile: float = 0.05
    delta: float = 1.0
    K: int | None = None
    alpha: float | None = None
    beta: float | None = None
    sub_half: int | None = None  # half-width ℓ of the sub-box, default L // 2
    eps: float = 0.1
    R: float | None = None  # Π radius, default βh
    significance: float = 0.01
    solver: str = "auto"
    observables: bool = True

    def resolved(self) -> "CouplingConfig":
        c = CouplingConfig(**asdict(self))
        if c.d < 1 or c.L < 2 or c.N < 2:
            raise ConfigError("need d >= 1, L >= 2 and N >= 2")
        if not 0 < c.quantile < 0.5:
            raise ConfigError("quantile must lie in (0, 1/2)")
        if c.h is None:
            c.h = float(c.L ** (xi_pred(c.d, c.H) / 2)) if c.d < 4 else 1.0
        if c.alpha is None or c.beta is None:
            a, b = alpha_beta(c.H, 1)
            c.alpha = a if c.alpha is None else c.alpha
            c.beta = b if c.beta is None else c.beta
        if c.sub_half is None:
            c.sub_half = max(1, c.L // 2)
        if c.R is None:
            c.R = c.beta * c.h
        need = 2 * c.beta * c.h + c.R
        if c.K is None:
            c.K = int(math.ceil(max(need, 4 * c.L ** xi_pred(c.d, c.H), c.alpha * c.h) / c.delta))
        if c.h <= 0 or c.h > c.K * c.delta:
            raise ConfigError(f"h = {c.h} lies outside the height grid (extent {c.K * c.delta})")
        ah = c.alpha * c.h
        if abs(ah / c.delta - round(ah / c.delta)) > 1e-9:
            raise PaddingError(f"αh = {ah} is not on the height grid of step {c.delta}")
        if c.K * c.delta < need - 1e-12:
            raise PaddingError(f"grid extent {c.K * c.delta} cannot hold shifts of size "
                               f"2βh plus Π radius ({need})")
        return c


@dataclass
class CouplingReport:
    config: dict
    alpha_h: float
    var_hat: float
    q_low: float
    q_high: float
    frac_base: np.ndarray = field(repr=False)
    frac_cond: np.ndarray = field(repr=False)
    frac_ctrl: np.ndarray = field(repr=False)
    hat_eta: np.ndarray = field(repr=False)
    ge_base: np.ndarray = field(repr=False)
    ge_marg: np.ndarray = field(repr=False)
    ge_fresh: np.ndarray = field(repr=False)
    p_cond: float = math.nan
    p_ctrl: float = math.nan
    p_cond_paired: float = math.nan
    p_marginal_ks: float = math.nan
    premise_rate: float = math.nan
    implication_violations: int = 0
    pinned: int = 0
    selected_mean: float = math.nan  # η̂-selected samples among the base draws
    selected_count: int = 0

    @property
    def conditional_significant(self) -> bool:
        return self.p_cond < self.config["significance"]

    @property
    def control_significant(self) -> bool:
        return self.p_ctrl < self.config["significance"]

    @property
    def marginal_ok(self) -> bool:
        return self.p_marginal_ks >= self.config["significance"]

    def summary(self) -> dict:
        return {
            "alpha_h": self.alpha_h,
            "q_low": self.q_low,
            "q_high": self.q_high,
            "mean_frac_base": float(self.frac_base.mean()),
            "mean_frac_conditional": float(self.frac_cond.mean()),
            "mean_frac_control": float(self.frac_ctrl.mean()),
            "p_conditional": self.p_cond,
            "p_conditional_paired": self.p_cond_paired,
            "p_control": self.p_ctrl,
            "p_marginal_ks": self.p_marginal_ks,
            "ge_pair_spread": float(np.std(self.ge_marg - self.ge_base, ddof=1)),
            "ge_pair_mean_abs": float(np.mean(np.abs(self.ge_marg - self.ge_base))),
            "premise_rate": self.premise_rate,
            "implication_violations": self.implication_violations,
            "pinned": self.pinned,
            "selected_mean_frac": self.selected_mean,
            "selected_count": self.selected_count,
        }


def _frac_above(phi: LatticeField, sub_rows, h) -> float:
    norms = np.linalg.norm(phi.interior()[sub_rows], axis=-1)
    return float(np.mean(norms > h))


def _truncated_normal(sd, lower, upper, g):
    a = -np.inf if lower is None else lower / sd
    b = np.inf if upper is None else upper / sd
    return float(stats.truncnorm.rvs(a, b, scale=sd, random_state=g))


def shift_field(c: CouplingConfig, dom: Domain) -> LatticeField:
    """s = round(2βh π / δ) δ e₁ with π the plateau bump on the sub-box."""
    pi, _ = pi_bump(c.sub_half, c.eps, d=c.d, profile="plateau")
    vals = np.zeros(dom.frame_shape + (1,))
    ell = c.sub_half
    # copy π on Λ_ℓ (it vanishes elsewhere) into the frame of Λ_L
    src = tuple(slice(2, 2 * ell + 3) for _ in range(c.d))
    dst = tuple(slice(c.L + 1 - ell, c.L + ell + 2) for _ in range(c.d))
    steps = np.rint(2 * c.beta * c.h * pi.scalar[src] / c.delta)
    vals[dst + (0,)] = steps * c.delta
    return LatticeField(dom, vals)


def _solve_box(field, c, lo_k, hi_k):
    """Minimise over φ_v ∈ [lo_k(v), hi_k(v)]·δ by masking the unary costs."""
    from ..solvers.problem import build_problem, finish
    from ..solvers.chain_dp import minimise_chain
    prob = build_problem(field)
    k = prob.labels_k[:, 0]
    bad = (k[None, :] < lo_k[:, None]) | (k[None, :] > hi_k[:, None])
    prob.unary = np.where(bad, np.inf, prob.unary)
    if field.domain.d == 1:
        labels, st = minimise_chain(prob)
        return finish(prob, labels, "chain_dp", True, st)
    from ..solvers.graphcut import minimise_graphcut
    cropped, labels, st = minimise_graphcut(prob)
    kk = cropped.labels_k[labels]
    labels = np.searchsorted(prob.labels_k[:, 0], kk[:, 0])
    return finish(prob, labels, "graphcut", True, st)


def delocalization_coupling_demo(config: CouplingConfig, progress=None) -> CouplingReport:
    c = config.resolved()
    dom = Domain.box(c.L, c.d)
    sub = dom.window(np.zeros(c.d, int), c.sub_half + 1)
    grid = HeightGrid(1, c.delta, c.K)
    params = HurstParams(c.H, 1)
    ah = c.alpha * c.h
    num = {tuple(v): i for i, v in enumerate(dom.vertices())}
    sub_rows = np.array([num[tuple(v)] for v in sub.vertices()])
    var = var_eta_hat(sub.size, ah, c.H)
    sd = math.sqrt(var)

    def seed_of(i, arm=0):
        return rngmod.child_seed(c.seed, rngmod.COUPLING, arm, i)

    def run(field, **kw):
        return solve(field, c.solver, **kw)

    # pass 1: base disorders and the empirical law of η̂
    base_fields, frac_base, ge_base, hats = [], [], [], []
    pinned = 0
    for i in range(c.N):
        f = sample_disorder(dom, grid, params, seed_of(i))
        r = run(f)
        pinned += r.pinned()
        base_fields.append(f)
        frac_base.append(_frac_above(r.phi, sub_rows, c.h))
        ge_base.append(r.ground_energy)
        hats.append(eta_hat(f, sub, ah))
        if progress:
            progress("base", i + 1, c.N)
    hats = np.asarray(hats)
    frac_base = np.asarray(frac_base)
    q_low, q_high = np.quantile(hats, [c.quantile, 1 - c.quantile])

    s = shift_field(c, dom)
    lap_s = laplacian(s, dom).interior()[:, 0]
    grad2 = dirichlet_energy(s, dom)
    s_k = np.rint(s.interior()[:, 0] / c.delta).astype(np.int64)
    Rk = int(math.floor(c.R / c.delta + 1e-9))

    frac_cond, frac_ctrl, ge_marg = [], [], []
    fires = violations = 0
    for i, f in enumerate(base_fields):
        g = rngmod.stream(c.seed, rngmod.COUPLING, 1, i)
        z_low = _truncated_normal(sd, None, q_low, g)
        z_high = _truncated_normal(sd, q_high, None, g)
        z_free = sd * float(g.standard_normal())
        cond, _, _ = decompose_and_resample(f, sub, ah, new_hat=z_low)
        ctrl, _, _ = decompose_and_resample(f, sub, ah, new_hat=z_high)
        marg, _, _ = decompose_and_resample(f, sub, ah, new_hat=z_free)
        r_cond = run(cond)
        pinned += r_cond.pinned()
        frac_cond.append(_frac_above(r_cond.phi, sub_rows, c.h))
        r_ctrl = run(ctrl)
        frac_ctrl.append(_frac_above(r_ctrl.phi, sub_rows, c.h))
        ge_marg.append(run(marg).ground_energy)
        if c.observables:
            # roles: the conditioned disorder plays η, the original plays ζ
            fired, ok = _premise(c, cond, f, r_cond, s, s_k, lap_s, grad2, Rk)
            fires += fired
            violations += (not ok)
        if progress:
            progress("coupled", i + 1, c.N)

    ge_fresh = []
    for i in range(c.N):
        f = sample_disorder(dom, grid, params, seed_of(i, arm=2))
        ge_fresh.append(run(f).ground_energy)
        if progress:
            progress("fresh", i + 1, c.N)

    frac_cond = np.asarray(frac_cond)
    frac_ctrl = np.asarray(frac_ctrl)
    ge_base = np.asarray(ge_base)
    ge_marg = np.asarray(ge_marg)
    ge_fresh = np.asarray(ge_fresh)
    p_cond = _welch_greater(frac_cond, frac_base)
    p_ctrl = _welch_greater(frac_ctrl, frac_base)
    diff = frac_cond - frac_base
    if np.ptp(diff) == 0:
        p_pair = 0.0 if diff[0] > 0 else 1.0
    else:
        p_pair = float(stats.ttest_1samp(diff, 0.0, alternative="greater").pvalue)
    sel = hats <= q_low
    return CouplingReport(
        config=asdict(c), alpha_h=ah, var_hat=var, q_low=float(q_low), q_high=float(q_high),
        frac_base=frac_base, frac_cond=frac_cond, frac_ctrl=frac_ctrl, hat_eta=hats,
        ge_base=ge_base, ge_marg=ge_marg, ge_fresh=ge_fresh, p_cond=p_cond, p_ctrl=p_ctrl,
        p_cond_paired=p_pair, p_marginal_ks=float(stats.ks_2samp(ge_marg, ge_fresh).pvalue),
        premise_rate=fires / c.N if c.observables else math.nan,
        implication_violations=violations, pinned=int(pinned),
        selected_mean=float(frac_base[sel].mean()), selected_count=int(sel.sum()))


def _welch_greater(a, b) -> float:
    if np.ptp(a) == 0 and np.ptp(b) == 0:
        return 0.0 if a[0] > b[0] else 1.0
    return float(stats.ttest_ind(a, b, equal_var=False, alternative="greater").pvalue)


def _premise(c, eta_role, zeta_role, r_eta, s, s_k, lap_s, grad2, Rk):
    """Evaluate Δ₁ + Δ₂ + Δ₃ > ‖∇s‖² and the implied exit from Π.

    Returns (premise fired, implication holds).
    """
    dom = eta_role.domain
    N = dom.size
    lo = np.full(N, -Rk)
    hi = np.full(N, Rk)
    ge_pi_eta = _solve_box(eta_role, c, lo, hi).ground_energy
    ge_pi_zeta = _solve_box(zeta_role, c, lo, hi).ground_energy
    # Δ₂: separable minimum of (ζ − η) over the boxes around ±s
    diff = zeta_role.values - eta_role.values
    k = eta_role.grid.indices()[:, 0]
    d2 = []
    for sign in (1, -1):
        centre = sign * s_k
        inside = np.abs(k[None, :] - centre[:, None]) <= Rk
        d2.append(float(np.sum(np.where(inside, diff, np.inf).min(axis=1))))
    delta2 = min(d2)
    # φ^{ζ^{±s}} = ±s + argmin_ψ H^ζ(ψ) ± (ψ, −Δs)
    tilt = -lap_s[:, None]
    r_p = solve(zeta_role, c.solver, tilt=tilt)
    r_m = solve(zeta_role, c.solver, tilt=-tilt)
    phi_p = r_p.phi + s
    phi_m = r_m.phi - s
    obs = deloc_observables(r_eta.phi, phi_p, phi_m, ge_pi_eta, ge_pi_zeta, delta2, s, dom)
    fired = obs.total > grad2 * (1 + PREMISE_TOL) + PREMISE_TOL
    if not fired:
        return False, True

    def outside(phi):
        return bool(np.any(np.abs(phi.interior()[:, 0]) > Rk * c.delta + 1e-9))

    return True, outside(r_eta.phi) or outside(phi_p) or outside(phi_m)
