"""Finite-volume Hamiltonian and the deterministic identities built on it."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .disorder import DisorderField, HeightGrid, shift_recenter
from .errors import (AlignmentError, BoundaryMismatchError, DomainMismatchError,
                     OffGridError)
from .lattice import (Domain, LatticeField, dirichlet_energy, harmonic_extension,
                      inner, laplacian)


@dataclass(frozen=True)
class EnergyBreakdown:
    elastic: float
    disorder: float
    total: float

    @classmethod
    def of(cls, elastic: float, disorder: float) -> "EnergyBreakdown":
        return cls(elastic, disorder, elastic + disorder)


def _check_domains(phi: LatticeField, field: DisorderField, domain: Domain | None) -> Domain:
    dom = field.domain if domain is None else domain
    if dom != field.domain:
        raise DomainMismatchError("disorder field is tabulated on a different domain")
    if not phi.domain.same_frame(dom):
        raise DomainMismatchError("configuration lives on a different frame")
    if phi.n != field.n:
        raise DomainMismatchError(f"configuration has n={phi.n}, disorder has n={field.n}")
    return dom


def hamiltonian(phi: LatticeField, field: DisorderField, domain: Domain | None = None,
                tau: LatticeField | None = None) -> EnergyBreakdown:
    """H(φ) = ½ Σ_{edges touching Λ} ‖φ_u − φ_v‖² + Σ_{v∈Λ} η_{v,φ_v}."""
    dom = _check_domains(phi, field, domain)
    if tau is not None:
        b = dom.boundary
        if not np.array_equal(phi.values[b], tau.values[b]):
            raise BoundaryMismatchError("φ differs from the boundary values τ on ∂Λ")
    elastic = 0.5 * dirichlet_energy(phi, dom)
    try:
        lookups = field.lookup(phi.interior())
    except AlignmentError as exc:
        raise OffGridError(str(exc)) from None
    return EnergyBreakdown.of(elastic, float(np.sum(lookups)))


def main_identity_terms(phi: LatticeField, s: LatticeField, field: DisorderField,
                        domain: Domain | None = None):
    """Both sides of H^{η^s}(φ+s) − H^η(φ) = (φ, −Δs) + ½‖∇s‖² − Σ_{v∈Λ} η_{v,−s_v}.

    The left side is evaluated through the shifted table η^s, the right side
    through the original table, so the two routes share no arithmetic beyond
    table lookups.
    """
    dom = _check_domains(phi, field, domain)
    if np.any(np.linalg.norm(s.values, axis=-1)[~dom.mask] != 0):
        raise DomainMismatchError("s must be supported in Λ")
    eta_s = shift_recenter(field, s, out_of_range="inf")
    h0 = hamiltonian(phi, field, dom)
    h1 = hamiltonian(phi + s, eta_s, dom)
    if not np.isfinite(h1.total):
        raise OffGridError("φ + s − s leaves the tabulated window")
    lhs = h1.total - h0.total
    grid = field.grid
    minus_s = field.values[np.arange(dom.size), grid.flat(grid.to_index(-s.interior()))]
    rhs = inner(phi, -laplacian(s, dom)) + 0.5 * dirichlet_energy(s, dom) - float(np.sum(minus_s))
    return lhs, rhs, h0.total


def main_identity_residual(phi: LatticeField, s: LatticeField, field: DisorderField,
                           domain: Domain | None = None, relative: bool = False) -> float:
    lhs, rhs, h0 = main_identity_terms(phi, s, field, domain)
    res = lhs - rhs
    return abs(res) / (1.0 + abs(h0)) if relative else res


@dataclass
class BoundaryReport:
    surface_residual: float
    ge_residual: float
    ge_tau: float
    ge_reduced: float
    dirichlet_term: float
    phi_tau: LatticeField
    phi_reduced: LatticeField
    tau_bar: LatticeField

    @property
    def ok(self) -> bool:
        return self.surface_residual < 1e-9 and abs(self.ge_residual) < 1e-9 * (1 + abs(self.ge_tau))


def boundary_reduction_check(tau: LatticeField, field: DisorderField, solver,
                             domain: Domain | None = None, **solver_opts) -> BoundaryReport:
    """Compare φ^{η,τ} with φ^{η^{−τ̄}} + τ̄ and the matching ground-energy identity.

    Needs τ̄ (the harmonic extension of τ) to be grid aligned on Λ. The reduced
    disorder is tabulated on a grid enlarged by max|τ̄| so that the reduced
    feasible set is exactly the original one shifted by −τ̄.
    """
    dom = field.domain if domain is None else domain
    tau_bar, de = harmonic_extension(tau, dom)
    grid = field.grid
    try:
        k = grid.to_index(tau_bar.interior(), strict=False)
    except AlignmentError:
        raise AlignmentError("harmonic extension of τ is not grid aligned") from None
    pad = int(np.abs(k).max()) if k.size else 0
    out_grid = HeightGrid(grid.n, grid.delta, grid.K + pad)
    s_vals = np.where(dom.mask[..., None], -tau_bar.values, 0.0)
    s = LatticeField(dom, s_vals)
    eta_red = shift_recenter(field, s, out_grid=out_grid, out_of_range="inf")
    res_tau = solver(field, tau=tau, **solver_opts)
    res_red = solver(eta_red, tau=None, **solver_opts)
    shifted = res_red.phi + LatticeField(dom, np.where(dom.mask[..., None], tau_bar.values, 0.0))
    diff = (res_tau.phi.values - shifted.values)[dom.mask]
    surface = float(np.abs(diff).max()) if diff.size else 0.0
    # η^{−τ̄}_{v,−τ̄_v}, read from the reduced table
    corr = eta_red.values[np.arange(dom.size), out_grid.flat(-k)]
    predicted = res_red.ground_energy + 0.5 * de - float(np.sum(corr))
    return BoundaryReport(surface, res_tau.ground_energy - predicted, res_tau.ground_energy,
                          res_red.ground_energy, 0.5 * de, res_tau.phi, res_red.phi, tau_bar)


@dataclass
class DelocObservables:
    delta1: float
    delta2: float
    delta3: float
    grad_s_sq: float

    @property
    def total(self) -> float:
        return self.delta1 + self.delta2 + self.delta3

    @property
    def premise(self) -> bool:
        return self.total > self.grad_s_sq


def deloc_observables(phi_eta: LatticeField, phi_zeta_s: LatticeField, phi_zeta_ms: LatticeField,
                      ge_pi_eta: float, ge_pi_zeta: float, delta2: float, s: LatticeField,
                      domain: Domain | None = None) -> DelocObservables:
    """Δ₁ = GE_Π^η − GE_Π^ζ, Δ₂ given, Δ₃ = ½(φ^{ζ^s} − φ^{ζ^{−s}}, −Δs)."""
    dom = s.domain if domain is None else domain
    lap = laplacian(s, dom)
    d3 = 0.5 * inner(phi_zeta_s - phi_zeta_ms, -lap)
    return DelocObservables(ge_pi_eta - ge_pi_zeta, delta2, d3, dirichlet_energy(s, dom))
