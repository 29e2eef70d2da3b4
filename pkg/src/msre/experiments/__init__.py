"""Monte-Carlo experiments: height sweeps, exponent estimates and the coupling demo."""
from .config import ExperimentConfig, chi_pred, xi_pred
from .coupling import CouplingConfig, delocalization_coupling_demo
from .estimators import (check_scaling_relations, estimate_chi, estimate_h_minus,
                         estimate_h_plus, estimate_xi, tail_fit)
from .sweep import run_height_sweep

__all__ = ["CouplingConfig", "ExperimentConfig", "check_scaling_relations", "chi_pred",
           "delocalization_coupling_demo", "estimate_chi", "estimate_h_minus", "estimate_h_plus",
           "estimate_xi", "run_height_sweep", "tail_fit", "xi_pred"]
