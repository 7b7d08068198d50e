"""Stability of linear functional equations with distributed delays."""

from .charfun import eval_delta, eval_L
from .hs import build_destabilizer, estimate_rho_hs, sample_strong_stability
from .measure import MatrixNBV, PiecewiseLinear, Binning, Bin, pushforward, total_variation
from .simulate import fit_decay_rate, integrate, project_initial
from .spectrum import certified_growth_bound, commensurate_oracle, find_roots, spectral_abscissa

__all__ = [
    "Bin", "Binning", "MatrixNBV", "PiecewiseLinear", "build_destabilizer",
    "certified_growth_bound", "commensurate_oracle", "estimate_rho_hs", "eval_L",
    "eval_delta", "find_roots", "fit_decay_rate", "integrate", "project_initial",
    "pushforward", "sample_strong_stability", "spectral_abscissa", "total_variation",
]
