"""Verdicts: one classification per analysis outcome."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional

from .hs import estimate_rho_hs, sample_strong_stability
from .measure import MatrixNBV, check_wellposed, total_variation
from .spectrum import (IndeterminateCount, SpectrumResult, certified_growth_bound,
                       spectral_abscissa)
from .measure import reduce_zero_atom

CERTIFIED = "certified-strongly-stable"
LIKELY = "likely-strongly-stable"
FRAGILE = "fragile"
UNSTABLE = "unstable"
INDETERMINATE = "indeterminate"

EXIT_CODES = {CERTIFIED: 0, FRAGILE: 1, UNSTABLE: 1, LIKELY: 2, INDETERMINATE: 2}
EXIT_INPUT_ERROR = 3


@dataclass
class Verdict:
    var_tv: float
    rho_hs_lower: float
    rho_hs_upper: float
    abscissa_bracket: tuple
    window_tag: str
    certified_bound: float
    classification: str
    sampled_max_abscissa: Optional[float] = None
    notes: list = field(default_factory=list)

    @property
    def exit_code(self) -> int:
        return EXIT_CODES[self.classification]

    def to_dict(self) -> dict:
        out = asdict(self)
        out["abscissa_bracket"] = list(self.abscissa_bracket)
        return out


def classify(rho_upper: float, rho_lower: float, bracket, sampled_max: Optional[float]) -> str:
    """Decision table; total over all inputs, first matching row wins."""
    lo, hi = bracket
    if rho_upper < 1:
        return CERTIFIED
    if lo > 0:
        return UNSTABLE
    if hi < 0 and rho_lower >= 1:
        return FRAGILE
    if hi < 0 and sampled_max is not None and sampled_max < 0:
        return LIKELY
    return INDETERMINATE


@dataclass
class Analysis:
    verdict: Verdict
    spectrum: Optional[SpectrumResult]
    witness_phases: list
    bins: int


def analyze(M: MatrixNBV, norm: str = "op2", seed: int = 0, restarts: int = 16,
            eps: float = 0.1, trials: int = 20) -> Analysis:
    """Run the full pipeline; raises ``ValueError`` for ill-posed systems."""
    wp = check_wellposed(M)
    if not wp.ok:
        raise ValueError(f"system is not well-posed: det(I - A_M) = {wp.det:.3e}")
    var = total_variation(M, norm)
    bound = certified_growth_bound(reduce_zero_atom(M), norm)
    est = estimate_rho_hs(M, restarts=restarts, seed=seed, norm=norm)
    notes = []
    spec = None
    try:
        spec = spectral_abscissa(M, norm=norm)
        bracket, tag = spec.abscissa_bracket, spec.tag
    except IndeterminateCount as exc:
        bracket, tag = (-math.inf, math.inf), "indeterminate"
        notes.append(str(exc))
    sampled = None
    if est.upper >= 1 > est.lower and bracket[1] < 0 and trials > 0:
        rep = sample_strong_stability(M, eps, trials, seed, norm=norm, estimate=est)
        sampled = rep.max_abscissa
    cls = classify(est.upper, est.lower, bracket, sampled)
    if not est.converged:
        notes.append("torus optimizer restarts disagree; rho lower bound may be loose")
    v = Verdict(var, est.lower, est.upper, tuple(bracket), tag, bound, cls, sampled, notes)
    return Analysis(v, spec, est.witness.phases.tolist(), est.bin_count)
