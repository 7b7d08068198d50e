"""Bounds on the generalized Hale-Silkowski radius

    rho_HS(M) = sup_xi rho( int e^{i xi(theta)} dM(theta) )

via simple phase functions, plus the delay-perturbation machinery built on it:
destabilizing binnings and randomized strong-stability sampling.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .measure import (Bin, Binning, MatrixNBV, PiecewiseLinear, Perturbation,
                      check_wellposed, pushforward, total_variation)

TWO_PI = 2 * math.pi
GOLDEN = (math.sqrt(5) - 1) / 2
TIE_GAP = 1e-8
_PRIMES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71,
           73, 79, 83, 89, 97, 101, 103, 107, 109, 113, 127, 131, 137, 139, 149, 151,
           157, 163, 167, 173, 179, 181, 191, 193, 197, 199, 211, 223, 227, 229, 233)


class HypothesisError(ValueError):
    """``rho_HS(M) >= 1`` is required but the lower bound is below 1."""


@dataclass(frozen=True)
class BinDescriptor:
    kind: str  # "atom" or "interval"
    lo: float
    hi: float

    @property
    def diameter(self) -> float:
        return self.hi - self.lo


@dataclass(frozen=True, eq=False)
class PhaseAssignment:
    """A simple phase function: phase ``phases[k]`` on bin ``bins[k]``."""

    bins: Tuple[BinDescriptor, ...]
    phases: np.ndarray
    bin_matrices: np.ndarray

    def with_phases(self, phases) -> "PhaseAssignment":
        return PhaseAssignment(self.bins, np.mod(np.asarray(phases, float), TWO_PI),
                               self.bin_matrices)


@dataclass(frozen=True)
class HsEstimate:
    lower: float
    upper: float
    witness: PhaseAssignment
    bin_count: int
    converged: bool


# -- spectral radius helpers ----------------------------------------------------------

def spectral_radius(T: np.ndarray) -> np.ndarray:
    """Spectral radius of one matrix or of a stack ``(..., d, d)``."""
    T = np.asarray(T)
    d = T.shape[-1]
    if d == 1:
        return np.abs(T[..., 0, 0])
    if d == 2:
        half_tr = 0.5 * (T[..., 0, 0] + T[..., 1, 1])
        det = T[..., 0, 0] * T[..., 1, 1] - T[..., 0, 1] * T[..., 1, 0]
        disc = np.sqrt(half_tr * half_tr - det + 0j)
        return np.maximum(np.abs(half_tr + disc), np.abs(half_tr - disc))
    return np.abs(np.linalg.eigvals(T)).max(axis=-1)


def _combine(mats: np.ndarray, phases: np.ndarray) -> np.ndarray:
    return np.einsum("k,kab->ab", np.exp(1j * phases), mats)


def rho_of_phases(M: Optional[MatrixNBV], pa: PhaseAssignment) -> float:
    """``rho(sum_k B_k e^{i theta_k})``."""
    if M is not None and pa.bin_matrices.shape[1:] != (M.dimension, M.dimension):
        raise ValueError("phase assignment does not match the system dimension")
    return float(spectral_radius(_combine(pa.bin_matrices, pa.phases)))


# -- bins -------------------------------------------------------------------------------

def _allocate(extra: int, lengths: np.ndarray) -> np.ndarray:
    m = len(lengths)
    if extra <= m:
        return np.ones(m, dtype=int)
    raw = extra * lengths / lengths.sum()
    n = np.maximum(1, np.floor(raw).astype(int))
    while n.sum() < extra:
        n[np.argmax(raw - n)] += 1
    while n.sum() > extra:
        k = np.argmax(np.where(n > 1, n - raw, -np.inf))
        n[k] -= 1
    return n


def _pieces(M: MatrixNBV):
    if M.has_density:
        return M.breakpoints, M.pieces
    d = M.dimension
    return np.array([-1.0, 0.0]), np.zeros((1, d, d))


def make_bins(M: MatrixNBV, bin_count: Optional[int] = None,
              max_width: Optional[float] = None, per_piece=None) -> PhaseAssignment:
    """One bin per atom plus a uniform split of every density piece.

    ``max_width`` forces every interval bin to be strictly shorter than it.
    """
    bps, pcs = _pieces(M)
    lengths = np.diff(bps)
    if bin_count is None:
        bin_count = M.n_atoms + 8
    if bin_count < M.n_atoms:
        raise ValueError("bin_count must be at least the number of atoms")
    if per_piece is None:
        per_piece = _allocate(bin_count - M.n_atoms, lengths)
    per_piece = np.asarray(per_piece, dtype=int)
    if max_width is not None:
        per_piece = np.maximum(per_piece, np.floor(lengths / max_width).astype(int) + 1)

    bins, mats = [], []
    for tau, A in zip(M.taus, M.mats):
        bins.append(BinDescriptor("atom", -tau, -tau))
        mats.append(A)
    for j in range(len(pcs)):
        edges = np.linspace(bps[j], bps[j + 1], per_piece[j] + 1)
        edges[-1] = bps[j + 1]
        for lo, hi in zip(edges[:-1], edges[1:]):
            bins.append(BinDescriptor("interval", float(lo), float(hi)))
            mats.append(pcs[j] * (hi - lo))
    mats = np.array(mats).reshape(len(bins), M.dimension, M.dimension)
    return PhaseAssignment(tuple(bins), np.zeros(len(bins)), mats)


def _per_piece_counts(pa: PhaseAssignment, M: MatrixNBV) -> np.ndarray:
    bps, _ = _pieces(M)
    lo = np.array([b.lo for b in pa.bins if b.kind == "interval"])
    idx = np.searchsorted(bps, lo, side="right") - 1
    return np.bincount(idx, minlength=len(bps) - 1)


# -- torus optimization --------------------------------------------------------------------

def _golden_max(f, a: float, b: float, tol: float = 1e-10):
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
    return (c, fc) if fc >= fd else (d, fd)


def _coordinate_sweep(B: np.ndarray, theta: np.ndarray, value: float, n_grid: int = 32):
    grid = np.linspace(0.0, TWO_PI, n_grid, endpoint=False)
    rot = np.exp(1j * grid)
    T = _combine(B, theta)
    for k in range(1, len(B)):
        rest = T - B[k] * np.exp(1j * theta[k])
        vals = spectral_radius(rest[None] + rot[:, None, None] * B[k][None])
        g = grid[np.argmax(vals)]

        def f(phi, rest=rest, Bk=B[k]):
            return float(spectral_radius(rest + np.exp(1j * phi) * Bk))

        phi, fv = _golden_max(f, g - TWO_PI / n_grid, g + TWO_PI / n_grid)
        if fv > value:
            theta[k] = phi % TWO_PI
            value = fv
        T = rest + B[k] * np.exp(1j * theta[k])
    return theta, value


def _dominant_gradient(B: np.ndarray, theta: np.ndarray):
    """``d|lambda|/d theta_k`` for a simple dominant eigenvalue, else ``None``."""
    T = _combine(B, theta)
    w, V = np.linalg.eig(T)
    order = np.argsort(-np.abs(w))
    lam = w[order[0]]
    if len(w) > 1 and abs(w[order[0]]) - abs(w[order[1]]) < TIE_GAP:
        return None
    x = V[:, order[0]]
    wl, U = np.linalg.eig(T.conj().T)
    y = U[:, np.argmin(np.abs(wl - np.conj(lam)))]
    denom = np.vdot(y, x)
    if abs(denom) < 1e-14 or abs(lam) == 0:
        return None
    dlam = 1j * np.einsum("a,kab,b->k", y.conj(), B * np.exp(1j * theta)[:, None, None], x) / denom
    grad = (np.conj(lam) * dlam).real / abs(lam)
    grad[0] = 0.0  # the first phase is pinned
    return grad


def _gradient_refine(B: np.ndarray, theta: np.ndarray, value: float, steps: int = 50):
    def f(th):
        return float(spectral_radius(_combine(B, th)))

    for _ in range(steps):
        g = _dominant_gradient(B, theta)
        if g is None or not np.any(g):
            break
        step = 0.5 / max(np.abs(g).max(), 1e-12)
        improved = False
        while step > 1e-12:
            cand = theta + step * g
            fv = f(cand)
            if fv > value + 1e-15:
                theta, value, improved = np.mod(cand, TWO_PI), fv, True
                break
            step *= 0.5
        if not improved:
            break
    return theta, value


def maximize_on_torus(mats: np.ndarray, restarts: int = 16, seed: int = 0,
                      tol: float = 1e-10):
    """Multistart maximization of ``rho(sum B_k e^{i theta_k})``.

    Returns ``(value, phases, restart_values)``.
    """
    mats = np.asarray(mats, dtype=float)
    K = len(mats)
    phases = np.zeros(K)
    active = np.flatnonzero(np.any(mats != 0, axis=(1, 2)))
    if len(active) == 0:
        return 0.0, phases, [0.0]
    B = mats[active]
    if len(active) == 1:
        v = float(spectral_radius(B[0]))
        return v, phases, [v]
    # work at unit scale so the stopping tolerances are relative
    scale = float(np.abs(B).sum())
    B = B / scale

    best_val, best_theta, values = -1.0, None, []
    for r in range(restarts):
        rng = np.random.default_rng(seed + r)
        theta = rng.uniform(0.0, TWO_PI, len(B))
        theta[0] = 0.0
        value = float(spectral_radius(_combine(B, theta)))
        while True:
            prev = value
            theta, value = _coordinate_sweep(B, theta, value)
            theta, value = _gradient_refine(B, theta, value)
            if value - prev < tol:
                break
        values.append(value)
        if value > best_val:
            best_val, best_theta = value, theta.copy()
    phases[active] = best_theta
    return best_val * scale, phases, [v * scale for v in values]


def estimate_rho_hs(M: MatrixNBV, bin_count: Optional[int] = None, restarts: int = 16,
                    seed: int = 0, norm: str = "op2",
                    bins: Optional[PhaseAssignment] = None) -> HsEstimate:
    """Lower bound by optimizing simple phase functions; upper bound ``Var(M)``."""
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    pa = bins if bins is not None else make_bins(M, bin_count)
    upper = total_variation(M, norm)
    if M.dimension == 1:
        signs = pa.bin_matrices[:, 0, 0]
        phases = np.where(signs < 0, math.pi, 0.0)
        return HsEstimate(upper, upper, pa.with_phases(phases), len(pa.bins), True)
    value, phases, values = maximize_on_torus(pa.bin_matrices, restarts, seed)
    agree = sum(1 for v in values if value - v <= 1e-8)
    converged = agree >= min(2, len(values))
    lower = min(value, upper)
    return HsEstimate(lower, upper, pa.with_phases(phases), len(pa.bins), converged)


# -- max principle check -------------------------------------------------------------------

@dataclass(frozen=True)
class DiskTorusReport:
    torus_value: float
    disk_max: float
    max_violation: float
    violations: int
    samples: int
    tol: float

    @property
    def ok(self) -> bool:
        return self.violations == 0


def check_disk_vs_torus(M: MatrixNBV, pa_bins: Optional[PhaseAssignment] = None,
                        samples: int = 10_000, seed: int = 0, restarts: int = 16,
                        tol: float = 1e-6, chunk: int = 4096) -> DiskTorusReport:
    """Sample the closed polydisk and compare against the torus maximum.

    A violation means the torus optimizer got stuck below the true maximum;
    it is reported, never raised.
    """
    pa = pa_bins if pa_bins is not None else make_bins(M)
    B = pa.bin_matrices
    torus, _, _ = maximize_on_torus(B, restarts, seed)
    rng = np.random.default_rng(seed)
    disk_max, worst, count = 0.0, -math.inf, 0
    done = 0
    while done < samples:
        n = min(chunk, samples - done)
        radius = np.sqrt(rng.uniform(0.0, 1.0, (n, len(B))))
        angle = rng.uniform(0.0, TWO_PI, (n, len(B)))
        t = radius * np.exp(1j * angle)
        vals = spectral_radius(np.einsum("nk,kab->nab", t, B))
        disk_max = max(disk_max, float(vals.max()))
        worst = max(worst, float((vals - torus).max()))
        count += int(np.sum(vals > torus + tol))
        done += n
    return DiskTorusReport(torus, disk_max, worst, count, samples, tol)


# -- destabilizing perturbation ---------------------------------------------------------------

@dataclass
class DestabilizerDiagnostics:
    rho0: float
    delta_used: float
    delta1: float
    target: float
    achieved_rho: float
    sup_distance: float
    taus: List[float]
    matrices: List[np.ndarray]
    windows: List[Tuple[float, float]]
    bin_count: int
    min_ratio_residual: float
    frequency: float
    root: complex
    root_ok: bool

    @property
    def im_max(self) -> float:
        """Half-height of a strip that contains the certified root."""
        return abs(self.root.imag) + 10.0


def _rationally_separated(taus: np.ndarray, max_den: int = 10**6, tol: float = 1e-14):
    from fractions import Fraction

    worst = math.inf
    for i in range(len(taus)):
        for j in range(i + 1, len(taus)):
            r = taus[i] / taus[j]
            approx = Fraction(r).limit_denominator(max_den)
            worst = min(worst, abs(r - float(approx)))
    return worst > tol, worst


def _aligned_delays(windows, phases, omega):
    """Delays ``tau`` with ``-tau`` in each window and ``omega tau = -phase (mod 2 pi)``,
    nearest the window centre."""
    taus = np.empty(len(windows))
    for k, ((lo, hi), th) in enumerate(zip(windows, phases)):
        # -tau in (lo, hi)  <=>  tau in (-hi, -lo)
        t_lo, t_hi = -hi, -lo
        base = (-th) / omega
        period = TWO_PI / omega
        centre = 0.5 * (t_lo + t_hi)
        m = round((centre - base) / period)
        t = base + m * period
        if not t_lo < t < t_hi:
            for dm in (-1, 1):
                t2 = base + (m + dm) * period
                if t_lo < t2 < t_hi:
                    t = t2
                    break
            else:
                return None
        taus[k] = t
    return taus


def _unit_crossing(B: np.ndarray, phases: np.ndarray, taus: np.ndarray, x_hi: float):
    """Largest ``x <= x_hi`` with ``rho(sum B_k e^{i theta_k - x tau_k}) = 1``."""
    def rho(x):
        return float(spectral_radius(_combine(B * np.exp(-x * taus)[:, None, None], phases)))

    lo = x_hi
    while rho(lo) < 1:
        lo -= 1.0
        if lo < x_hi - 64:
            return None
    hi = lo + 1.0
    while rho(hi) >= 1:
        lo, hi = hi, hi + 1.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if rho(mid) >= 1:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-14:
            break
    return lo


def build_destabilizer(M: MatrixNBV, eps: float, delta: float, seed: int = 0,
                       restarts: int = 16, norm: str = "op2", n_frequencies: int = 12):
    """A binning ``phi`` with ``||phi - id|| < eps`` whose pushforward has a root
    with real part at least ``ln rho_HS - delta`` (up to the lower bound used).

    Every bin ``E_k`` of a fine simple phase function is sent to one delay
    ``-tau_k`` from the window around ``E_k``.  The delays are chosen so that
    at one frequency ``omega`` the factors ``e^{-i omega tau_k}`` reproduce the
    witness phases; along ``Re s`` at that frequency the characteristic matrix
    is then the witness sum with real weights, so a root can be located and
    Newton-polished.  Offsets of ``sqrt(prime)`` type, far below the phase
    tolerance, keep the delays free of small-integer relations.
    """
    from .spectrum import polish_root

    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    if delta <= 0:
        raise ValueError("delta must be positive")
    est = estimate_rho_hs(M, restarts=restarts, seed=seed, norm=norm)
    rho0 = est.lower
    if rho0 < 1:
        raise HypothesisError(f"hypothesis rho_HS >= 1 not met (lower bound {rho0:.6g})")
    delta_used = delta
    if rho0 > 1 and delta >= 2 * math.log(rho0):
        # a smaller delta gives a stronger conclusion
        delta_used = math.log(rho0)
    delta1 = delta_used / 2 if rho0 > 1 else eps * delta_used / 16
    target = rho0 * math.exp(-delta1)

    base = _per_piece_counts(est.witness, M)
    bps, _ = _pieces(M)
    lengths = np.diff(bps)
    mult = 1
    while np.any(lengths / (base * mult) >= eps / 2):
        mult += 1
    fine = make_bins(M, per_piece=base * mult)
    phases = _embed_phases(est.witness, fine)
    achieved = float(spectral_radius(_combine(fine.bin_matrices, phases)))
    if achieved < target:
        value, phases, _ = maximize_on_torus(fine.bin_matrices, restarts, seed)
        achieved = value

    windows = []
    for b in fine.bins:
        lo_w = max(b.lo - eps / 4, -1.0)
        hi_w = min(b.hi + eps / 4, -eps / 8)
        if hi_w - lo_w < eps / 8 - 1e-15:
            raise RuntimeError(f"window construction failed for bin [{b.lo}, {b.hi}]")
        windows.append((lo_w, hi_w))
    nonzero = np.any(fine.bin_matrices != 0, axis=(1, 2))
    idx = np.flatnonzero(nonzero)
    B = fine.bin_matrices[idx]
    win_nz = [windows[k] for k in idx]
    shortest = min(hi - lo for lo, hi in win_nz)
    # every window holds a full period, so every phase is reachable
    omega_min = TWO_PI / shortest
    goal = math.log(rho0) - delta_used

    best = None
    for j in range(n_frequencies):
        omega = omega_min * (1.05 + 0.173 * j)
        th = phases[idx].copy()
        taus_nz = None
        x_star = None
        for _ in range(6):
            taus_nz = _aligned_delays(win_nz, th, omega)
            if taus_nz is None:
                break
            x_star = _unit_crossing(B, th, taus_nz, math.log(max(achieved, 1.0)) + 1.0)
            if x_star is None:
                break
            T = _combine(B * np.exp(-x_star * taus_nz)[:, None, None], th)
            w = np.linalg.eigvals(T)
            lam = w[np.argmax(np.abs(w))]
            rot = np.angle(lam)
            if abs(rot) < 1e-13:
                break
            th = th - rot
        if taus_nz is None or x_star is None:
            continue
        # tiny irrational offsets: phase error omega * 1e-9 stays negligible
        offs = np.array([(math.sqrt(_PRIMES[k % len(_PRIMES)]) % 1.0) for k in range(len(idx))])
        taus_nz = taus_nz + 1e-9 * offs
        taus_all = np.empty(len(fine.bins))
        for k, (lo_w, hi_w) in enumerate(windows):
            u = 0.2 + 0.6 * (math.sqrt(_PRIMES[(k + 3) % len(_PRIMES)]) % 1.0)
            taus_all[k] = -(lo_w + (hi_w - lo_w) * u)
        taus_all[idx] = taus_nz
        phi = Binning(tuple(Bin(b.lo, b.hi, float(-t)) for b, t in zip(fine.bins, taus_all)))
        Mp = pushforward(M, phi)
        if not check_wellposed(Mp).ok:
            continue
        root, ok = polish_root(Mp, complex(x_star, omega), max_step=0.25)
        score = root.real if ok else -math.inf
        if best is None or score > best[0]:
            best = (score, phi, taus_nz, omega, root, ok)
        if ok and root.real >= goal:
            break
    if best is None:
        raise RuntimeError("no admissible frequency for the phase-aligned delays")
    _, phi, taus_nz, omega, root, ok = best
    sep_ok, resid = _rationally_separated(taus_nz)
    diag = DestabilizerDiagnostics(
        rho0=rho0, delta_used=delta_used, delta1=delta1, target=target,
        achieved_rho=achieved, sup_distance=phi.sup_distance(),
        taus=[float(t) for t in taus_nz], matrices=[A for A in B],
        windows=windows, bin_count=len(fine.bins), min_ratio_residual=resid,
        frequency=omega, root=root, root_ok=ok)
    if not diag.sup_distance < eps:
        raise RuntimeError(f"destabilizer moved a point by {diag.sup_distance} >= eps")
    return phi, diag


def _embed_phases(coarse: PhaseAssignment, fine: PhaseAssignment) -> np.ndarray:
    phases = np.zeros(len(fine.bins))
    atoms = {b.lo: p for b, p in zip(coarse.bins, coarse.phases) if b.kind == "atom"}
    ivs = [(b, p) for b, p in zip(coarse.bins, coarse.phases) if b.kind == "interval"]
    for k, b in enumerate(fine.bins):
        if b.kind == "atom":
            phases[k] = atoms.get(b.lo, 0.0)
            continue
        mid = 0.5 * (b.lo + b.hi)
        for cb, p in ivs:
            if cb.lo <= mid <= cb.hi:
                phases[k] = p
                break
    return phases


# -- sampled strong stability -------------------------------------------------------------------

def random_piecewise_linear(rng: np.random.Generator, eps: float,
                            n_inner: Optional[int] = None) -> PiecewiseLinear:
    """A nondecreasing piecewise-linear map with ``||phi - id|| < eps``."""
    if n_inner is None:
        n_inner = int(rng.integers(3, 12))
    x = np.concatenate([[-1.0], np.sort(rng.uniform(-1.0, 0.0, n_inner)), [0.0]])
    x = np.unique(x)
    y = np.clip(x + rng.uniform(-0.95 * eps, 0.95 * eps, len(x)), -1.0, 0.0)
    # sorting never increases the sup distance to the sorted knot positions
    y = np.sort(y)
    return PiecewiseLinear(np.column_stack([x, y]))


def random_binning(rng: np.random.Generator, eps: float) -> Binning:
    """Random cells of diameter below ``eps``, each sent to a point inside it."""
    edges = [-1.0]
    while edges[-1] < 0.0:
        edges.append(min(0.0, edges[-1] + rng.uniform(0.3, 0.95) * eps))
    bins = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        bins.append(Bin(lo, hi, float(lo + rng.uniform() * (hi - lo))))
    return Binning(tuple(bins))


def perturbation_to_dict(phi: Perturbation) -> dict:
    if isinstance(phi, PiecewiseLinear):
        return {"kind": "piecewise_linear", "knots": phi.knots.tolist()}
    return {"kind": "binning",
            "bins": [{"from": [b.lo, b.hi], "to": b.target} for b in phi.bins]}


def perturbation_digest(phi: Perturbation) -> str:
    blob = json.dumps(perturbation_to_dict(phi), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class StrongStabilityReport:
    eps: float
    rho_lower: float
    rho_upper: float
    trials: List[dict] = field(default_factory=list)
    skipped: List[dict] = field(default_factory=list)
    max_abscissa: float = -math.inf

    @property
    def margin(self) -> float:
        """Empirical uniform rate: ``-max abscissa`` over the trials."""
        return -self.max_abscissa

    @property
    def radius_consistent(self) -> bool:
        """With ``rho_HS < 1`` every sampled perturbation must stay stable."""
        return self.rho_lower >= 1 or self.max_abscissa < 0


def sample_strong_stability(M: MatrixNBV, eps: float, trials: int, seed: int = 0,
                            norm: str = "op2", restarts: int = 16,
                            families=("piecewise_linear", "binning"),
                            estimate: Optional[HsEstimate] = None) -> StrongStabilityReport:
    """Spectral abscissae of ``phi_* mu_M`` for random ``phi`` within ``eps`` of the identity."""
    from .spectrum import spectral_abscissa

    wp = check_wellposed(M)
    if not wp.ok:
        raise ValueError(f"system is not well-posed: det(I - A_M) = {wp.det:.3e}")
    est = estimate if estimate is not None else estimate_rho_hs(M, restarts=restarts,
                                                                  seed=seed, norm=norm)
    report = StrongStabilityReport(eps, est.lower, est.upper)
    for i in range(trials):
        rng = np.random.default_rng(seed + i)
        family = families[i % len(families)]
        if family == "piecewise_linear":
            phi = random_piecewise_linear(rng, eps)
        else:
            phi = random_binning(rng, eps)
        digest = perturbation_digest(phi)
        Mp = pushforward(M, phi)
        wpp = check_wellposed(Mp)
        if not wpp.ok:
            report.skipped.append({"phi_digest": digest, "reason": "ill-posed",
                                   "det": wpp.det})
            continue
        res = spectral_abscissa(Mp, norm=norm)
        report.trials.append({"phi_digest": digest, "family": family,
                              "abscissa": res.abscissa,
                              "sup_distance": phi.sup_distance()})
        report.max_abscissa = max(report.max_abscissa, res.abscissa)
    return report
