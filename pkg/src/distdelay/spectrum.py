"""Characteristic roots in vertical strips, the spectral abscissa, an exact
oracle for commensurate delays and a certified growth bound."""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import brentq

from .charfun import delta_batch
from .measure import MatrixNBV, check_wellposed, diff, op_norm, reduce_zero_atom, total_variation

PHASE_STEP = math.pi / 4
BOUNDARY_TOL = 1e-13
BRACKET_WIDTH = 1e-8
NEWTON_MAX_ITER = 50
IM_MAX_CAP_GAP = 1.0 / 32
RIGHTMOST_STRIP = 3e-2
NOISE_LENGTH = 1e-9


class IndeterminateCount(RuntimeError):
    """The winding number could not be resolved to an integer."""


class _OnBoundary(Exception):
    pass


@dataclass(frozen=True)
class Rect:
    re_lo: float
    re_hi: float
    im_lo: float
    im_hi: float

    @property
    def width(self) -> float:
        return self.re_hi - self.re_lo

    @property
    def height(self) -> float:
        return self.im_hi - self.im_lo

    @property
    def center(self) -> complex:
        return complex(0.5 * (self.re_lo + self.re_hi), 0.5 * (self.im_lo + self.im_hi))

    def inflated(self, frac: float) -> "Rect":
        dw, dh = 0.5 * frac * self.width, 0.5 * frac * self.height
        return Rect(self.re_lo - dw, self.re_hi + dw, self.im_lo - dh, self.im_hi + dh)

    def contains(self, z: complex, slack: float = 0.0) -> bool:
        return (self.re_lo - slack <= z.real <= self.re_hi + slack
                and self.im_lo - slack <= z.imag <= self.im_hi + slack)

    def split(self, frac: float, axis: Optional[str] = None) -> Tuple["Rect", "Rect"]:
        if axis is None:
            axis = "re" if self.width >= self.height else "im"
        if axis == "re":
            x = self.re_lo + frac * self.width
            return (Rect(self.re_lo, x, self.im_lo, self.im_hi),
                    Rect(x, self.re_hi, self.im_lo, self.im_hi))
        y = self.im_lo + frac * self.height
        return (Rect(self.re_lo, self.re_hi, self.im_lo, y),
                Rect(self.re_lo, self.re_hi, y, self.im_hi))


@dataclass(frozen=True)
class StripQuery:
    re_min: float
    re_max: float
    im_max: float
    grid_density: int = 8

    def __post_init__(self):
        if not self.re_min < self.re_max:
            raise ValueError("re_min must be < re_max")
        if self.im_max <= 0 or self.grid_density <= 0:
            raise ValueError("im_max and grid_density must be positive")


@dataclass
class SpectrumResult:
    roots: List[complex]
    abscissa_bracket: Tuple[float, float]
    tag: str
    count_certificates: List[Tuple[Rect, int]] = field(default_factory=list)

    @property
    def abscissa(self) -> float:
        """Real part of the rightmost polished root (``-inf`` if none were found)."""
        if not self.roots:
            return -math.inf
        return max(r.real for r in self.roots)

    @property
    def rightmost(self) -> Optional[complex]:
        if not self.roots:
            return None
        return max(self.roots, key=lambda r: r.real)


# -- certified growth bound -----------------------------------------------------

def growth_function(M: MatrixNBV, a: float, norm: str = "op2") -> float:
    """``g(a)``: an upper bound of ``||L(s)||`` on the line ``Re s = a``."""
    g = 0.0
    if M.n_atoms:
        g += float(np.dot(op_norm(M.mats, norm), np.exp(-a * M.taus)))
    if M.has_density:
        lo, w = M.breakpoints[:-1], M.widths
        if a == 0.0:
            ints = w
        else:
            ints = np.exp(a * lo) * np.expm1(a * w) / a
        g += float(np.dot(op_norm(M.pieces, norm), ints))
    return g


def certified_growth_bound(M: MatrixNBV, norm: str = "op2", xtol: float = 1e-10) -> float:
    """The real ``a*`` solving ``g(a*) = 1``; no characteristic root has ``Re s > a*``.

    ``g`` is strictly decreasing, so bisection is safe.  Returns ``-inf`` for the
    zero measure.  Systems with a jump at ``theta = 0`` must be reduced first
    (:func:`distdelay.measure.reduce_zero_atom`).
    """
    if M.has_zero_atom():
        raise ValueError("atom at theta=0 present; apply reduce_zero_atom() first")
    if total_variation(M, norm) == 0.0:
        return -math.inf

    def h(a):
        return growth_function(M, a, norm) - 1.0

    lo, hi = -1.0, 1.0
    while h(lo) <= 0:
        lo = 2 * lo - 1
    while h(hi) >= 0:
        hi = 2 * hi + 1
    return float(brentq(h, lo, hi, xtol=xtol, rtol=4 * np.finfo(float).eps))


# -- argument principle -----------------------------------------------------------

def _scale(L: np.ndarray, d: int) -> np.ndarray:
    return (1.0 + np.abs(L).sum(axis=2).max(axis=1)) ** d


def _edge(M: MatrixNBV, z0: complex, z1: complex, density: int,
          seg_tol: float = 1e-3, edge_tol: float = 1e-1,
          max_points: int = 400_000):
    """Adaptive sampling of ``Delta'/Delta`` along a segment.

    Returns (trapezoid integral of Delta'/Delta, accumulated phase).
    """
    d = M.dimension
    length = abs(z1 - z0)
    n0 = max(16, int(math.ceil(length * density)))
    t = np.linspace(0.0, 1.0, n0 + 1)
    s = z0 + t * (z1 - z0)
    D, Dp, L = delta_batch(M, s)
    if np.any(np.abs(D) < BOUNDARY_TOL * _scale(L, d)):
        raise _OnBoundary
    min_dt = 1e-15 / max(1.0, 1.0 / max(length, 1e-300))
    while True:
        ratio = D[1:] / D[:-1]
        inc = np.angle(ratio)
        logr = np.log(np.abs(ratio)) + 1j * inc
        f = Dp / D
        h = s[1:] - s[:-1]
        trap = h * (f[1:] + f[:-1]) / 2
        err = np.abs(trap - logr)
        # below this length rounding in Delta dominates the quadrature error
        # (only next to a zero); there the exact increment log(D1/D0) is used
        floor = NOISE_LENGTH * np.maximum(1.0, np.abs(s[1:]))
        resolvable = np.abs(h) >= floor
        err = np.where(resolvable, err, 0.0)
        bad = (np.abs(inc) >= PHASE_STEP) | (err > seg_tol)
        if not np.any(bad):
            if err.sum() <= edge_tol or not np.any(err > 0):
                return np.where(resolvable, trap, logr).sum(), inc.sum()
            # many small segment errors can still add up along a long edge
            order = np.argsort(-err)
            keep = np.cumsum(err[order]) <= err.sum() - 0.5 * edge_tol
            bad = np.zeros_like(bad)
            bad[order[: max(1, int(keep.sum()) + 1)]] = True
            bad &= err > 0
        idx = np.flatnonzero(bad)
        if np.min(t[idx + 1] - t[idx]) < min_dt or len(t) + len(idx) > max_points:
            raise IndeterminateCount("contour refinement did not converge")
        tm = 0.5 * (t[idx] + t[idx + 1])
        sm = z0 + tm * (z1 - z0)
        Dm, Dpm, Lm = delta_batch(M, sm)
        if np.any(np.abs(Dm) < BOUNDARY_TOL * _scale(Lm, d)):
            raise _OnBoundary
        t = np.insert(t, idx + 1, tm)
        s = np.insert(s, idx + 1, sm)
        D = np.insert(D, idx + 1, Dm)
        Dp = np.insert(Dp, idx + 1, Dpm)


def _edge_cached(M: MatrixNBV, a: complex, b: complex, density: int, cache: dict):
    """``_edge`` with reuse of reversed and mirrored segments.

    Real coefficients give ``Delta(conj s) = conj Delta(s)``: the integral over
    the mirror image is the conjugate and the phase increment flips sign.
    """
    if (a, b) in cache:
        return cache[(a, b)]
    if (b, a) in cache:
        trap, phase = cache[(b, a)]
        return -trap, -phase
    ca, cb = a.conjugate(), b.conjugate()
    if (ca, cb) in cache:
        trap, phase = cache[(ca, cb)]
        return trap.conjugate(), -phase
    if (cb, ca) in cache:
        trap, phase = cache[(cb, ca)]
        return -trap.conjugate(), phase
    if a.real == b.real and a == cb and a.imag != 0.0:
        # vertical edge symmetric about the real axis: integrate the upper half
        mid = complex(a.real, 0.0)
        top = b if b.imag > 0 else a
        trap, phase = _edge(M, mid, top, density)
        trap, phase = 2j * trap.imag, 2 * phase
        if b.imag < 0:
            trap, phase = -trap, -phase
    else:
        trap, phase = _edge(M, a, b, density)
    cache[(a, b)] = (trap, phase)
    return trap, phase


def _winding(M: MatrixNBV, rect: Rect, density: int = 8,
             cache: Optional[dict] = None) -> int:
    corners = [complex(rect.re_lo, rect.im_lo), complex(rect.re_hi, rect.im_lo),
               complex(rect.re_hi, rect.im_hi), complex(rect.re_lo, rect.im_hi)]
    if cache is None:
        cache = {}
    trap_total = 0j
    phase_total = 0.0
    for a, b in zip(corners, corners[1:] + corners[:1]):
        trap, phase = _edge_cached(M, a, b, density, cache)
        trap_total += trap
        phase_total += phase
    n = phase_total / (2 * math.pi)
    k = int(round(n))
    if abs(n - k) > 1e-6 or abs(trap_total.imag / (2 * math.pi) - k) > 0.1:
        raise IndeterminateCount(
            f"winding number not integral (phase {n:.6f}, integral "
            f"{trap_total.imag / (2 * math.pi):.6f})")
    if k < 0:
        raise IndeterminateCount(f"negative winding number {k}")
    return k


def count_roots_rect(M: MatrixNBV, rect: Rect, retries: int = 5, density: int = 8) -> int:
    """Number of zeros of ``Delta_M`` inside ``rect`` (argument principle).

    A zero on (or numerically at) the contour inflates the rectangle by 1%
    and retries.
    """
    if M.is_zero():
        return 0
    return _count_inflating(M, rect, retries, density)[0]


def _count_inflating(M: MatrixNBV, rect: Rect, retries: int = 5, density: int = 8):
    r = rect
    for _ in range(retries + 1):
        try:
            return _winding(M, r, density), r
        except _OnBoundary:
            r = r.inflated(0.01)
    raise IndeterminateCount("indeterminate count: zero on the contour after inflation retries")


# -- root polishing ----------------------------------------------------------------

def _eval1(M: MatrixNBV, s: complex):
    with np.errstate(all="ignore"):
        D, Dp, L = delta_batch(M, [s])
    if not np.all(np.isfinite(L[0])):
        return complex(np.nan), complex(np.nan), np.inf
    return complex(D[0]), complex(Dp[0]), float(np.linalg.norm(L[0], 2))


def polish_root(M: MatrixNBV, s0: complex, max_iter: int = NEWTON_MAX_ITER,
                max_step: float = math.inf):
    """Damped Newton on ``Delta``, steps capped at ``max_step``.  Returns ``(root, success)``."""
    s = complex(s0)
    D, Dp, nL = _eval1(M, s)
    for _ in range(max_iter):
        if abs(D) <= 1e-12 * (1 + nL):
            return s, True
        if Dp == 0 or not np.isfinite(Dp):
            break
        step = D / Dp
        if abs(step) > max_step:
            step *= max_step / abs(step)
        lam = 1.0
        while lam > 1e-12:
            s_new = s - lam * step
            D_new, Dp_new, nL_new = _eval1(M, s_new)
            if np.isfinite(D_new) and abs(D_new) < abs(D):
                break
            lam *= 0.5
        else:
            break
        if abs(s_new - s) <= 4e-16 * max(1.0, abs(s)):
            s, D, Dp, nL = s_new, D_new, Dp_new, nL_new
            break
        s, D, Dp, nL = s_new, D_new, Dp_new, nL_new
    return s, abs(D) <= 1e-9 * (1 + nL)


def root_residual(M: MatrixNBV, r: complex) -> float:
    D, _, L = delta_batch(M, [r], derivative=False)
    return float(abs(D[0]))


_SPLIT_FRACS = (0.5 + 0.0137, 0.5 - 0.0291, 0.5 + 0.0419, 0.5 - 0.0613, 0.37, 0.63)


def _split_counted(M: MatrixNBV, rect: Rect, count: int, density: int,
                   axis: Optional[str] = None, cache: Optional[dict] = None):
    for frac in _SPLIT_FRACS:
        a, b = rect.split(frac, axis)
        try:
            ca = _winding(M, a, density, cache)
            cb = _winding(M, b, density, cache)
        except _OnBoundary:
            continue
        if ca + cb == count:
            return (a, ca), (b, cb)
    raise IndeterminateCount("could not split rectangle consistently")


def isolate_roots(M: MatrixNBV, rect: Rect, count: Optional[int] = None, *,
                  density: int = 8, rightmost_only: bool = False,
                  min_size: float = 1e-7, cache: Optional[dict] = None) -> List[complex]:
    """All zeros in ``rect`` by recursive subdivision plus Newton polishing.

    With ``rightmost_only`` the search is best-first on the right edge and
    stops once no remaining rectangle can hold a zero further right.
    """
    if cache is None:
        cache = {}
    if count is None:
        count = _winding(M, rect, density, cache)
    roots: List[complex] = []
    heap = [(-rect.re_hi, 0, rect, count)]
    tick = 1
    best = -math.inf

    def add(r):
        nonlocal best
        for z in (r, r.conjugate()) if abs(r.imag) > 1e-12 else (complex(r.real, 0.0),):
            if all(abs(z - q) > 1e-9 * max(1.0, abs(z)) for q in roots):
                roots.append(z)
        best = max(best, r.real)

    while heap:
        neg_hi, _, r, c = heapq.heappop(heap)
        if rightmost_only and -neg_hi < best:
            break
        if c == 0:
            continue
        size = max(r.width, r.height)
        if c == 1 or size < min_size:
            z, ok = polish_root(M, r.center, max_step=max(size, 1e-3))
            slack = 1e-12 * max(1.0, abs(z))
            if ok and r.contains(z, slack):
                found = [q for q in roots if r.contains(q, slack)]
                if len(found) < c:
                    add(z)
                if c == 1 or size < min_size:
                    continue
        # narrowing in Re first lets the right-edge ordering prune whole strips
        axis = "re" if rightmost_only and r.width > RIGHTMOST_STRIP else None
        for child, cc in _split_counted(M, r, c, density, axis, cache):
            if cc:
                heapq.heappush(heap, (-child.re_hi, tick, child, cc))
                tick += 1
    return roots


# -- spectral abscissa -------------------------------------------------------------

def default_im_max(M: MatrixNBV) -> float:
    """``2 pi / min_gap + 10`` with the smallest spacing among {0} and the delays."""
    taus = np.unique(np.concatenate([[0.0], M.taus, [1.0] if M.has_density else []]))
    gaps = np.diff(taus)
    gap = float(gaps.min()) if len(gaps) else 1.0
    return 2 * math.pi / max(gap, IM_MAX_CAP_GAP) + 10


def default_query(M: MatrixNBV, norm: str = "op2") -> StripQuery:
    Mr = reduce_zero_atom(M)
    a = certified_growth_bound(Mr, norm)
    if not np.isfinite(a):
        a = 0.0
    return StripQuery(a - 12.0, a + 0.5, default_im_max(M))


def _bracket(M: MatrixNBV, x: float, right: float, Y: float, density: int,
             cache: Optional[dict] = None):
    """Verify that no zero lies right of ``x + BRACKET_WIDTH / 2``.

    The polished zero at real part ``x`` is itself the lower certificate.
    """
    certs = []
    for half in (0.4 * BRACKET_WIDTH, 0.25 * BRACKET_WIDTH, 0.45 * BRACKET_WIDTH):
        lo, hi = x - half, x + half
        r_hi = Rect(hi, right, -Y, Y)
        try:
            c_hi = _winding(M, r_hi, density, cache)
        except _OnBoundary:
            continue
        certs = [(r_hi, c_hi)]
        if c_hi == 0:
            return (lo, hi), certs
        break
    return None, certs


def _bisect_rightmost(M: MatrixNBV, lo: float, hi: float, right: float, Y: float,
                      density: int, cache: Optional[dict] = None):
    """Plain bisection on Re: count([lo, right]) > 0 and count([hi, right]) == 0."""
    certs = []
    jitter = iter(np.linspace(0.05, 0.45, 32))
    while hi - lo > BRACKET_WIDTH:
        mid = 0.5 * (lo + hi)
        try:
            c = _winding(M, Rect(mid, right, -Y, Y), density, cache)
        except _OnBoundary:
            f = next(jitter, None)
            if f is None:
                break
            mid = lo + f * (hi - lo)
            try:
                c = _winding(M, Rect(mid, right, -Y, Y), density, cache)
            except _OnBoundary:
                continue
        certs.append((Rect(mid, right, -Y, Y), c))
        if c > 0:
            lo = mid
        else:
            hi = mid
    return (lo, hi), certs


def spectral_abscissa(M: MatrixNBV, q: Optional[StripQuery] = None,
                      norm: str = "op2") -> SpectrumResult:
    """Rightmost characteristic root inside ``|Im s| <= im_max``.

    The result is always tagged ``"window-limited"``: zeros with
    ``|Im s| > im_max`` are not excluded.
    """
    wp = check_wellposed(M)
    if not wp.ok:
        raise ValueError(f"system is not well-posed: det(I - A_M) = {wp.det:.3e}")
    Mr = reduce_zero_atom(M)
    a_star = certified_growth_bound(Mr, norm)
    if not np.isfinite(a_star):
        return SpectrumResult([], (-math.inf, -math.inf), "no-roots")
    extend = q is None
    if q is None:
        q = default_query(M, norm)
    density = q.grid_density
    # zeros satisfy Re s <= a*, and may sit exactly on that line
    right = min(q.re_max, a_star + 0.01 * max(1.0, abs(a_star)))
    left = min(q.re_min, right - 1.0)
    Y = q.im_max

    n, window = _count_inflating(Mr, Rect(left, right, -Y, Y), density=density)
    certs = [(window, n)]
    for _ in range(4 if extend else 0):
        if n:
            break
        left = right - 2 * (right - left)
        n, window = _count_inflating(Mr, Rect(left, right, -Y, Y), density=density)
        certs.append((window, n))
    Y = window.im_hi
    if n == 0:
        return SpectrumResult([], (-math.inf, left), "window-limited", certs)

    cache: dict = {}
    roots = isolate_roots(Mr, window, n, density=density, rightmost_only=True, cache=cache)
    if not roots:
        raise IndeterminateCount("roots counted but none polished")
    roots.sort(key=lambda z: (-z.real, abs(z.imag), z.imag))
    x = roots[0].real
    bracket, bc = _bracket(Mr, x, window.re_hi, Y, density, cache)
    certs.extend(bc)
    if bracket is None:
        bracket, bc = _bisect_rightmost(Mr, window.re_lo, window.re_hi, window.re_hi, Y,
                                        density, cache)
        certs.extend(bc)
        if bracket[0] > x + BRACKET_WIDTH:
            roots = isolate_roots(Mr, window, n, density=density, rightmost_only=True,
                                  cache=cache)
            roots.sort(key=lambda z: (-z.real, abs(z.imag), z.imag))
    return SpectrumResult(roots, bracket, "window-limited", certs)


def find_roots(M: MatrixNBV, rect: Rect, density: int = 8) -> List[complex]:
    """Every zero of ``Delta_M`` in ``rect``, sorted by decreasing real part."""
    if M.is_zero():
        return []
    Mr = reduce_zero_atom(M)
    n, used = _count_inflating(Mr, rect, density=density)
    if not n:
        return []
    roots = isolate_roots(Mr, used, n, density=density)
    roots = [r for r in roots if rect.contains(r, 1e-9)]
    return sorted(roots, key=lambda z: (-z.real, z.imag))


# -- commensurate oracle ---------------------------------------------------------------

def _multiples(M: MatrixNBV, h: float) -> np.ndarray:
    m = np.rint(M.taus / h)
    if np.any(m < 1) or np.any(np.abs(M.taus - m * h) > 1e-9 * max(h, 1e-300)):
        raise ValueError(f"delays {M.taus.tolist()} are not positive multiples of {h}")
    return m.astype(int)


def commensurate_oracle(M: MatrixNBV, base) -> float:
    """Exact spectral abscissa of an atoms-only system with delays ``m_k * h``.

    ``P(z) = det(I - sum A_k z^{m_k})`` is recovered from its values at roots
    of unity, and each zero ``z`` maps to ``Re s = -ln|z| / h``.
    """
    if M.has_density:
        raise ValueError("commensurate oracle needs an atoms-only system")
    h = float(Fraction(base)) if isinstance(base, (Fraction, str)) else float(base)
    if M.n_atoms == 0:
        return -math.inf
    m = _multiples(M, h)
    d = M.dimension
    deg = d * int(m.max())
    N = deg + 1
    z = np.exp(2j * np.pi * np.arange(N) / N)
    Z = np.power.outer(z, m)  # (N, K)
    P = np.linalg.det(np.eye(d) - np.einsum("nk,kab->nab", Z, M.mats))
    coeffs = np.fft.fft(P) / N
    coeffs = coeffs.real
    tol = 1e-13 * np.max(np.abs(coeffs))
    nz = np.flatnonzero(np.abs(coeffs) > tol)
    top = int(nz.max())
    if top == 0:
        return -math.inf
    zeros = np.roots(coeffs[: top + 1][::-1])
    return float(np.max(-np.log(np.abs(zeros)) / h))


# -- continuity probe ----------------------------------------------------------------

def abscissa_tv_continuity_probe(M: MatrixNBV, seq: Sequence[MatrixNBV],
                                 norm: str = "op2",
                                 query: Optional[StripQuery] = None):
    """Rows ``(Var(M - N_n), S_{N_n})`` for a sequence approaching ``M``."""
    rows = []
    for N in seq:
        res = spectral_abscissa(N, query, norm=norm)
        rows.append((total_variation(diff(M, N), norm), res.abscissa))
    return rows
