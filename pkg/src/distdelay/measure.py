"""Matrix-valued measures on [-1, 0] with finitely many atoms and a
piecewise-constant density, plus exact pushforwards under two families of
delay maps.

A system ``M`` is stored through its measure: atoms ``A_k`` at ``theta = -tau_k``
and a density ``C_j`` on ``[b_{j-1}, b_j)``.  The normalized BV function is
recovered as ``M(t) = mu([-1, t])`` for ``t`` in ``(-1, 0]`` and ``M(-1) = 0``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence, Union

import numpy as np

MERGE_TOL = 1e-12
TOL_DET = 1e-12

NORMS = ("op2", "op1", "opinf")


def op_norm(A: np.ndarray, norm: str = "op2") -> np.ndarray:
    """Induced matrix norm of ``A`` (works on stacks ``(..., d, d)``)."""
    A = np.asarray(A)
    if norm == "op2":
        if A.ndim == 2:
            return np.linalg.norm(A, 2)
        return np.linalg.svd(A, compute_uv=False)[..., 0]
    if norm == "op1":
        return np.abs(A).sum(axis=-2).max(axis=-1)
    if norm == "opinf":
        return np.abs(A).sum(axis=-1).max(axis=-1)
    raise ValueError(f"unknown norm {norm!r}; expected one of {NORMS}")


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class MatrixNBV:
    """A measure in class N: finitely many atoms plus a piecewise-constant density.

    Parameters
    ----------
    taus : (K,) array
        Atom delays in [0, 1]; the atom sits at ``theta = -tau``.  ``tau = 0``
        is the jump ``M(0) - M(0^-)``.
    mats : (K, d, d) array
        Atom matrices.
    breakpoints : (m + 1,) array
        ``-1 = b_0 < ... < b_m = 0``; empty when there is no density.
    pieces : (m, d, d) array
        Density value on ``[b_{j-1}, b_j)``.
    """

    taus: np.ndarray
    mats: np.ndarray
    breakpoints: np.ndarray
    pieces: np.ndarray
    dimension: int = field(default=0)

    def __post_init__(self):
        taus = np.asarray(self.taus, dtype=float).reshape(-1)
        d = self.dimension
        mats = np.asarray(self.mats, dtype=float)
        pieces = np.asarray(self.pieces, dtype=float)
        if d <= 0:
            if mats.size:
                d = mats.shape[-1]
            elif pieces.size:
                d = pieces.shape[-1]
            else:
                raise ValueError("dimension must be given for an empty measure")
        mats = mats.reshape(len(taus), d, d)
        bps = np.asarray(self.breakpoints, dtype=float).reshape(-1)
        pieces = pieces.reshape(max(len(bps) - 1, 0), d, d)

        if not (np.all(np.isfinite(taus)) and np.all(np.isfinite(mats))
                and np.all(np.isfinite(bps)) and np.all(np.isfinite(pieces))):
            raise ValueError("all entries must be finite")
        if np.any(taus < 0) or np.any(taus > 1):
            raise ValueError("atom taus must lie in [0, 1]")
        order = np.argsort(taus, kind="stable")
        taus, mats = taus[order], mats[order]
        if np.any(np.diff(taus) <= 0):
            raise ValueError("atom taus must be pairwise distinct")
        if len(bps) == 1:
            raise ValueError("density needs at least two breakpoints")
        if len(bps):
            if bps[0] != -1.0 or bps[-1] != 0.0:
                raise ValueError("breakpoints must start at -1 and end at 0")
            if np.any(np.diff(bps) <= 0):
                raise ValueError("breakpoints must be strictly increasing")

        object.__setattr__(self, "dimension", int(d))
        object.__setattr__(self, "taus", _frozen(taus))
        object.__setattr__(self, "mats", _frozen(mats))
        object.__setattr__(self, "breakpoints", _frozen(bps))
        object.__setattr__(self, "pieces", _frozen(pieces))

    # -- construction helpers -------------------------------------------------

    @classmethod
    def build(cls, dimension: int, atoms: Iterable = (), breakpoints=None,
              pieces=None, merge_tol: float = MERGE_TOL) -> "MatrixNBV":
        """Build from ``(tau, matrix)`` pairs, summing atoms closer than ``merge_tol``."""
        d = int(dimension)
        taus, mats = _merge_atoms(
            [float(t) for t, _ in atoms],
            [np.asarray(A, dtype=float).reshape(d, d) for _, A in atoms],
            d, merge_tol)
        if breakpoints is None:
            bps = np.zeros(0)
            pcs = np.zeros((0, d, d))
        else:
            bps = np.asarray(breakpoints, dtype=float)
            pcs = np.asarray(pieces, dtype=float).reshape(len(bps) - 1, d, d)
        return cls(taus, mats, bps, pcs, d)

    @classmethod
    def zero(cls, dimension: int) -> "MatrixNBV":
        d = int(dimension)
        return cls(np.zeros(0), np.zeros((0, d, d)), np.zeros(0), np.zeros((0, d, d)), d)

    # -- basic views ----------------------------------------------------------

    @property
    def n_atoms(self) -> int:
        return len(self.taus)

    @property
    def n_pieces(self) -> int:
        return len(self.pieces)

    @property
    def has_density(self) -> bool:
        return self.n_pieces > 0

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.breakpoints)

    def zero_atom(self) -> np.ndarray:
        """``A_M = M(0) - M(0^-)``: the atom at ``theta = 0`` (zero if absent)."""
        hit = np.flatnonzero(self.taus == 0.0)
        if len(hit):
            return self.mats[hit[0]].copy()
        return np.zeros((self.dimension, self.dimension))

    def has_zero_atom(self) -> bool:
        return bool(np.any(self.taus == 0.0) and np.any(self.zero_atom() != 0))

    def is_zero(self) -> bool:
        return not np.any(self.mats) and not np.any(self.pieces)

    def scaled(self, c: float) -> "MatrixNBV":
        return MatrixNBV(self.taus, c * self.mats, self.breakpoints, c * self.pieces,
                         self.dimension)

    def transformed(self, left: np.ndarray) -> "MatrixNBV":
        """Left-multiply every matrix by ``left``."""
        return MatrixNBV(self.taus, left @ self.mats, self.breakpoints,
                         left @ self.pieces, self.dimension)

    def without_zero_atom(self) -> "MatrixNBV":
        keep = self.taus != 0.0
        return MatrixNBV(self.taus[keep], self.mats[keep], self.breakpoints,
                         self.pieces, self.dimension)

    def __call__(self, t: float) -> np.ndarray:
        """Evaluate the normalized BV function ``M(t) = mu([-1, t])``."""
        d = self.dimension
        if t <= -1.0:
            return np.zeros((d, d))
        out = self.mats[-self.taus <= t].sum(axis=0) if self.n_atoms else np.zeros((d, d))
        if self.has_density:
            lo = self.breakpoints[:-1]
            hi = self.breakpoints[1:]
            covered = np.clip(np.minimum(hi, t) - lo, 0.0, None)
            out = out + np.einsum("j,jab->ab", covered, self.pieces)
        return out

    def __repr__(self) -> str:
        return (f"MatrixNBV(d={self.dimension}, atoms={self.n_atoms}, "
                f"pieces={self.n_pieces})")


def _merge_atoms(taus: Sequence[float], mats: Sequence[np.ndarray], d: int,
                 tol: float = MERGE_TOL, drop_zero: bool = False):
    if not len(taus):
        return np.zeros(0), np.zeros((0, d, d))
    taus = np.asarray(taus, dtype=float)
    mats = np.asarray(mats, dtype=float).reshape(len(taus), d, d)
    order = np.argsort(taus, kind="stable")
    taus, mats = taus[order], mats[order]
    out_t, out_m = [taus[0]], [mats[0].copy()]
    for t, A in zip(taus[1:], mats[1:]):
        if t - out_t[-1] <= tol:
            out_m[-1] = out_m[-1] + A
        else:
            out_t.append(t)
            out_m.append(A.copy())
    out_t = np.array(out_t)
    out_m = np.array(out_m)
    # snap onto the endpoints so that float noise does not leave [0, 1]
    out_t[np.abs(out_t) <= tol] = 0.0
    out_t[np.abs(out_t - 1.0) <= tol] = 1.0
    if drop_zero:
        keep = np.any(out_m != 0, axis=(1, 2))
        out_t, out_m = out_t[keep], out_m[keep]
    return out_t, out_m


# -- total variation and friends ---------------------------------------------

def total_variation(M: MatrixNBV, norm: str = "op2") -> float:
    """Closed-form TV: sum of atom norms plus the integral of the density norm."""
    tv = 0.0
    if M.n_atoms:
        tv += float(np.sum(op_norm(M.mats, norm)))
    if M.has_density:
        tv += float(np.dot(op_norm(M.pieces, norm), M.widths))
    return tv


def total_mass(M: MatrixNBV) -> np.ndarray:
    """``mu_M([-1, 0]) = M(0)``."""
    out = M.mats.sum(axis=0) if M.n_atoms else np.zeros((M.dimension,) * 2)
    if M.has_density:
        out = out + np.einsum("j,jab->ab", M.widths, M.pieces)
    return out


def diff(M: MatrixNBV, N: MatrixNBV) -> MatrixNBV:
    """The NBV function ``M - N`` on a merged atom list and breakpoint grid."""
    if M.dimension != N.dimension:
        raise ValueError(f"dimension mismatch: {M.dimension} vs {N.dimension}")
    d = M.dimension
    taus = list(M.taus) + list(N.taus)
    mats = list(M.mats) + [-A for A in N.mats]
    t, A = _merge_atoms(taus, mats, d, tol=0.0, drop_zero=True)

    if not M.has_density and not N.has_density:
        return MatrixNBV(t, A, np.zeros(0), np.zeros((0, d, d)), d)
    grid = np.union1d(M.breakpoints, N.breakpoints)
    mids = 0.5 * (grid[:-1] + grid[1:])
    pcs = _density_at(M, mids) - _density_at(N, mids)
    bps, pcs = _compress_density(grid, pcs)
    return MatrixNBV(t, A, bps, pcs, d)


def _density_at(M: MatrixNBV, theta: np.ndarray) -> np.ndarray:
    d = M.dimension
    out = np.zeros((len(theta), d, d))
    if M.has_density:
        idx = np.searchsorted(M.breakpoints, theta, side="right") - 1
        ok = (idx >= 0) & (idx < M.n_pieces)
        out[ok] = M.pieces[idx[ok]]
    return out


def _compress_density(grid: np.ndarray, pcs: np.ndarray):
    """Merge neighbouring equal pieces; return no density if everything vanishes."""
    d = pcs.shape[-1]
    if not np.any(pcs):
        return np.zeros(0), np.zeros((0, d, d))
    keep_b = [grid[0]]
    keep_p = [pcs[0]]
    for b, P in zip(grid[1:-1], pcs[1:]):
        if np.array_equal(P, keep_p[-1]):
            continue
        keep_b.append(b)
        keep_p.append(P)
    keep_b.append(grid[-1])
    return np.array(keep_b), np.array(keep_p)


def density_mass(M: MatrixNBV, lo: float, hi: float) -> np.ndarray:
    """Integral of the density over ``[lo, hi]``."""
    d = M.dimension
    if not M.has_density or hi <= lo:
        return np.zeros((d, d))
    a = M.breakpoints[:-1]
    b = M.breakpoints[1:]
    overlap = np.clip(np.minimum(b, hi) - np.maximum(a, lo), 0.0, None)
    return np.einsum("j,jab->ab", overlap, M.pieces)


@dataclass(frozen=True)
class WellPosedness:
    ok: bool
    det: float


def check_wellposed(M: MatrixNBV, tol_det: float = TOL_DET) -> WellPosedness:
    det = float(np.linalg.det(np.eye(M.dimension) - M.zero_atom()))
    return WellPosedness(abs(det) > tol_det, det)


def reduce_zero_atom(M: MatrixNBV) -> MatrixNBV:
    """Equivalent system without a jump at 0: ``(I - A_M)^{-1}`` times the rest.

    The characteristic roots are unchanged since
    ``det(I - A - L0(s)) = det(I - A) det(I - (I - A)^{-1} L0(s))``.
    """
    wp = check_wellposed(M)
    if not wp.ok:
        raise ValueError(f"system is not well-posed: det(I - A_M) = {wp.det:.3e}")
    if not M.has_zero_atom():
        return M.without_zero_atom()
    left = np.linalg.inv(np.eye(M.dimension) - M.zero_atom())
    return M.without_zero_atom().transformed(left)


# -- perturbations ------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class PiecewiseLinear:
    """Continuous nondecreasing map through ``knots[i] = (theta_i, phi(theta_i))``."""

    knots: np.ndarray

    def __post_init__(self):
        k = np.asarray(self.knots, dtype=float)
        if k.ndim != 2 or k.shape[1] != 2 or len(k) < 2:
            raise ValueError("knots must be an (n >= 2, 2) array")
        if not np.all(np.isfinite(k)):
            raise ValueError("knots must be finite")
        x, y = k[:, 0], k[:, 1]
        if x[0] != -1.0 or x[-1] != 0.0:
            raise ValueError("first knot must be at theta=-1 and last at theta=0")
        if np.any(np.diff(x) <= 0):
            raise ValueError("knot positions must be strictly increasing")
        if np.any(np.diff(y) < 0):
            raise ValueError("piecewise-linear perturbation must be nondecreasing")
        if np.any(y < -1) or np.any(y > 0):
            raise ValueError("perturbation values must lie in [-1, 0]")
        object.__setattr__(self, "knots", _frozen(k))

    @classmethod
    def identity(cls) -> "PiecewiseLinear":
        return cls(np.array([[-1.0, -1.0], [0.0, 0.0]]))

    def __call__(self, theta):
        x, y = self.knots[:, 0], self.knots[:, 1]
        theta = np.asarray(theta, dtype=float)
        i = np.clip(np.searchsorted(x, theta, side="right") - 1, 0, len(x) - 2)
        x0, x1 = x[i], x[i + 1]
        # convex-combination form keeps the identity map exact in floating point
        w1 = (theta - x0) / (x1 - x0)
        w0 = (x1 - theta) / (x1 - x0)
        return y[i] * w0 + y[i + 1] * w1

    def sup_distance(self) -> float:
        """``||phi - id||_inf``; attained at a knot because both maps are linear between knots."""
        return float(np.max(np.abs(self.knots[:, 1] - self.knots[:, 0])))


@dataclass(frozen=True)
class Bin:
    lo: float
    hi: float
    target: float

    @property
    def is_point(self) -> bool:
        return self.lo == self.hi


@dataclass(frozen=True, eq=False)
class Binning:
    """Piecewise-constant map sending every source bin to one target point.

    Interval bins tile [-1, 0]; the first is closed, the rest are ``(lo, hi]``.
    Point bins ``lo == hi`` carve single points out of the interval that
    contains them.
    """

    bins: tuple

    def __post_init__(self):
        bins = tuple(b if isinstance(b, Bin) else Bin(*map(float, b)) for b in self.bins)
        if not bins:
            raise ValueError("binning needs at least one bin")
        for b in bins:
            vals = (b.lo, b.hi, b.target)
            if not all(np.isfinite(vals)):
                raise ValueError("bin entries must be finite")
            if b.lo > b.hi:
                raise ValueError(f"bin source [{b.lo}, {b.hi}] is reversed")
            if b.lo < -1 or b.hi > 0 or b.target < -1 or b.target > 0:
                raise ValueError("bins and targets must lie in [-1, 0]")
        intervals = sorted((b for b in bins if not b.is_point), key=lambda b: b.lo)
        if not intervals:
            raise ValueError("interval bins must cover [-1, 0]")
        if intervals[0].lo != -1.0 or intervals[-1].hi != 0.0:
            raise ValueError("interval bins must cover [-1, 0]")
        for a, b in zip(intervals, intervals[1:]):
            if a.hi != b.lo:
                raise ValueError(f"interval bins must be contiguous: {a.hi} != {b.lo}")
        points = [b.lo for b in bins if b.is_point]
        if len(set(points)) != len(points):
            raise ValueError("point bins must be distinct")
        points_sorted = tuple(sorted((b for b in bins if b.is_point), key=lambda b: b.lo))
        object.__setattr__(self, "bins", tuple(intervals) + points_sorted)

    @property
    def intervals(self) -> tuple:
        return tuple(b for b in self.bins if not b.is_point)

    @property
    def points(self) -> tuple:
        return tuple(b for b in self.bins if b.is_point)

    def locate(self, theta: float) -> Bin:
        for b in self.points:
            if theta == b.lo:
                return b
        for i, b in enumerate(self.intervals):
            if (i == 0 and b.lo <= theta <= b.hi) or (b.lo < theta <= b.hi):
                return b
        raise ValueError(f"theta={theta} outside [-1, 0]")

    def __call__(self, theta):
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        return np.array([self.locate(t).target for t in theta])

    def sup_distance(self) -> float:
        out = 0.0
        for b in self.bins:
            out = max(out, abs(b.target - b.lo), abs(b.target - b.hi))
        return out


Perturbation = Union[PiecewiseLinear, Binning]


def compose(outer: PiecewiseLinear, inner: PiecewiseLinear) -> PiecewiseLinear:
    """``outer o inner`` as a piecewise-linear map."""
    xs = list(inner.knots[:, 0])
    ox = outer.knots[:, 0]
    ix, iy = inner.knots[:, 0], inner.knots[:, 1]
    for i in range(len(ix) - 1):
        y0, y1 = iy[i], iy[i + 1]
        if y1 <= y0:
            continue
        inside = ox[(ox > y0) & (ox < y1)]
        xs.extend(ix[i] + (inside - y0) * (ix[i + 1] - ix[i]) / (y1 - y0))
    xs = np.unique(np.clip(xs, -1.0, 0.0))
    ys = np.clip(outer(inner(xs)), -1.0, 0.0)
    ys = np.maximum.accumulate(ys)
    return PiecewiseLinear(np.column_stack([xs, ys]))


def pushforward(M: MatrixNBV, phi: Perturbation) -> MatrixNBV:
    """Exact ``phi_* mu_M`` within the atoms-plus-piecewise-density class."""
    if isinstance(phi, PiecewiseLinear):
        return _push_piecewise_linear(M, phi)
    if isinstance(phi, Binning):
        return _push_binning(M, phi)
    raise TypeError(f"unsupported perturbation {type(phi).__name__}")


def _push_piecewise_linear(M: MatrixNBV, phi: PiecewiseLinear) -> MatrixNBV:
    d = M.dimension
    atom_t = list(-phi(-M.taus)) if M.n_atoms else []
    atom_m = list(M.mats)

    images = []  # (lo, hi, density) in increasing order
    if M.has_density:
        x, y = phi.knots[:, 0], phi.knots[:, 1]
        for i in range(len(x) - 1):
            for j in range(M.n_pieces):
                u = max(x[i], M.breakpoints[j])
                v = min(x[i + 1], M.breakpoints[j + 1])
                if v <= u:
                    continue
                C = M.pieces[j]
                if not np.any(C):
                    continue
                if y[i + 1] > y[i]:
                    slope = (y[i + 1] - y[i]) / (x[i + 1] - x[i])
                    lo, hi = phi(u), phi(v)
                    if hi - lo > MERGE_TOL:
                        images.append((float(lo), float(hi), C / slope))
                    else:
                        atom_t.append(-float(lo))
                        atom_m.append(C * (v - u))
                else:
                    atom_t.append(-float(y[i]))
                    atom_m.append(C * (v - u))

    taus, mats = _merge_atoms(atom_t, atom_m, d)
    bps, pcs = _assemble_density(images, d)
    return MatrixNBV(taus, mats, bps, pcs, d)


def _assemble_density(images, d: int):
    if not images:
        return np.zeros(0), np.zeros((0, d, d))
    bps = [-1.0]
    pcs = []
    for lo, hi, C in images:
        cur = bps[-1]
        if lo - cur > MERGE_TOL:
            pcs.append(np.zeros((d, d)))
            bps.append(lo)
        pcs.append(C)
        bps.append(hi)
    if bps[-1] < -MERGE_TOL:
        pcs.append(np.zeros((d, d)))
        bps.append(0.0)
    else:
        bps[-1] = 0.0
    return np.array(bps), np.array(pcs)


def _push_binning(M: MatrixNBV, phi: Binning) -> MatrixNBV:
    d = M.dimension
    atom_thetas = -M.taus
    assigned = np.zeros(M.n_atoms, dtype=bool)
    out_t, out_m = [], []
    for b in phi.points:
        hit = atom_thetas == b.lo
        mass = M.mats[hit].sum(axis=0) if np.any(hit) else np.zeros((d, d))
        assigned |= hit
        out_t.append(-b.target)
        out_m.append(mass)
    for i, b in enumerate(phi.intervals):
        if i == 0:
            hit = (atom_thetas >= b.lo) & (atom_thetas <= b.hi)
        else:
            hit = (atom_thetas > b.lo) & (atom_thetas <= b.hi)
        hit &= ~assigned
        assigned |= hit
        mass = M.mats[hit].sum(axis=0) if np.any(hit) else np.zeros((d, d))
        mass = mass + density_mass(M, b.lo, b.hi)
        out_t.append(-b.target)
        out_m.append(mass)
    taus, mats = _merge_atoms(out_t, out_m, d)
    keep = np.any(mats != 0, axis=(1, 2))
    return MatrixNBV(taus[keep], mats[keep], np.zeros(0), np.zeros((0, d, d)), d)


def allclose(M: MatrixNBV, N: MatrixNBV, atol: float = 1e-14) -> bool:
    """Structural near-equality of two measures (same atoms and density grid)."""
    if M.dimension != N.dimension or M.n_atoms != N.n_atoms or M.n_pieces != N.n_pieces:
        return False
    return (np.allclose(M.taus, N.taus, rtol=0, atol=atol)
            and np.allclose(M.mats, N.mats, rtol=0, atol=atol)
            and np.allclose(M.breakpoints, N.breakpoints, rtol=0, atol=atol)
            and np.allclose(M.pieces, N.pieces, rtol=0, atol=atol))
