"""Method-of-steps integration of ``x(t) = int dM(theta) x(t + theta)`` on a
uniform grid, plus empirical decay-rate fitting."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .measure import MatrixNBV, check_wellposed

GRID_SNAP = 1e-9


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Samples of ``x`` at ``t = -1, -1 + h, ..., T``.

    ``window_t[k]`` is the right end of the unit window whose sup norm is
    ``window_norms[k]``.
    """

    h: float
    n: int
    t: np.ndarray
    x: np.ndarray
    window_t: np.ndarray
    window_norms: np.ndarray
    interpolated: bool

    @property
    def T(self) -> float:
        return float(self.t[-1])


@dataclass(frozen=True)
class Stencil:
    weights: np.ndarray  # (n + 1, d, d); row j multiplies x(t - j h)
    interpolated: bool


def _add_linear_cell(W: np.ndarray, n: int, C: np.ndarray, a: float, b: float):
    """Exact integral of ``C x`` over ``[a, b]`` for the piecewise-linear interpolant of ``x``."""
    h = 1.0 / n
    ia = int(math.floor((a + 1.0) * n + GRID_SNAP))
    ib = int(math.ceil((b + 1.0) * n - GRID_SNAP))
    for i in range(max(ia, 0), min(ib, n)):
        lo_node = -1.0 + i * h
        u, v = max(a, lo_node), min(b, lo_node + h)
        if v <= u:
            continue
        # barycentric coordinates of u and v inside the cell
        pu, pv = (u - lo_node) / h, (v - lo_node) / h
        w_right = (v - u) * (pu + pv) / 2
        w_left = (v - u) - w_right
        W[n - i] += w_left * C
        W[n - i - 1] += w_right * C


def build_stencil(M: MatrixNBV, n: int) -> Stencil:
    d = M.dimension
    W = np.zeros((n + 1, d, d))
    interpolated = False
    for tau, A in zip(M.taus, M.mats):
        p = tau * n
        j = int(round(p))
        if abs(p - j) < GRID_SNAP * max(1.0, p):
            W[j] += A
            continue
        interpolated = True
        j = int(math.floor(p))
        frac = p - j
        W[j] += (1 - frac) * A
        W[min(j + 1, n)] += frac * A
    if M.has_density:
        bps = M.breakpoints
        for j in range(M.n_pieces):
            a, b = bps[j], bps[j + 1]
            for edge in (a, b):
                q = (edge + 1.0) * n
                if abs(q - round(q)) > GRID_SNAP * max(1.0, q):
                    interpolated = True
            _add_linear_cell(W, n, M.pieces[j], a, b)
    return Stencil(W, interpolated)


def _grid_samples(phi0, n: int, d: int) -> np.ndarray:
    theta = np.linspace(-1.0, 0.0, n + 1)
    if callable(phi0):
        vals = np.array([np.atleast_1d(phi0(th)) for th in theta], dtype=float)
    else:
        vals = np.array(phi0, dtype=float)
    vals = vals.reshape(n + 1, -1)
    if vals.shape[1] != d:
        raise ValueError(f"initial condition has {vals.shape[1]} components, expected {d}")
    return vals


def _implicit_solve(W0: np.ndarray, rest: np.ndarray) -> np.ndarray:
    if not np.any(W0):
        return rest
    return np.linalg.solve(np.eye(len(W0)) - W0, rest)


def project_initial(M: MatrixNBV, phi0, n: int) -> np.ndarray:
    """``phi0`` on the grid with ``phi0(0)`` replaced by the quadrature of ``int dM phi0``.

    ``phi0`` is either an ``(n + 1, d)`` array of values at ``theta = -1 + i/n``
    or a callable of ``theta``.  Mass sitting at ``theta = 0`` makes the
    condition implicit; it is solved with ``(I - W_0)``.
    """
    vals = _grid_samples(phi0, n, M.dimension).copy()
    W = build_stencil(M, n).weights
    # row j of the stencil multiplies the grid value at theta = -j/n, i.e. index n - j
    rest = np.einsum("jab,jb->a", W[1:], vals[n - 1::-1])
    vals[n] = _implicit_solve(W[0], rest)
    return vals


def _window_norms(x: np.ndarray, n: int, T: float):
    steps = int(round(T * n))
    ends = np.arange(0, int(math.floor(T + 1e-12)) + 1)
    norms = np.empty(len(ends))
    absx = np.abs(x).max(axis=1)
    for k, e in enumerate(ends):
        hi = n + min(int(e * n), steps)
        norms[k] = absx[hi - n:hi + 1].max()
    return ends.astype(float), norms


def integrate(M: MatrixNBV, phi0, T: float, n: int = 512, project: bool = True) -> Trajectory:
    """Solve forward to time ``T`` with step ``1/n``.

    Off-grid atoms are read by linear interpolation and flagged through
    ``Trajectory.interpolated``.
    """
    if n < 64:
        raise ValueError("grid resolution n must be at least 64")
    if T <= 0:
        raise ValueError("horizon T must be positive")
    wp = check_wellposed(M)
    if not wp.ok:
        raise ValueError(f"system is not well-posed: det(I - A_M) = {wp.det:.3e}")
    d = M.dimension
    st = build_stencil(M, n)
    W = st.weights
    hist = project_initial(M, phi0, n) if project else _grid_samples(phi0, n, d)
    steps = int(round(T * n))
    x = np.empty((n + 1 + steps, d))
    x[: n + 1] = hist
    lags = np.flatnonzero(np.any(W[1:] != 0, axis=(1, 2))) + 1
    Wl = W[lags]
    W0 = W[0]
    implicit = bool(np.any(W0))
    if implicit:
        lu = np.linalg.inv(np.eye(d) - W0)
    for k in range(n + 1, n + 1 + steps):
        rest = np.einsum("jab,jb->a", Wl, x[k - lags])
        x[k] = lu @ rest if implicit else rest
    bad = ~np.all(np.isfinite(x), axis=1)
    if np.any(bad):
        first = int(np.argmax(bad))
        raise FloatingPointError(f"non-finite solution at t = {(first - n) / n:.6g}")
    t = (np.arange(n + 1 + steps) - n) / n
    wt, wn = _window_norms(x, n, steps / n)
    return Trajectory(1.0 / n, n, t, x, wt, wn, st.interpolated)


def fit_decay_rate(traj: Trajectory, burn_in_fraction: float = 0.5) -> float:
    """Least-squares slope of ``ln ||x_t||_inf`` over unit windows in ``[burn_in T, T]``."""
    if not 0 <= burn_in_fraction < 1:
        raise ValueError("burn_in_fraction must lie in [0, 1)")
    if not np.any(traj.window_norms > 0) and not np.any(traj.x):
        return -math.inf
    T = traj.T
    sel = traj.window_t >= burn_in_fraction * T
    t, v = traj.window_t[sel], traj.window_norms[sel]
    tiny = np.flatnonzero(v < 1e-300)
    if len(tiny):
        if tiny[0] == 0:
            return -math.inf
        t, v = t[: tiny[0]], v[: tiny[0]]
    if len(t) < 4:
        raise ValueError("need at least 4 unit windows after burn-in")
    slope, _ = np.polyfit(t, np.log(v), 1)
    return float(slope)
