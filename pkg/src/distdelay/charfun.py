"""Characteristic function ``Delta(s) = det(I - L(s))`` with
``L(s) = int_{-1}^0 e^{s theta} dM(theta)`` and its derivative, in closed form."""

from __future__ import annotations

from dataclasses import dataclass
from math import factorial

import numpy as np

from .measure import MatrixNBV, Perturbation, pushforward

SERIES_RADIUS = 1e-8
# |s| below this uses the power series for the first moment integral, whose
# closed form cancels like 1/s^2
_MOMENT_SERIES_RADIUS = 1.0
_MOMENT_TERMS = 24


@dataclass(frozen=True)
class CharEval:
    s: complex
    L: np.ndarray
    delta: complex
    delta_prime: complex


def _density_terms(bps: np.ndarray, s: np.ndarray, derivative: bool):
    """``int e^{s theta}`` and ``int theta e^{s theta}`` over every piece; shapes ``(n, m)``.

    ``e^{s theta}`` is evaluated once per breakpoint and differenced; pieces
    with ``|s w|`` small switch to ``expm1`` to avoid cancellation.
    """
    a, b = bps[:-1][None, :], bps[1:][None, :]
    w = b - a
    s = s[:, None]
    small = np.abs(s) < SERIES_RADIUS
    safe = np.where(small, 1.0, s)
    with np.errstate(over="ignore", invalid="ignore"):
        E = np.exp(safe * bps[None, :])
        I = (E[:, 1:] - E[:, :-1]) / safe
        sw = safe * w
        fix = np.abs(sw) < 0.5
        if fix.any():
            rows, cols = np.nonzero(fix)
            I[fix] = E[rows, cols] * np.expm1(sw[fix]) / safe[rows, 0]
    I = np.where(small, w + s * (b**2 - a**2) / 2, I)
    if not derivative:
        return I, None
    with np.errstate(over="ignore", invalid="ignore"):
        J = (b * E[:, 1:] - a * E[:, :-1] - I) / safe
    # the closed form cancels like 1/s^2 near 0
    near = np.flatnonzero(np.abs(s[:, 0]) < _MOMENT_SERIES_RADIUS)
    if len(near):
        sn = s[near]
        series = np.zeros((len(near), w.shape[1]), dtype=complex)
        spow = np.ones_like(sn)
        for n in range(_MOMENT_TERMS):
            series = series + spow / factorial(n) * (b ** (n + 2) - a ** (n + 2)) / (n + 2)
            spow = spow * sn
        J[near] = series
    return I, J


def _contract(w: np.ndarray, mats: np.ndarray) -> np.ndarray:
    """``sum_k w[n, k] mats[k]`` as one matrix product; shape ``(n, d, d)``."""
    d = mats.shape[-1]
    return (w @ mats.reshape(len(mats), d * d)).reshape(len(w), d, d)


def _L_batch(M: MatrixNBV, s: np.ndarray, derivative: bool = False):
    s = np.asarray(s, dtype=complex).reshape(-1)
    d = M.dimension
    L = np.zeros((len(s), d, d), dtype=complex)
    dL = np.zeros_like(L) if derivative else None
    if M.n_atoms:
        e = np.exp(-np.outer(s, M.taus))
        L += _contract(e, M.mats)
        if derivative:
            dL += _contract(e * (-M.taus)[None, :], M.mats)
    if M.has_density:
        I, J = _density_terms(M.breakpoints, s, derivative)
        L += _contract(I, M.pieces)
        if derivative:
            dL += _contract(J, M.pieces)
    return L, dL


def eval_L(M: MatrixNBV, s):
    """``L(s)``; a ``(d, d)`` matrix for scalar ``s`` or a stack for arrays."""
    L, _ = _L_batch(M, s)
    if np.ndim(s) == 0:
        return L[0]
    return L.reshape(np.shape(s) + L.shape[-2:])


def _row_replacement_derivative(B: np.ndarray, dB: np.ndarray) -> np.ndarray:
    # d/ds det B = sum_i det(B with row i replaced by row i of B')
    out = np.zeros(B.shape[0], dtype=complex)
    for i in range(B.shape[-1]):
        Bi = B.copy()
        Bi[:, i, :] = dB[:, i, :]
        out += np.linalg.det(Bi)
    return out


def _small_det(B: np.ndarray, dB):
    """Closed-form determinant and its derivative for ``d <= 2``."""
    if B.shape[-1] == 1:
        return B[:, 0, 0], None if dB is None else dB[:, 0, 0]
    a, b, c, e = B[:, 0, 0], B[:, 0, 1], B[:, 1, 0], B[:, 1, 1]
    delta = a * e - b * c
    if dB is None:
        return delta, None
    da, db, dc, de = dB[:, 0, 0], dB[:, 0, 1], dB[:, 1, 0], dB[:, 1, 1]
    return delta, da * e + a * de - db * c - b * dc


def delta_batch(M: MatrixNBV, s, derivative: bool = True):
    """Vectorized ``(Delta, Delta', L)`` over an array of ``s``."""
    s = np.asarray(s, dtype=complex).reshape(-1)
    L, dL = _L_batch(M, s, derivative)
    B = np.eye(M.dimension) - L
    if M.dimension <= 2:
        return (*_small_det(B, None if dL is None else -dL), L)
    delta = np.linalg.det(B)
    if not derivative:
        return delta, None, L
    dB = -dL
    scale = (1.0 + np.abs(B).max(axis=(1, 2))) ** M.dimension
    singular = np.abs(delta) < 1e-8 * scale
    dprime = np.empty(len(s), dtype=complex)
    ok = ~singular
    if np.any(ok):
        X = np.linalg.solve(B[ok], dB[ok])
        dprime[ok] = delta[ok] * np.trace(X, axis1=1, axis2=2)
    if np.any(singular):
        dprime[singular] = _row_replacement_derivative(B[singular], dB[singular])
    return delta, dprime, L


def eval_delta(M: MatrixNBV, s: complex) -> CharEval:
    delta, dprime, L = delta_batch(M, [s])
    return CharEval(complex(s), L[0], complex(delta[0]), complex(dprime[0]))


def eval_delta_perturbed(M: MatrixNBV, phi: Perturbation, s: complex) -> complex:
    """Characteristic function of ``phi_* mu_M`` at ``s``."""
    return eval_delta(pushforward(M, phi), s).delta
