import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from distdelay.charfun import eval_L
from distdelay.measure import MatrixNBV, total_variation
from distdelay.simulate import build_stencil, fit_decay_rate, integrate, project_initial
from distdelay.spectrum import certified_growth_bound, commensurate_oracle, spectral_abscissa

LN2 = math.log(2)
HALF = MatrixNBV.build(1, [(1.0, [[0.5]])])


def test_projection_examples():
    n = 64
    zero = project_initial(HALF, np.zeros((n + 1, 1)), n)
    assert not zero.any()
    expo = project_initial(HALF, lambda th: 2.0 ** -th, n)
    assert expo[-1, 0] == pytest.approx(1.0, abs=1e-15)
    ones = project_initial(HALF, np.ones((n + 1, 1)), n)
    assert ones[-1, 0] == 0.5
    np.testing.assert_array_equal(ones[:-1], 1.0)


def test_projection_idempotent_on_grid():
    rng = np.random.default_rng(0)
    M = MatrixNBV.build(2, [(0.25, rng.normal(0, 0.3, (2, 2))), (0.75, rng.normal(0, 0.3, (2, 2)))],
                        [-1.0, -0.5, 0.0], rng.normal(0, 0.3, (2, 2, 2)))
    once = project_initial(M, rng.normal(size=(129, 2)), 128)
    np.testing.assert_allclose(project_initial(M, once, 128), once, atol=1e-15)


def test_projection_with_zero_atom_is_implicit():
    M = MatrixNBV.build(1, [(0.0, [[0.5]]), (1.0, [[0.25]])])
    vals = project_initial(M, np.ones((65, 1)), 64)
    # x(0) = 0.5 x(0) + 0.25
    assert vals[-1, 0] == pytest.approx(0.5)


def test_exact_exponential():
    traj = integrate(HALF, lambda th: 2.0 ** -th, T=20, n=128)
    np.testing.assert_allclose(traj.x[:, 0], 2.0 ** -traj.t, rtol=1e-12, atol=0)
    k1 = np.searchsorted(traj.t, 1.0)
    assert traj.x[k1, 0] == pytest.approx(0.5, abs=1e-14)
    assert fit_decay_rate(traj) == pytest.approx(-LN2, abs=1e-6)
    assert not traj.interpolated


def test_zero_measure_and_zero_trajectory():
    traj = integrate(MatrixNBV.zero(2), lambda th: np.array([1.0, -2.0]), T=8, n=64)
    assert not traj.x[traj.t > -1e-12].any()
    assert fit_decay_rate(traj) == -math.inf


@settings(max_examples=20, deadline=None)
@given(st.floats(-2, 2), st.floats(-2, 2), st.integers(0, 2**16))
def test_linearity(a, b, seed):
    rng = np.random.default_rng(seed)
    M = MatrixNBV.build(2, [(0.5, rng.normal(0, 0.3, (2, 2))), (0.3, rng.normal(0, 0.3, (2, 2)))],
                        [-1.0, 0.0], rng.normal(0, 0.3, (1, 2, 2)))
    p1, p2 = rng.normal(size=(2, 65, 2))
    x1 = integrate(M, p1, T=5, n=64).x
    x2 = integrate(M, p2, T=5, n=64).x
    x12 = integrate(M, a * p1 + b * p2, T=5, n=64).x
    np.testing.assert_allclose(x12, a * x1 + b * x2, atol=1e-12 * (1 + np.abs(x12).max()))


def test_interpolation_flag_and_validation():
    M = MatrixNBV.build(1, [(1 / 3, [[0.5]])])
    assert build_stencil(M, 64).interpolated
    assert not build_stencil(MatrixNBV.build(1, [(0.25, [[0.5]])]), 64).interpolated
    with pytest.raises(ValueError):
        integrate(M, np.ones((33, 1)), T=4, n=32)
    with pytest.raises(ValueError):
        integrate(MatrixNBV.build(1, [(0.0, [[1.0]])]), np.ones((65, 1)), T=4, n=64)


def test_blowup_reported():
    M = MatrixNBV.build(1, [(1 / 64, [[1e30]])])
    with pytest.raises(FloatingPointError, match="non-finite"):
        integrate(M, np.ones((65, 1)), T=2, n=64)


def test_two_atom_rate_matches_oracle():
    M = MatrixNBV.build(1, [(0.5, [[0.5]]), (1.0, [[0.25]])])
    traj = integrate(M, lambda th: 1.0, T=60, n=512)
    assert fit_decay_rate(traj) == pytest.approx(commensurate_oracle(M, 0.5), abs=0.02)


def test_exponential_mode_initial_condition():
    rng = np.random.default_rng(3)
    M = MatrixNBV.build(2, [(0.5, rng.normal(0, 0.4, (2, 2))), (0.25, rng.normal(0, 0.4, (2, 2)))],
                        [-1.0, -0.5, 0.0], rng.normal(0, 0.4, (2, 2, 2)))
    s = spectral_abscissa(M).rightmost
    v = np.linalg.svd(np.eye(2) - eval_L(M, s))[2][-1].conj()
    traj = integrate(M, lambda th: (np.exp(s * th) * v).real, T=60, n=512)
    rate = fit_decay_rate(traj)
    assert rate == pytest.approx(s.real, abs=0.05)
    assert rate <= certified_growth_bound(M) + 0.05


def test_weighted_step_inequality():
    rng = np.random.default_rng(5)
    taus = [0.25, 0.5, 1.0]
    M = MatrixNBV.build(2, [(t, rng.normal(0, 0.3, (2, 2))) for t in taus])
    n, eta = 64, 0.3
    traj = integrate(M, rng.normal(size=(n + 1, 2)), T=6, n=n)
    y = np.exp(eta * traj.t)[:, None] * traj.x
    # y solves the system with atoms A_k e^{eta tau_k}
    M_eta = MatrixNBV.build(2, [(t, A * math.exp(eta * t)) for t, A in zip(M.taus, M.mats)])
    var = total_variation(M_eta, "opinf")
    ynorm = np.abs(y).max(axis=1)
    for k in range(n + 1, len(y)):
        assert ynorm[k] <= var * ynorm[k - n:k].max() * (1 + 1e-12)


def test_refinement_differences_shrink():
    M = MatrixNBV.build(1, [(0.5, [[0.3]])], [-1.0, -0.3, 0.0], [[[0.4]], [[-0.9]]])
    rates = [fit_decay_rate(integrate(M, lambda th: 1.0, T=40, n=n)) for n in (64, 128, 256, 512)]
    gaps = np.abs(np.diff(rates))
    assert np.all(np.diff(gaps) < 0)
    assert rates[-1] == pytest.approx(spectral_abscissa(M).abscissa, abs=0.02)
