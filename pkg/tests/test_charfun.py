import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from distdelay.charfun import delta_batch, eval_delta, eval_delta_perturbed, eval_L
from distdelay.measure import (Bin, Binning, MatrixNBV, PiecewiseLinear, diff, op_norm,
                               total_mass, total_variation)
from systems import random_system, systems

complexes = st.builds(complex, st.floats(-3, 3), st.floats(-30, 30))


def test_L_at_zero_is_total_mass():
    M = random_system(np.random.default_rng(2), d=3)
    np.testing.assert_allclose(eval_L(M, 0.0), total_mass(M), atol=1e-15)


def test_scalar_closed_forms():
    M = MatrixNBV.build(1, [(1.0, [[0.7]])])
    for s in (-1.3, 0.0, 2.5):
        assert eval_L(M, s)[0, 0] == pytest.approx(0.7 * np.exp(-s), rel=1e-15)
    D = MatrixNBV.build(1, [], [-1.0, 0.0], [[[1.0]]])
    assert eval_L(D, 1.0)[0, 0].real == pytest.approx(1 - np.exp(-1), rel=1e-15)


def _series_integral(a, b, s, terms=30):
    out, fact = 0.0, 1.0
    for n in range(terms):
        fact *= n + 1
        out += s**n * (b ** (n + 1) - a ** (n + 1)) / fact
    return out


def test_density_integral_near_zero():
    D = MatrixNBV.build(1, [], [-1.0, -0.3, 0.0], [[[1.0]], [[2.0]]])
    for s in (0.0, 1e-10, -3e-9, 1e-8, 1e-7, 1e-3, -0.5):
        exact = _series_integral(-1.0, -0.3, s) + 2 * _series_integral(-0.3, 0.0, s)
        assert eval_L(D, s)[0, 0].real == pytest.approx(exact, rel=1e-14)


def test_delta_root_of_single_atom():
    M = MatrixNBV.build(1, [(1.0, [[0.5]])])
    assert abs(eval_delta(M, -np.log(2)).delta) < 1e-15


def test_delta_limit_at_large_s():
    rng = np.random.default_rng(4)
    for _ in range(10):
        d = int(rng.integers(1, 4))
        taus = rng.uniform(0.5, 1.0, 3)
        M = MatrixNBV.build(d, [(t, rng.normal(size=(d, d))) for t in taus])
        M = M.scaled(10.0 / total_variation(M))
        assert abs(eval_delta(M, 50.0).delta - 1) < 1e-10
    # a density touching 0 only decays like 1/s
    D = MatrixNBV.build(1, [], [-1.0, 0.0], [[[0.5]]])
    for s in (50.0, 500.0, 5000.0):
        assert abs(eval_delta(D, s).delta - 1) == pytest.approx(0.5 / s, rel=1e-12)
    A = np.array([[0.5, 0.1], [0.0, 0.2]])
    M = MatrixNBV.build(2, [(0.0, A), (0.4, np.eye(2))])
    assert eval_delta(M, 60.0).delta == pytest.approx(np.linalg.det(np.eye(2) - A), abs=1e-10)


def test_perturbed_delta_examples():
    M = MatrixNBV.build(1, [(0.5, [[0.8]])])
    shift = PiecewiseLinear(np.array([[-1.0, -1.0], [-0.5, -0.4], [0.0, 0.0]]))
    s = 0.3 + 2j
    assert eval_delta_perturbed(M, shift, s) == pytest.approx(1 - 0.8 * np.exp(-0.4 * s))
    assert eval_delta_perturbed(M, PiecewiseLinear.identity(), s) == eval_delta(M, s).delta
    D = MatrixNBV.build(1, [], [-1.0, 0.0], [[[1.0]]])
    phi = Binning((Bin(-1.0, -0.5, -0.75), Bin(-0.5, 0.0, -0.25)))
    assert abs(eval_delta(D, 0.0).delta) < 1e-15
    assert abs(eval_delta_perturbed(D, phi, 0.0)) < 1e-15


@settings(max_examples=60, deadline=None)
@given(systems(), complexes)
def test_derivative_matches_central_difference(M, s):
    h = 1e-5
    e = eval_delta(M, s)
    fd = (eval_delta(M, s + h).delta - eval_delta(M, s - h).delta) / (2 * h)
    assert abs(e.delta_prime - fd) <= 1e-6 * (1 + abs(e.delta_prime))


@settings(max_examples=60, deadline=None)
@given(systems(), complexes)
def test_conjugate_symmetry(M, s):
    a = eval_delta(M, s).delta
    b = eval_delta(M, s.conjugate()).delta
    assert abs(b - a.conjugate()) <= 1e-12 * (1 + abs(a))


@settings(max_examples=60, deadline=None)
@given(systems(), st.floats(0, 3), st.floats(-40, 40))
def test_L_bounded_by_variation(M, x, y):
    assert op_norm(eval_L(M, complex(x, y))) <= total_variation(M) * (1 + 1e-12) + 1e-15


def test_delta_is_determinant():
    rng = np.random.default_rng(5)
    M = random_system(rng, d=3)
    s = np.array([0.1 + 1j, -2 + 7j, 3.0])
    D, _, L = delta_batch(M, s)
    for k in range(3):
        assert D[k] == pytest.approx(np.linalg.det(np.eye(3) - L[k]), rel=1e-12)


def test_derivative_at_singular_point():
    # I - L(s) is exactly singular at the root; the cofactor branch takes over
    M = MatrixNBV.build(2, [(1.0, np.diag([0.5, 0.25]))])
    s = -np.log(2)
    e = eval_delta(M, s)
    exact = 0.5 * np.exp(-s) * (1 - 0.25 * np.exp(-s))
    assert e.delta_prime == pytest.approx(exact, rel=1e-10)


def test_delta_lipschitz_in_variation():
    M = MatrixNBV.build(1, [(0.5, [[0.6]]), (1.0, [[-0.3]])], [-1, 0], [[[0.2]]])
    ys = np.linspace(-50, 50, 401)
    ratios = []
    for n in (10, 100, 1000):
        N = MatrixNBV.build(1, [(0.5 + 1 / n, [[0.6]]), (1.0, [[-0.3 + 1 / n]])], [-1, 0],
                            [[[0.2]]])
        var = total_variation(diff(M, N))
        s = 0.1 + 1j * ys
        gap = np.abs(delta_batch(M, s, False)[0] - delta_batch(N, s, False)[0]).max()
        ratios.append(gap / var)
    assert max(ratios) < 2.0
