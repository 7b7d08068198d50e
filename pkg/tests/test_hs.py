import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from distdelay.hs import (HypothesisError, PhaseAssignment, _embed_phases, build_destabilizer,
                          check_disk_vs_torus, estimate_rho_hs, make_bins, maximize_on_torus,
                          rho_of_phases, sample_strong_stability, spectral_radius)
from distdelay.measure import Binning, MatrixNBV, pushforward, total_mass, total_variation
from distdelay.spectrum import StripQuery, certified_growth_bound, default_query, spectral_abscissa
from systems import random_system, systems


def grid_max(B, n=512):
    """Exhaustive torus grid with the first phase pinned to 0."""
    B = B[np.any(B != 0, axis=(1, 2))]
    K = len(B)
    axes = np.meshgrid(*([np.arange(n) * 2 * np.pi / n] * (K - 1)), indexing="ij")
    th = np.stack([np.zeros_like(axes[0]), *axes], axis=-1).reshape(-1, K)
    T = np.einsum("nk,kab->nab", np.exp(1j * th), B)
    return float(spectral_radius(T).max())


def test_rho_of_phases_examples():
    rng = np.random.default_rng(0)
    M = random_system(rng, d=3)
    pa = make_bins(M)
    assert rho_of_phases(M, pa) == pytest.approx(
        np.abs(np.linalg.eigvals(total_mass(M))).max(), abs=1e-12)

    S = MatrixNBV.build(1, [(0.3, [[0.4]]), (0.8, [[-0.25]])])
    pa = make_bins(S)
    pa = pa.with_phases(np.where(pa.bin_matrices[:, 0, 0] < 0, np.pi, 0.0))
    assert rho_of_phases(S, pa) == pytest.approx(0.65, abs=1e-15)

    D = MatrixNBV.build(2, [(0.3, np.diag([0.4, 0.1])), (0.8, np.diag([0.3, 0.2]))])
    assert rho_of_phases(D, make_bins(D)) == pytest.approx(0.7, abs=1e-15)


def test_bins_partition_mass():
    rng = np.random.default_rng(1)
    for _ in range(10):
        M = random_system(rng)
        pa = make_bins(M, M.n_atoms + 11)
        assert len(pa.bins) == M.n_atoms + 11
        np.testing.assert_allclose(pa.bin_matrices.sum(axis=0), total_mass(M), atol=1e-13)
    with pytest.raises(ValueError):
        make_bins(MatrixNBV.build(1, [(0.5, [[1.0]]), (0.7, [[1.0]])]), 1)


def test_scalar_exact():
    est = estimate_rho_hs(MatrixNBV.build(1, [(0.2, [[0.3]]), (0.9, [[0.4]])]))
    assert est.lower == est.upper == pytest.approx(0.7, abs=1e-15)
    rng = np.random.default_rng(2)
    for _ in range(5):
        M = random_system(rng, d=1)
        est = estimate_rho_hs(M)
        assert est.lower == est.upper == pytest.approx(total_variation(M), abs=1e-12)


def test_diagonal_decouples():
    a, c = [0.4, -0.3, 0.2], [0.1, 0.5, -0.45]
    D = MatrixNBV.build(2, [(t, np.diag([x, y])) for t, x, y in zip((0.2, 0.5, 0.9), a, c)])
    est = estimate_rho_hs(D)
    expected = max(np.abs(a).sum(), np.abs(c).sum())
    assert est.lower == pytest.approx(expected, abs=1e-9)
    assert grid_max(make_bins(D).bin_matrices, 64) <= est.lower + 1e-12


def test_zero_measure():
    est = estimate_rho_hs(MatrixNBV.zero(2))
    assert est.lower == est.upper == 0.0


def test_sandwich_and_brute_force():
    rng = np.random.default_rng(3)
    for _ in range(4):
        d = 2
        atoms = [(t, rng.normal(0, 0.5, (d, d))) for t in (0.3, 0.7)]
        M = MatrixNBV.build(d, atoms)
        est = estimate_rho_hs(M)
        assert est.lower <= est.upper + 1e-12
        assert abs(est.lower - grid_max(make_bins(M).bin_matrices, 2048)) <= 1e-6


@settings(max_examples=15, deadline=None)
@given(systems(d=2, max_atoms=2, max_pieces=1), st.floats(-3, 3).filter(lambda c: abs(c) > 1e-3))
def test_scaling_equivariance(M, c):
    pa = make_bins(M).with_phases(np.linspace(0, 5, len(make_bins(M).bins)))
    scaled = PhaseAssignment(pa.bins, pa.phases, c * pa.bin_matrices)
    assert rho_of_phases(None, scaled) == pytest.approx(abs(c) * rho_of_phases(None, pa),
                                                        rel=1e-12, abs=1e-14)
    lo = estimate_rho_hs(M, restarts=2).lower
    lo_c = estimate_rho_hs(M.scaled(c), restarts=2).lower
    assert lo_c == pytest.approx(abs(c) * lo, rel=1e-7, abs=1e-12)


def test_refinement_monotone():
    rng = np.random.default_rng(4)
    for _ in range(5):
        M = random_system(rng, d=2, max_atoms=2, max_pieces=2)
        m = len(M.breakpoints) - 1 if M.has_density else 1
        coarse_bins = make_bins(M, per_piece=[2] * m)
        fine_bins = make_bins(M, per_piece=[6] * m)
        coarse = estimate_rho_hs(M, bins=coarse_bins)
        embedded = _embed_phases(coarse.witness, fine_bins)
        # a coarse phase function is also a fine one, with the same value
        assert rho_of_phases(M, fine_bins.with_phases(embedded)) == pytest.approx(
            coarse.lower, abs=1e-12)
        fine = estimate_rho_hs(M, bins=fine_bins)
        assert fine.lower >= coarse.lower - 1e-10


def test_disk_vs_torus():
    B = np.array([[[0.0, 1.0], [0.0, 0.0]], [[0.0, 0.0], [1.0, 0.0]]])
    M = MatrixNBV.build(2, [(0.4, B[0]), (0.8, B[1])])
    rep = check_disk_vs_torus(M, samples=5000)
    assert rep.ok and rep.max_violation <= 1e-6
    assert rep.torus_value == pytest.approx(grid_max(B, 256), abs=1e-9)
    assert rep.torus_value == pytest.approx(1.0, abs=1e-12)
    value, _, _ = maximize_on_torus(np.zeros((3, 2, 2)))
    assert value == 0.0


def test_destabilizer_scalar():
    M = MatrixNBV.build(1, [(0.5, [[0.6]]), (0.25, [[0.6]])])
    phi, diag = build_destabilizer(M, eps=0.05, delta=0.1)
    assert isinstance(phi, Binning)
    assert diag.rho0 == pytest.approx(1.2, abs=1e-12)
    assert phi.sup_distance() < 0.05
    assert all(t > 0.05 / 8 for t in diag.taus)
    Mp = pushforward(M, phi)
    q = default_query(Mp)
    q = StripQuery(q.re_min, q.re_max, max(q.im_max, diag.im_max))
    assert spectral_abscissa(Mp, q).abscissa >= math.log(1.2) - 0.1 - 1e-3


def test_destabilizer_coarse_eps_keeps_windows():
    M = MatrixNBV.build(1, [(0.5, [[0.7]]), (0.9, [[-0.6]])])
    phi, diag = build_destabilizer(M, eps=0.5, delta=0.1)
    assert phi.sup_distance() < 0.5
    assert min(diag.taus) > 1 / 16


def test_destabilizer_refuses_below_one():
    M = MatrixNBV.build(1, [(0.5, [[0.5]]), (0.25, [[0.4]])])
    with pytest.raises(HypothesisError, match="not met"):
        build_destabilizer(M, eps=0.05, delta=0.1)


def test_sampling_small_variation():
    rng = np.random.default_rng(6)
    M = random_system(rng, d=2, max_atoms=3, max_pieces=2)
    M = M.scaled(0.5 / total_variation(M))
    rep = sample_strong_stability(M, eps=0.1, trials=6, seed=1)
    assert rep.radius_consistent and not rep.skipped
    for t in rep.trials:
        assert t["sup_distance"] < 0.1
        assert t["abscissa"] <= math.log(0.5) + 1e-9
    again = sample_strong_stability(M, eps=0.1, trials=6, seed=1)
    assert [t["phi_digest"] for t in again.trials] == [t["phi_digest"] for t in rep.trials]


def test_sampling_tiny_eps_recovers_abscissa():
    M = MatrixNBV.build(1, [(0.5, [[0.5]]), (1.0, [[0.25]])])
    rep = sample_strong_stability(M, eps=1e-9, trials=1, families=("piecewise_linear",))
    assert rep.max_abscissa == pytest.approx(spectral_abscissa(M).abscissa, abs=1e-6)


def test_sampling_finds_fragility():
    # 0.6 at 0.5 and -0.6 at 1.0: stable as given, rho_HS = 1.2
    M = MatrixNBV.build(1, [(0.5, [[0.6]]), (1.0, [[-0.6]])])
    assert spectral_abscissa(M).abscissa < 0
    rep = sample_strong_stability(M, eps=0.05, trials=30, seed=0, families=("binning",))
    assert not rep.radius_consistent or rep.rho_lower >= 1
    assert rep.max_abscissa > 0
