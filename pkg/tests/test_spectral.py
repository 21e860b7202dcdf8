import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gapforge.errors import BracketError, ConvergenceError
from gapforge.gap_operators import assemble, assemble_Tc, symmetrizer
from gapforge.gluon_models import range_model, simplest
from gapforge.quadrature import radial_grid
from gapforge.spectral import (SpectralResult, critical_coupling, kernel_family, lambda_for,
                               log_exponent, optimal_weight, spectral_radius, tc_spectrum)


@pytest.fixture(scope="module")
def toy_spec(toy_asm):
    return tc_spectrum(toy_asm)


def test_two_by_two():
    res = spectral_radius(np.array([[2.0, 1.0], [1.0, 2.0]]))
    assert res.lambda_max == pytest.approx(3.0, rel=1e-12)
    assert np.allclose(res.eigenvector, [1.0, 1.0])


def test_toy_lambda_at_074(toy_spec):
    # the simplest kernel is linear in gamma_m; toy_asm is built at gamma_m = 1
    assert 0.74 * toy_spec.lambda_max == pytest.approx(1.0, abs=0.02)


def test_kernel_scaling_scales_lambda(toy_asm, toy_spec):
    m = assemble_Tc(toy_asm)
    res = spectral_radius(2.5 * m, sym=symmetrizer(toy_asm))
    assert res.lambda_max == pytest.approx(2.5 * toy_spec.lambda_max, rel=1e-10)


def test_perron_vector_positive_and_residual(toy_asm, toy_spec):
    assert np.all(toy_spec.eigenvector > 0)
    m = assemble_Tc(toy_asm)
    t = toy_spec.eigenvector
    res = np.max(np.abs(m @ t - toy_spec.lambda_max * t)) / np.max(t)
    assert res < 1e-10 * toy_spec.lambda_max


def test_row_sum_bounds(toy_asm, toy_spec):
    rows = assemble_Tc(toy_asm).sum(axis=1)
    assert rows.min() <= toy_spec.lambda_max <= rows.max()


def test_random_restarts_agree(toy_asm, toy_spec, rng):
    m = assemble_Tc(toy_asm)
    for _ in range(3):
        res = spectral_radius(m, seed_vector=rng.random(m.shape[0]) + 1e-3,
                              sym=symmetrizer(toy_asm))
        assert res.lambda_max == pytest.approx(toy_spec.lambda_max, rel=1e-8)


def test_grid_refinement_stable(toy_unit, toy_spec):
    fine = lambda_for(toy_unit, radial_grid(1e-4, 1e3, 800))
    assert abs(fine.lambda_max / toy_spec.lambda_max - 1) < 0.005


def test_reducible_rejected():
    with pytest.raises(ValueError):
        spectral_radius(np.array([[1.0, 0.0], [0.5, 1.0]]))
    with pytest.raises(ValueError):
        spectral_radius(np.array([[1.0, -1.0], [1.0, 1.0]]))


def test_non_convergence_reported():
    m = np.array([[0.0, 1.0], [1.0, 0.0]])     # eigenvalues +1 and -1: no dominance
    with pytest.raises(ConvergenceError) as err:
        spectral_radius(m, seed_vector=[1.0, 2.0], max_iter=50)
    assert err.value.residual > 0


def test_critical_toy(toy_unit, toy_grid):
    c, info = critical_coupling(kernel_family(toy_unit, toy_grid, "gamma_m"), (0.5, 1.0))
    assert c == pytest.approx(0.74, abs=0.02)
    assert info["monotone"]


def test_critical_manufactured():
    base = 1.37

    def fam(c):
        return SpectralResult(base * c, np.ones(2), 1, 0.0)
    c, _ = critical_coupling(fam, (0.1, 2.0), rtol=1e-8)
    assert c == pytest.approx(1 / base, rel=1e-7)


def test_critical_bracket_failure(toy_unit, toy_grid):
    fam = kernel_family(toy_unit, toy_grid, "gamma_m")
    with pytest.raises(BracketError, match="do not bracket"):
        critical_coupling(fam, (0.1, 0.2))


def test_critical_range_model(range_critical):
    c, info, res = range_critical
    assert c == pytest.approx(0.70, abs=0.05)
    assert info["monotone"]
    rbar = res.lambda_max / res.eigenvector
    assert np.all(np.diff(rbar) >= -1e-9 * rbar.max())


def test_control_validation(toy_unit, range_grid):
    with pytest.raises(ValueError):
        kernel_family(toy_unit, range_grid, "D_over_omega2")
    with pytest.raises(ValueError):
        kernel_family(range_model(), range_grid, "gamma_m")
    with pytest.raises(ValueError):
        kernel_family(toy_unit, range_grid, "omega")


def test_optimal_weight_constant_vector():
    res = SpectralResult(2.0, np.full(3, 4.0), 1, 0.0, np.array([1.0, 2.0, 3.0]))
    w = optimal_weight(res)
    assert np.allclose(w(np.array([1.0, 2.5, 3.0])), 0.5)


def test_optimal_weight_flattens_rows(toy_asm, toy_spec):
    from gapforge.gap_operators import weighted_matrix, with_weight
    rows = weighted_matrix(with_weight(toy_asm, optimal_weight(toy_spec))).sum(axis=1)
    assert np.allclose(rows, toy_spec.lambda_max, rtol=1e-8)


def test_rbar_log_exponent_past_critical(toy_grid, toy_spec):
    # infinite-domain asymptotic r ~ log^(gamma_m/lambda); on the truncated grid the
    # Perron vector follows the exponentially decaying branch instead (expected to fail)
    rbar = np.asarray(optimal_weight(toy_spec).table_r)
    expo = log_exponent(toy_grid.nodes, rbar, (4, 7))
    assert expo == pytest.approx(1.0 / toy_spec.lambda_max, rel=0.10)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 8), st.integers(0, 10_000))
def test_property_power_iteration_matches_eig(n, seed):
    g = np.random.default_rng(seed)
    m = g.uniform(0.05, 1.0, (n, n))
    res = spectral_radius(m)
    ref = np.max(np.abs(np.linalg.eigvals(m)))
    assert res.lambda_max == pytest.approx(ref, rel=1e-9)
    assert np.all(res.eigenvector > 0)
    r = m.sum(axis=1)
    assert r.min() * (1 - 1e-12) <= res.lambda_max <= r.max() * (1 + 1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(3, 6), st.integers(0, 10_000), st.floats(0.1, 10))
def test_property_scaling(n, seed, s):
    m = np.random.default_rng(seed).uniform(0.05, 1.0, (n, n))
    assert spectral_radius(s * m).lambda_max == pytest.approx(
        s * spectral_radius(m).lambda_max, rel=1e-9)
