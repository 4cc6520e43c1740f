import numpy as np
import pytest

from spdemle.kernels import bump_phi
from spdemle.spectral import (Grid1D, SpectralBasis, apply_fractional_laplacian,
                              check_scaling_identity, dirichlet_eigenvalues,
                              inverse_sine_transform, second_difference, sine_transform)


def test_eigenvalue_law_exact():
    lam = dirichlet_eigenvalues(5)
    k = np.arange(1, 6, dtype=float)
    assert np.array_equal(lam, np.pi**2 * k**2)


def test_eigenvalue_examples():
    assert dirichlet_eigenvalues(1)[0] == pytest.approx(9.869604401089358, rel=1e-15)
    lam = dirichlet_eigenvalues(3)
    assert lam[1] / lam[0] == 4.0
    assert lam[2] / lam[0] == 9.0


def test_eigenvalue_rejects_zero_modes():
    with pytest.raises(ValueError):
        dirichlet_eigenvalues(0)


def test_eigenfunctions_vanish_at_endpoints():
    basis = SpectralBasis(8)
    for k in (1, 3, 8):
        phi = basis.eigenfunction(k)
        assert abs(phi(0.0)) < 1e-12 and abs(phi(1.0)) < 1e-12


def test_eigenfunction_orthonormality_on_grid():
    grid = Grid1D(256)
    basis = SpectralBasis(64)
    mat = basis.eigenfunction_matrix(grid.interior)
    gram = grid.step * mat @ mat.T
    assert np.max(np.abs(gram - np.eye(64))) < 1e-10


def test_fractional_power_zero_is_identity(rng):
    c = rng.standard_normal(20)
    assert np.array_equal(apply_fractional_laplacian(c, 0.0), c)


def test_fractional_power_single_mode():
    e1 = np.zeros(4)
    e1[0] = 1.0
    out = apply_fractional_laplacian(e1, 1.0)
    assert out[0] == pytest.approx(np.pi**2, rel=1e-15)
    assert np.all(out[1:] == 0.0)


def test_fractional_power_inverse_pair(rng):
    c = rng.standard_normal(64)
    back = apply_fractional_laplacian(apply_fractional_laplacian(c, 0.7), -0.7)
    assert np.max(np.abs(back - c)) < 1e-12 * np.max(np.abs(c))


def test_fractional_power_group_law(rng):
    c = rng.standard_normal(64)
    for s, t in [(0.3, 0.9), (-0.5, 1.5), (2.0, -0.25)]:
        two_step = apply_fractional_laplacian(apply_fractional_laplacian(c, s), t)
        one_step = apply_fractional_laplacian(c, s + t)
        assert np.max(np.abs(two_step - one_step)) < 1e-12 * np.max(np.abs(one_step))


def test_sine_transform_picks_out_eigenfunction():
    grid = Grid1D(128)
    basis = SpectralBasis(32)
    field = np.sqrt(2.0) * np.sin(2 * np.pi * grid.nodes)
    coeffs = sine_transform(field, grid, 32)
    expected = np.zeros(32)
    expected[1] = 1.0
    assert np.max(np.abs(coeffs - expected)) < 1e-12


def test_sine_transform_zero_field():
    grid = Grid1D(64)
    assert np.all(sine_transform(grid.zeros(), grid) == 0.0)


def test_sine_transform_round_trip_512(rng):
    grid = Grid1D(512)
    field = grid.zeros()
    field[1:-1] = rng.standard_normal(511)
    back = inverse_sine_transform(sine_transform(field, grid), grid)
    assert np.max(np.abs(back - field)) < 1e-12


def test_sine_transform_round_trip_4096(rng):
    grid = Grid1D(4096)
    field = grid.zeros()
    field[1:-1] = rng.standard_normal(4095)
    back = inverse_sine_transform(sine_transform(field, grid), grid)
    assert np.max(np.abs(back - field)) < 1e-10


def test_naive_transform_is_the_oracle_for_the_fast_path(rng):
    grid = Grid1D(200)
    field = grid.zeros()
    field[1:-1] = rng.standard_normal(199)
    fast = sine_transform(field, grid, 150)
    naive = sine_transform(field, grid, 150, naive=True)
    assert np.max(np.abs(fast - naive)) < 1e-11
    coeffs = rng.standard_normal(150)
    fast_inv = inverse_sine_transform(coeffs, grid)
    naive_inv = inverse_sine_transform(coeffs, grid, naive=True)
    assert np.max(np.abs(fast_inv - naive_inv)) < 1e-11


def test_parseval(rng):
    grid = Grid1D(256)
    field = grid.zeros()
    field[1:-1] = rng.standard_normal(255)
    coeffs = sine_transform(field, grid)
    assert np.sum(coeffs**2) == pytest.approx(grid.step * np.sum(field[1:-1] ** 2),
                                              rel=1e-12)


def test_transform_dimension_mismatch():
    grid = Grid1D(64)
    with pytest.raises(ValueError):
        sine_transform(np.zeros(64), grid)
    with pytest.raises(ValueError):
        sine_transform(grid.zeros(), grid, mode_count=64)
    with pytest.raises(ValueError):
        inverse_sine_transform(np.zeros(64), grid)


def test_scaling_identity_refinement_order():
    discrepancies = []
    for m in (250, 500, 1000):
        discrepancies.append(check_scaling_identity(bump_phi, 0.1, 0.4, Grid1D(m)))
    order1 = np.log2(discrepancies[0] / discrepancies[1])
    order2 = np.log2(discrepancies[1] / discrepancies[2])
    assert order1 >= 1.8 and order2 >= 1.8
    # successive refinement ratios close to 4
    assert discrepancies[0] / discrepancies[1] == pytest.approx(4.0, rel=0.2)


def test_scaling_identity_zero_profile():
    assert check_scaling_identity(lambda x: np.zeros_like(x), 0.1, 0.4, Grid1D(100)) == 0.0


def test_scaling_identity_delta_one():
    # delta = 1 makes both sides the same finite-difference stencil
    scaled = lambda x: bump_phi(4.0 * x)
    value = check_scaling_identity(scaled, 1.0, 0.5, Grid1D(256), support_radius=0.25)
    assert value < 1e-12


def test_scaling_identity_support_violation():
    with pytest.raises(ValueError):
        check_scaling_identity(bump_phi, 0.5, 0.4, Grid1D(100))


def test_second_difference_of_quadratic():
    grid = Grid1D(50)
    values = grid.nodes**2
    lap = second_difference(values, grid.step)
    assert np.max(np.abs(lap[1:-1] - 2.0)) < 1e-8
