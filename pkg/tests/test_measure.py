import numpy as np
import pytest

from spdemle.kernels import phi3_kernel, scale_kernel
from spdemle.measure import (MeasurementSeries, estimate_gamma_from_qv, measure,
                             quadratic_variation)
from spdemle.noise import NoiseModel
from spdemle.simulate import SimConfig, no_nonlinearity, simulate_measured
from spdemle.spectral import Grid1D, second_difference


class _FakeTrajectory:
    def __init__(self, times, values, rng_seed=0):
        self.times = times
        self.values = values
        self.rng_seed = rng_seed


def _eigen_trajectory(grid, k=1, steps=4):
    phi = np.sqrt(2) * np.sin(k * np.pi * grid.nodes)
    phi[0] = phi[-1] = 0.0
    times = np.linspace(0.0, 1.0, steps + 1)
    return _FakeTrajectory(times, np.tile(phi, (steps + 1, 1)))


def test_measure_eigenfunction_pairing(grid500, scaled_default):
    traj = _eigen_trajectory(grid500, k=1)
    series = measure(traj, scaled_default)
    assert np.ptp(series.x_series) < 1e-11 * abs(series.x_series[0])
    ratio = series.xdelta_series / series.x_series
    assert ratio[0] == pytest.approx(-np.pi**2, rel=1e-6)


def test_measure_zero_field(grid500, scaled_default):
    traj = _FakeTrajectory(np.linspace(0, 1, 3), np.zeros((3, 501)))
    series = measure(traj, scaled_default)
    assert np.all(series.x_series == 0.0) and np.all(series.xdelta_series == 0.0)


def test_measure_linearity(grid500, scaled_default, rng):
    times = np.linspace(0, 1, 5)
    x = np.zeros((5, 501))
    y = np.zeros((5, 501))
    x[:, 1:-1] = rng.standard_normal((5, 499))
    y[:, 1:-1] = rng.standard_normal((5, 499))
    sx = measure(_FakeTrajectory(times, x), scaled_default)
    sy = measure(_FakeTrajectory(times, y), scaled_default)
    combo = measure(_FakeTrajectory(times, 2.0 * x + 3.0 * y), scaled_default)
    assert np.allclose(combo.x_series, 2 * sx.x_series + 3 * sy.x_series, rtol=1e-12)
    assert np.allclose(combo.xdelta_series, 2 * sx.xdelta_series + 3 * sy.xdelta_series,
                       rtol=1e-12)


def test_measure_grid_mismatch(scaled_default):
    with pytest.raises(ValueError):
        measure(_FakeTrajectory(np.array([0.0]), np.zeros((1, 100))), scaled_default)


def test_discrete_adjointness(grid500, scaled_default, rng):
    # <X, Lap_h K> = <Lap_h X, K> by summation by parts when both vanish near
    # the boundary
    from spdemle.kernels import bump_phi
    x = bump_phi((grid500.nodes - 0.45) / 0.2)
    k_full = scaled_default.full_samples()
    h = grid500.step
    lhs = h * np.dot(x, second_difference(k_full, h))
    rhs = h * np.dot(second_difference(x, h), k_full)
    scale = max(abs(lhs), abs(rhs), 1e-30)
    assert abs(lhs - rhs) / scale < 1e-8


def test_quadratic_variation_basics():
    x = np.array([0.0, 1.0, -1.0, 0.5])
    assert quadratic_variation(x) == pytest.approx(1 + 4 + 2.25)
    assert quadratic_variation(2 * x) == pytest.approx(4 * quadratic_variation(x))
    with pytest.raises(ValueError):
        quadratic_variation(np.array([1.0]))


def test_quadratic_variation_window_additivity(rng):
    x = rng.standard_normal(101)
    total = quadratic_variation(x)
    assert total == quadratic_variation(x[:51]) + quadratic_variation(x[50:])


def test_quadratic_variation_smooth_path_rate():
    # bounded-variation path: QV decays like dt
    qvs = [quadratic_variation(np.sin(np.linspace(0, 1, n + 1))) for n in (100, 200, 400)]
    assert qvs[0] / qvs[1] == pytest.approx(2.0, rel=0.05)
    assert qvs[1] / qvs[2] == pytest.approx(2.0, rel=0.05)


def test_qv_consistency_linear_white_noise(grid500, scaled_default):
    # Ito isometry: QV / T -> sigma^2 ||K_delta||^2 at N = 1e5
    config = SimConfig(theta=0.01, noise=NoiseModel(0.0, 0.05),
                       nonlinearity=no_nonlinearity(), grid=grid500,
                       time_steps=10**5, initial_condition="zero", rng_seed=77,
                       scheme="spectral_exact")
    series = simulate_measured(config, [scaled_default])[0]
    assert series.b_norm_sq_qv == pytest.approx(series.b_norm_sq_spectral, rel=0.05)


def test_ito_isometry_averaged_over_replications(grid500, scaled_default):
    # desk-scale resolution: N = 1e4, 100 replications, error under 5% on average
    ratios = []
    for r in range(100):
        config = SimConfig(theta=0.01, noise=NoiseModel(0.0, 0.05),
                           nonlinearity=no_nonlinearity(), grid=grid500,
                           time_steps=10**4, initial_condition="zero",
                           rng_seed=3000 + r, scheme="spectral_exact")
        series = simulate_measured(config, [scaled_default])[0]
        ratios.append(series.b_norm_sq_qv / series.b_norm_sq_spectral)
    assert abs(np.mean(ratios) - 1.0) < 0.05


def test_gamma_regression_exact_power_law():
    deltas = np.array([0.05, 0.1, 0.2])
    for gamma in (0.0, 0.5, 1.0):
        qv = 3.7 * deltas ** (4 * gamma)
        gamma_hat, residual = estimate_gamma_from_qv(deltas, qv)
        assert gamma_hat == pytest.approx(gamma, abs=1e-12)
        assert residual < 1e-12


def test_gamma_regression_needs_three_deltas():
    with pytest.raises(ValueError):
        estimate_gamma_from_qv([0.05, 0.1], [1.0, 1.0])
    with pytest.raises(ValueError):
        estimate_gamma_from_qv([0.1, 0.1, 0.1], [1.0, 1.0, 1.0])


def test_series_length_validation():
    with pytest.raises(ValueError):
        MeasurementSeries(times=np.zeros(3), x_series=np.zeros(2),
                          xdelta_series=np.zeros(3), delta=0.1, x0=0.4,
                          kernel_id="phi3")


def test_series_csv_export(tmp_path, grid500, scaled_default):
    config = SimConfig(theta=0.01, noise=NoiseModel(0.0, 0.05),
                       nonlinearity=no_nonlinearity(), grid=grid500,
                       time_steps=100, initial_condition="zero", rng_seed=2,
                       scheme="spectral_exact")
    series = simulate_measured(config, [scaled_default])[0]
    path = series.to_csv(tmp_path / "meas")
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    assert data.shape == (101, 3)
    assert np.allclose(data[:, 1], series.x_series)
    import json
    meta = json.loads((tmp_path / "meas.json").read_text())
    assert meta["delta"] == 0.05 and meta["kernel_id"] == "phi3"
    assert meta["samples"] == 101
