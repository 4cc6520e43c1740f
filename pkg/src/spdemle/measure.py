"""Kernel-localized observation of solution fields and quadratic variation.

The observation processes are the trapezoid pairings of the field against the
scaled kernel and against its analytic Laplacian.  They can be computed from a
stored trajectory or accumulated online while a simulation runs, which is how
the Monte-Carlo driver avoids storing full fields.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .kernels import ScaledKernel
from .noise import NoiseModel
from .spectral import SpectralBasis


@dataclass
class MeasurementSeries:
    """Local measurements of one trajectory at resolution delta around x0.

    x_series[i] = <X(t_i), K_{delta,x0}> and xdelta_series[i] pairs against
    Lap K_{delta,x0}; both have one entry per trajectory time.  f_series and
    noise_series are optional per-step instrumentation (left-point drift
    pairing and noise-increment pairing, one entry per step).
    """

    times: np.ndarray
    x_series: np.ndarray
    xdelta_series: np.ndarray
    delta: float
    x0: float
    kernel_id: str
    b_norm_sq_spectral: float | None = None
    f_series: np.ndarray | None = None
    noise_series: np.ndarray | None = None
    seed: int | None = None

    def __post_init__(self):
        if len(self.x_series) != len(self.times) or len(self.xdelta_series) != len(self.times):
            raise ValueError("series and times lengths disagree")

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    @property
    def b_norm_sq_qv(self) -> float:
        """Realized quadratic variation of x_series divided by the horizon."""
        return quadratic_variation(self.x_series) / self.horizon

    def to_csv(self, path_base) -> "Path":
        """Write (t, x, xdelta) rows plus a JSON metadata header file."""
        import json
        from pathlib import Path
        base = Path(path_base)
        base.parent.mkdir(parents=True, exist_ok=True)
        data_path = base.with_suffix(".csv")
        matrix = np.column_stack([self.times, self.x_series, self.xdelta_series])
        np.savetxt(data_path, matrix, delimiter=",", header="t,x,xdelta", comments="")
        meta = {
            "delta": self.delta,
            "x0": self.x0,
            "kernel_id": self.kernel_id,
            "b_norm_sq_spectral": self.b_norm_sq_spectral,
            "b_norm_sq_qv": self.b_norm_sq_qv,
            "seed": self.seed,
            "samples": int(len(self.times)),
        }
        base.with_suffix(".json").write_text(json.dumps(meta, indent=2))
        return data_path


def quadratic_variation(x_series: np.ndarray, times: np.ndarray | None = None) -> float:
    """Sum of squared increments of the sampled path."""
    x = np.asarray(x_series, dtype=float)
    if x.size < 2:
        raise ValueError("need at least 2 samples")
    return float(np.sum(np.diff(x) ** 2))


def measure(trajectory, scaled: ScaledKernel, noise: NoiseModel | None = None,
            basis: SpectralBasis | None = None) -> MeasurementSeries:
    """Pair a stored trajectory against the scaled kernel at every stored time.

    Inner products traverse only the kernel's support window.  When the noise
    model is known, the spectral ||B* K_{delta,x0}||^2 is attached.
    """
    values = trajectory.values
    if values.shape[1] != scaled.grid.num_intervals + 1:
        raise ValueError("trajectory grid does not match the kernel grid")
    h = scaled.grid.step
    window = values[:, scaled.lo:scaled.hi]
    x_series = h * (window @ scaled.samples)
    xdelta_series = h * (window @ scaled.lap_samples)
    b_spec = None
    if noise is not None:
        from .kernels import b_star_norm_sq
        b_spec = b_star_norm_sq(scaled, noise,
                                basis or SpectralBasis(scaled.grid.num_intervals - 1))
    return MeasurementSeries(
        times=np.asarray(trajectory.times, dtype=float),
        x_series=x_series,
        xdelta_series=xdelta_series,
        delta=scaled.delta,
        x0=scaled.x0,
        kernel_id=scaled.spec.name,
        b_norm_sq_spectral=b_spec,
        seed=getattr(trajectory, "rng_seed", None),
    )


class GridObserver:
    """Online kernel pairings against grid fields, fed in blocks of time steps."""

    def __init__(self, scaled: ScaledKernel, n_steps: int, instrument: bool = False):
        self.scaled = scaled
        self.h = scaled.grid.step
        self.lo, self.hi = scaled.lo, scaled.hi
        self.x_series = np.zeros(n_steps + 1)
        self.xdelta_series = np.zeros(n_steps + 1)
        self.f_series = np.zeros(n_steps) if instrument else None
        self.noise_series = np.zeros(n_steps) if instrument else None

    def record_block(self, start: int, rows: np.ndarray):
        """rows[i] is the field at step start + i."""
        window = rows[:, self.lo:self.hi]
        stop = start + rows.shape[0]
        self.x_series[start:stop] = self.h * (window @ self.scaled.samples)
        self.xdelta_series[start:stop] = self.h * (window @ self.scaled.lap_samples)

    def record_drift(self, i: int, drift_values: np.ndarray):
        self.f_series[i] = self.h * np.dot(drift_values[self.lo:self.hi],
                                           self.scaled.samples)

    def record_noise(self, i: int, noise_values: np.ndarray):
        self.noise_series[i] = self.h * np.dot(noise_values[self.lo:self.hi],
                                               self.scaled.samples)


class SpectralObserver:
    """Online kernel pairings against mode coefficients (exact linear scheme)."""

    def __init__(self, scaled: ScaledKernel, basis: SpectralBasis, n_steps: int,
                 instrument: bool = False):
        from .spectral import sine_transform
        self.scaled = scaled
        self.kernel_coeffs = sine_transform(scaled.full_samples(), scaled.grid,
                                            basis.mode_count)
        self.lap_coeffs = sine_transform(scaled.full_lap_samples(), scaled.grid,
                                         basis.mode_count)
        self.x_series = np.zeros(n_steps + 1)
        self.xdelta_series = np.zeros(n_steps + 1)
        # the exact scheme is linear, so the drift pairing is identically zero
        self.f_series = np.zeros(n_steps) if instrument else None
        self.noise_series = np.zeros(n_steps) if instrument else None

    def record_block(self, start: int, rows: np.ndarray):
        """rows[i] holds the mode coefficients at step start + i."""
        stop = start + rows.shape[0]
        self.x_series[start:stop] = rows @ self.kernel_coeffs
        self.xdelta_series[start:stop] = rows @ self.lap_coeffs

    def record_noise(self, i: int, noise_coeffs: np.ndarray):
        if self.noise_series is not None:
            self.noise_series[i] = np.dot(noise_coeffs, self.kernel_coeffs)


def series_from_observer(observer, times: np.ndarray, noise: NoiseModel | None,
                         basis: SpectralBasis | None, seed: int | None) -> MeasurementSeries:
    scaled = observer.scaled
    b_spec = None
    if noise is not None:
        from .kernels import b_star_norm_sq
        b_spec = b_star_norm_sq(scaled, noise,
                                basis or SpectralBasis(scaled.grid.num_intervals - 1))
    return MeasurementSeries(
        times=times,
        x_series=observer.x_series,
        xdelta_series=observer.xdelta_series,
        delta=scaled.delta,
        x0=scaled.x0,
        kernel_id=scaled.spec.name,
        b_norm_sq_spectral=b_spec,
        f_series=observer.f_series,
        noise_series=observer.noise_series,
        seed=seed,
    )


def estimate_gamma_from_qv(deltas, qv_values):
    """Identify the noise smoothing order from QV scaling across resolutions.

    The quadratic variation scales like delta^{4 gamma}, so the least-squares
    slope of log QV against log delta divided by 4 estimates gamma.  Returns
    (gamma_hat, rms residual of the regression).
    """
    deltas = np.asarray(deltas, dtype=float)
    qv_values = np.asarray(qv_values, dtype=float)
    if deltas.size < 3:
        raise ValueError("need at least 3 distinct delta values")
    if np.unique(deltas).size < 3:
        raise ValueError("need at least 3 distinct delta values")
    log_d = np.log(deltas)
    log_q = np.log(qv_values)
    design = np.column_stack([log_d, np.ones_like(log_d)])
    coef, *_ = np.linalg.lstsq(design, log_q, rcond=None)
    fitted = design @ coef
    residual = float(np.sqrt(np.mean((log_q - fitted) ** 2)))
    return float(coef[0] / 4.0), residual
