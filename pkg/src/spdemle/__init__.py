"""Stochastic heat equation simulation and diffusivity estimation from local measurements."""

from .estimate import (EstimateReport, EstimationError, augmented_mle,
                       confidence_interval, decomposition_diagnostics, normal_quantile)
from .experiments import (ExperimentPlan, MCResult, qq_data, rates_table,
                          replication_seed, run_plan)
from .kernels import (KernelSpec, ScaledKernel, asymptotic_variance, b_star_norm_sq,
                      bump_phi, kernel_by_name, phi3_kernel, psi_functional, scale_kernel)
from .measure import (MeasurementSeries, estimate_gamma_from_qv, measure,
                      quadratic_variation)
from .noise import NoiseModel
from .simulate import (BlowUpError, Nonlinearity, SimConfig, TrajectoryField,
                       burgers_drift, initial_plateau, simulate_linear_exact,
                       simulate_measured, simulate_semilinear_fd)
from .spectral import (Grid1D, SpectralBasis, apply_fractional_laplacian,
                       check_scaling_identity, dirichlet_eigenvalues,
                       inverse_sine_transform, sine_transform)

__version__ = "0.1.0"
