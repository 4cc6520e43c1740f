"""Dirichlet Laplacian eigensystem on (0,1), sine transforms and fractional powers.

All coordinates are physical, i.e. live on the unit interval.  The eigenpairs
are lambda_k = pi^2 k^2 with Phi_k(y) = sqrt(2) sin(pi k y); fields with
Dirichlet boundary conditions are represented on a regular grid y_j = j/M with
zero boundary columns.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.fft


@dataclass
class Grid1D:
    """Regular grid on [0,1] with M intervals, nodes y_j = j/M, j = 0..M."""

    num_intervals: int
    step: float = field(init=False)
    nodes: np.ndarray = field(init=False)

    def __post_init__(self):
        if self.num_intervals < 2:
            raise ValueError("grid needs at least 2 intervals")
        self.step = 1.0 / self.num_intervals
        self.nodes = np.arange(self.num_intervals + 1) / self.num_intervals

    @property
    def interior(self) -> np.ndarray:
        return self.nodes[1:-1]

    def zeros(self) -> np.ndarray:
        return np.zeros(self.num_intervals + 1)


def dirichlet_eigenvalues(mode_count: int) -> np.ndarray:
    """Eigenvalues pi^2 k^2 of -Laplace with Dirichlet conditions on (0,1), k = 1..mode_count."""
    if mode_count < 1:
        raise ValueError("mode_count must be >= 1")
    k = np.arange(1, mode_count + 1, dtype=float)
    return np.pi**2 * k**2


@dataclass
class SpectralBasis:
    """Dirichlet eigensystem truncated at mode_count modes.

    Eigenfunctions are evaluated analytically, so the basis serves any grid.
    """

    mode_count: int
    eigenvalues: np.ndarray = field(init=False)

    def __post_init__(self):
        self.eigenvalues = dirichlet_eigenvalues(self.mode_count)

    def eigenfunction(self, k: int):
        """Closure evaluating Phi_k(y) = sqrt(2) sin(pi k y)."""
        if not 1 <= k <= self.mode_count:
            raise ValueError(f"mode {k} outside 1..{self.mode_count}")
        return lambda y: np.sqrt(2.0) * np.sin(np.pi * k * np.asarray(y))

    def eigenfunction_matrix(self, points: np.ndarray) -> np.ndarray:
        """Matrix Phi[k-1, j] = Phi_k(points[j]), shape (mode_count, len(points))."""
        k = np.arange(1, self.mode_count + 1)
        return np.sqrt(2.0) * np.sin(np.pi * np.outer(k, np.asarray(points)))


def apply_fractional_laplacian(coeffs: np.ndarray, power: float,
                               eigenvalues: np.ndarray | None = None) -> np.ndarray:
    """Multiply coefficient k by lambda_k**power, i.e. apply (-Laplace)^power spectrally."""
    coeffs = np.asarray(coeffs, dtype=float)
    if eigenvalues is None:
        eigenvalues = dirichlet_eigenvalues(coeffs.shape[-1])
    return coeffs * eigenvalues**power


def sine_transform(values: np.ndarray, grid: Grid1D, mode_count: int | None = None,
                   naive: bool = False) -> np.ndarray:
    """Grid quadrature coefficients c_k = h * sum_j f(y_j) Phi_k(y_j).

    For a Dirichlet field this is the trapezoid rule for <f, Phi_k>.  With
    mode_count = M-1 the transform is exactly invertible.  The naive flag
    switches to the direct O(M * mode_count) sum, kept as the oracle for the
    FFT-based path.
    """
    values = np.asarray(values, dtype=float)
    m = grid.num_intervals
    if values.shape[-1] != m + 1:
        raise ValueError(f"field has {values.shape[-1]} nodes, grid has {m + 1}")
    if mode_count is None:
        mode_count = m - 1
    if mode_count > m - 1:
        raise ValueError(f"mode_count {mode_count} exceeds grid capacity {m - 1}")
    interior = values[..., 1:-1]
    if naive:
        basis = SpectralBasis(mode_count).eigenfunction_matrix(grid.interior)
        return grid.step * interior @ basis.T
    # DST-I: dst(x)[k-1] = 2 sum_j x_j sin(pi k j / M)
    coeffs = (grid.step / np.sqrt(2.0)) * scipy.fft.dst(interior, type=1)
    return coeffs[..., :mode_count]


def inverse_sine_transform(coeffs: np.ndarray, grid: Grid1D, naive: bool = False) -> np.ndarray:
    """Synthesize f(y_j) = sum_k c_k Phi_k(y_j) on the grid, zero at the boundary."""
    coeffs = np.asarray(coeffs, dtype=float)
    m = grid.num_intervals
    if coeffs.shape[-1] > m - 1:
        raise ValueError(f"{coeffs.shape[-1]} modes exceed grid capacity {m - 1}")
    if naive:
        basis = SpectralBasis(coeffs.shape[-1]).eigenfunction_matrix(grid.interior)
        interior = coeffs @ basis
    else:
        padded = np.zeros(coeffs.shape[:-1] + (m - 1,))
        padded[..., :coeffs.shape[-1]] = coeffs
        # DST-I is self-inverse up to the factor 2M
        interior = np.sqrt(2.0) / 2.0 * scipy.fft.dst(padded, type=1)
    out = np.zeros(coeffs.shape[:-1] + (m + 1,))
    out[..., 1:-1] = interior
    return out


def second_difference(values: np.ndarray, step: float) -> np.ndarray:
    """Standard three-point Laplacian on interior nodes; boundary entries zero."""
    values = np.asarray(values, dtype=float)
    out = np.zeros_like(values)
    out[1:-1] = (values[2:] - 2.0 * values[1:-1] + values[:-2]) / step**2
    return out


def check_scaling_identity(profile, delta: float, x0: float, grid: Grid1D,
                           support_radius: float = 1.0) -> float:
    """Max-norm discrepancy between Lap_h(z_delta) and delta^-2 (Lap_h z)_delta.

    Here z_delta(x) = delta^-1/2 z((x - x0)/delta) and Lap_h is the second
    difference with the *same* step h on both sides, so the discrepancy is the
    pure finite-difference mismatch, O(h^2) for fixed delta.
    """
    if not 0.0 < x0 < 1.0:
        raise ValueError("x0 must be interior")
    if x0 - delta * support_radius < 0.0 or x0 + delta * support_radius > 1.0:
        raise ValueError("scaled support leaks outside the domain")
    h = grid.step
    y = grid.nodes
    u = (y - x0) / delta
    z_delta = delta**-0.5 * profile(u)
    lhs = second_difference(z_delta, h)
    rhs_scaled = (profile(u + h) - 2.0 * profile(u) + profile(u - h)) / h**2
    rhs = delta**-2.5 * rhs_scaled
    rhs[0] = rhs[-1] = 0.0
    return float(np.max(np.abs(lhs - rhs)))
