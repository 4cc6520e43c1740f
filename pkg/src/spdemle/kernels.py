"""Measurement kernels built from the compactly supported bump profile.

The base profile is phi(x) = exp(-12/(1-x^2)) on (-1,1).  Every profile in
this module has the closed form P(x) (1-x^2)^-m phi(x) with a polynomial P,
which is stable under differentiation, so arbitrary derivative orders are
exact rational expressions times phi.  The working kernel is K = Lap^ceil(g)
of a base profile (in d=1 the 2*ceil(g)-th derivative), scaled and centered
as K_{delta,x0}(x) = delta^-1/2 K((x-x0)/delta).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.integrate
from numpy.polynomial import Polynomial

from .noise import NoiseModel
from .spectral import Grid1D, SpectralBasis, sine_transform

BUMP_SHARPNESS = 12.0


class ModeTruncationWarning(UserWarning):
    """Spectral sum truncated before its tail became negligible."""


class BumpProfile:
    """Profile P(x) (1-x^2)^-m exp(-12/(1-x^2)), identically zero outside (-1,1).

    Differentiation maps (P, m) -> (P'(1-x^2)^2 + 2 m x (1-x^2) P - 24 x P, m+2),
    so derivatives of any order stay in this family with exact coefficients.
    """

    def __init__(self, poly: Polynomial | None = None, inv_power: int = 0):
        self.poly = Polynomial([1.0]) if poly is None else poly
        self.inv_power = inv_power
        self.support_radius = 1.0

    def derivative(self, order: int = 1) -> "BumpProfile":
        p, m = self.poly, self.inv_power
        one_minus_sq = Polynomial([1.0, 0.0, -1.0])
        x = Polynomial([0.0, 1.0])
        for _ in range(order):
            p = (p.deriv() * one_minus_sq**2
                 + (2 * m) * x * one_minus_sq * p
                 - (2 * BUMP_SHARPNESS) * x * p)
            m += 2
        return BumpProfile(p, m)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        inside = np.abs(x) < 1.0
        xi = x[inside]
        u = 1.0 - xi * xi
        log_factor = -BUMP_SHARPNESS / u - self.inv_power * np.log(u)
        out[inside] = self.poly(xi) * np.exp(log_factor)
        if out.ndim == 0:
            return float(out)
        return out


def bump_phi(x):
    """The smooth bump exp(-12/(1-x^2)) for |x| < 1, zero otherwise."""
    return BumpProfile()(x)


def bump_derivative_profile(order: int, poly: list[float] | None = None) -> BumpProfile:
    """order-th derivative of p(x)*phi(x); p defaults to 1."""
    base = BumpProfile(Polynomial(poly) if poly is not None else None)
    return base.derivative(order) if order else base


def _near_integer(x: float, tol: float = 1e-12) -> bool:
    return abs(x - round(x)) < tol


def ceil_smoothing_order(gamma: float) -> int:
    """ceil(gamma), snapping values within 1e-12 of an integer."""
    if gamma < 0:
        raise ValueError("gamma must be >= 0")
    if _near_integer(gamma):
        return int(round(gamma))
    return math.ceil(gamma)


@dataclass
class KernelSpec:
    """Base profile, smoothing order and the induced working kernel.

    kernel = 2*ceil_gamma-th derivative of base_profile (Lap^ceil_gamma in
    d=1, plus sign).  kernel_dd is its second derivative, used for the scaled
    Laplacian samples.  The L2 norms of the base profile and its gradient feed
    the asymptotic variance and are cached on first use.
    """

    base_profile: BumpProfile
    gamma: float
    name: str = "phi3"
    ceil_gamma: int = field(init=False)
    kernel: BumpProfile = field(init=False)
    kernel_dd: BumpProfile = field(init=False)
    support_radius: float = field(init=False)
    _norm_cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.ceil_gamma = ceil_smoothing_order(self.gamma)
        self.kernel = self.base_profile.derivative(2 * self.ceil_gamma)
        self.kernel_dd = self.kernel.derivative(2)
        self.support_radius = self.base_profile.support_radius

    def base_l2_sq(self) -> float:
        """||K~||^2 over the real line (adaptive quadrature, abs tol 1e-12)."""
        return self._cached_norm("base", self.base_profile)

    def base_grad_l2_sq(self) -> float:
        """||d/dx K~||^2 over the real line."""
        return self._cached_norm("grad", self.base_profile.derivative())

    def kernel_l2_sq(self) -> float:
        """||K||^2 over the real line."""
        return self._cached_norm("kernel", self.kernel)

    def _cached_norm(self, key: str, profile: BumpProfile) -> float:
        if key not in self._norm_cache:
            self._norm_cache[key] = profile_l2_sq(profile)
        return self._norm_cache[key]


def profile_l2_sq(profile: BumpProfile) -> float:
    r = profile.support_radius
    val, _ = scipy.integrate.quad(lambda x: profile(x) ** 2, -r, r,
                                  epsabs=1e-12, epsrel=1e-12, limit=400)
    return val


def phi3_kernel(gamma: float = 0.0) -> KernelSpec:
    """The third-derivative-of-bump kernel: base profile phi''', gamma as given."""
    return KernelSpec(bump_derivative_profile(3), gamma, name="phi3")


_NAMED_ORDERS = {"phi": 0, "phi1": 1, "phi2": 2, "phi3": 3, "phi4": 4, "phi5": 5}


def kernel_by_name(name: str, gamma: float = 0.0,
                   poly: list[float] | None = None) -> KernelSpec:
    """CLI-facing kernel registry: phi derivatives by name, or custom = poly * bump."""
    if name == "custom":
        if poly is None:
            raise ValueError("custom kernel requires polynomial coefficients")
        return KernelSpec(BumpProfile(Polynomial(poly)), gamma, name="custom")
    if name not in _NAMED_ORDERS:
        raise ValueError(f"unknown kernel {name!r}; use one of "
                         f"{sorted(_NAMED_ORDERS)} or 'custom'")
    return KernelSpec(bump_derivative_profile(_NAMED_ORDERS[name]), gamma, name=name)


def default_kernel(gamma: float = 0.0) -> KernelSpec:
    """Kernel whose induced K is phi''' regardless of the smoothing order.

    The base profile is the (3 - 2*ceil(gamma))-th bump derivative when that
    order is nonnegative, so rougher noise keeps the same working kernel.
    """
    order = 3 - 2 * ceil_smoothing_order(gamma)
    if order < 0:
        return phi3_kernel(gamma)
    return KernelSpec(bump_derivative_profile(order), gamma,
                      name=f"phi{order}" if order else "phi")


@dataclass
class ScaledKernel:
    """Grid samples of K_{delta,x0} and Lap K_{delta,x0} on the support window.

    center is the effective location after boundary clamping: centers closer
    than delta * support_radius to an endpoint are moved onto that distance.
    """

    spec: KernelSpec
    delta: float
    x0: float
    grid: Grid1D
    center: float = field(init=False)
    clamped: bool = field(init=False)
    lo: int = field(init=False)
    hi: int = field(init=False)
    samples: np.ndarray = field(init=False)
    lap_samples: np.ndarray = field(init=False)

    def __post_init__(self):
        if self.delta <= 0:
            raise ValueError("delta must be positive")
        if not 0.0 < self.x0 < 1.0:
            raise ValueError("x0 must lie inside (0,1)")
        half_width = self.delta * self.spec.support_radius
        if half_width > 0.5 + 1e-12:
            raise ValueError(
                f"kernel of half-width {half_width:.3g} cannot fit inside (0,1)")
        self.center = min(max(self.x0, half_width), 1.0 - half_width)
        self.clamped = self.center != self.x0
        nodes = self.grid.nodes
        self.lo = int(np.searchsorted(nodes, self.center - half_width, side="right"))
        self.hi = int(np.searchsorted(nodes, self.center + half_width, side="left"))
        window = nodes[self.lo:self.hi]
        u = (window - self.center) / self.delta
        self.samples = self.delta**-0.5 * self.spec.kernel(u)
        self.lap_samples = self.delta**-2.5 * self.spec.kernel_dd(u)

    def full_samples(self) -> np.ndarray:
        out = self.grid.zeros()
        out[self.lo:self.hi] = self.samples
        return out

    def full_lap_samples(self) -> np.ndarray:
        out = self.grid.zeros()
        out[self.lo:self.hi] = self.lap_samples
        return out

    def l2_sq_grid(self) -> float:
        """Trapezoid ||K_{delta,x0}||^2 on the grid; delta-invariant by scaling."""
        return float(self.grid.step * np.sum(self.samples**2))


def scale_kernel(spec: KernelSpec, delta: float, x0: float, grid: Grid1D) -> ScaledKernel:
    return ScaledKernel(spec, delta, x0, grid)


def b_star_norm_sq(scaled: ScaledKernel, noise: NoiseModel, basis: SpectralBasis) -> float:
    """||B* K_{delta,x0}||^2 = sigma^2 sum_k lambda_k^-2g <K_{delta,x0}, Phi_k>^2.

    Pairings are grid-trapezoid coefficients truncated at the basis modes; for
    gamma = 0 this is Parseval's identity for sigma^2 ||K_{delta,x0}||^2.
    Warns if the trailing block of the sum suggests an unconverged truncation.
    """
    coeffs = sine_transform(scaled.full_samples(), scaled.grid, basis.mode_count)
    summand = noise.sigma**2 * basis.eigenvalues**(-2.0 * noise.gamma) * coeffs**2
    total = float(np.sum(summand))
    block = max(5, basis.mode_count // 20)
    tail = float(np.sum(summand[-block:]))
    if total > 0 and tail > 1e-6 * total:
        warnings.warn(
            f"trailing {block} modes carry {tail / total:.2e} of the spectral sum; "
            "increase the mode count", ModeTruncationWarning)
    return total


# --- Fractional Sobolev norms over the real line (Fourier quadrature) ---

@lru_cache(maxsize=None)
def _leggauss_cached(n: int):
    return np.polynomial.legendre.leggauss(n)


def _gauss_panel(a: float, b: float, n: int):
    x, w = _leggauss_cached(n)
    return 0.5 * (b - a) * x + 0.5 * (a + b), 0.5 * (b - a) * w


def _fourier_transform(profile: BumpProfile, omegas: np.ndarray) -> np.ndarray:
    """F z(w) = int z(x) exp(-i w x) dx over the compact support.

    Panelled 16-node Gauss-Legendre in x: panel widths keep the phase change
    per panel below ~8 radians at the largest requested frequency.
    """
    r = profile.support_radius
    omega_max = max(float(np.max(np.abs(omegas))), 1.0)
    panels = int(np.ceil(omega_max * r / 4.0)) + 4
    base_x, base_w = _leggauss_cached(16)
    edges = np.linspace(-r, r, panels + 1)
    half = 0.5 * (edges[1:] - edges[:-1])
    mid = 0.5 * (edges[1:] + edges[:-1])
    x = (mid[:, None] + half[:, None] * base_x).ravel()
    w = (half[:, None] * base_w).ravel()
    vals = profile(x) * w
    out = np.empty(omegas.shape, dtype=complex)
    for start in range(0, omegas.size, 256):
        block = omegas[start:start + 256]
        out[start:start + 256] = np.exp(-1j * np.outer(block, x)) @ vals
    return out


def fractional_norm_sq(profile: BumpProfile, power: float, rel_tol: float = 1e-13) -> float:
    """||(-Lap_R)^power z||^2_{L2(R)} = (1/pi) int_0^inf w^{4 power} |F z(w)|^2 dw.

    Integrated octave by octave with Gauss-Legendre panels until the last
    octave is negligible.  For negative powers the profile must have zero
    mean, otherwise the integral diverges at w = 0.
    """
    if power < 0:
        mean = scipy.integrate.quad(profile, -profile.support_radius,
                                    profile.support_radius, epsabs=1e-13, limit=200)[0]
        scale = scipy.integrate.quad(lambda x: abs(profile(x)), -profile.support_radius,
                                     profile.support_radius, epsabs=1e-13, limit=200)[0]
        if scale > 0 and abs(mean) > 1e-8 * scale:
            raise ValueError("negative fractional power of a profile with nonzero mean")
    total = 0.0
    lo = 0.0
    hi = 4.0
    while hi <= 4096.0:
        n = int(2.0 * (hi - lo) * profile.support_radius) + 32
        om, w = _gauss_panel(lo, hi, n)
        ft = _fourier_transform(profile, om)
        contrib = float(np.sum(w * om**(4.0 * power) * np.abs(ft) ** 2) / np.pi)
        total += contrib
        if hi >= 32.0 and contrib <= rel_tol * abs(total):
            return total
        lo, hi = hi, 2.0 * hi
    warnings.warn("fractional norm quadrature hit its frequency cap",
                  ModeTruncationWarning)
    return total


def psi_functional(profile: BumpProfile, sigma_at_x0: float) -> float:
    """Time integral of the squared heat-smoothed noise pairing on the real line.

    Equals sigma(x0)^2 / 2 * ||(-Lap_R)^-1/2 z||^2; for z = Lap K~ this is
    sigma(x0)^2 / 2 * ||grad K~||^2.  Raises for profiles with nonzero mean.
    """
    return 0.5 * sigma_at_x0**2 * fractional_norm_sq(profile, -0.5)


def asymptotic_variance(spec: KernelSpec, theta: float, horizon: float) -> float:
    """Limit variance theta*Sigma of the rescaled estimation error.

    Integer smoothing order: 2 theta ||K~||^2 / (T ||grad K~||^2) with both
    norms by adaptive quadrature.  Non-integer orders route through the
    fractional norms; the noise level cancels either way.
    """
    if theta <= 0 or horizon <= 0:
        raise ValueError("theta and horizon must be positive")
    if _near_integer(spec.gamma):
        return 2.0 * theta * spec.base_l2_sq() / (horizon * spec.base_grad_l2_sq())
    frac = spec.ceil_gamma - spec.gamma
    num = fractional_norm_sq(spec.base_profile, frac)
    den = fractional_norm_sq(spec.base_profile, 0.5 + frac)
    return 2.0 * theta * num / (horizon * den)
