"""Additive noise as a spectral multiplier on the Dirichlet sine basis."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class NoiseModel:
    """Noise operator acting mode-wise as b_k = sigma * lambda_k^-gamma.

    gamma = 0 with sigma = 1 is space-time white noise; larger gamma means
    spatially smoother noise.  sigma = 0 gives the deterministic equation.
    """

    gamma: float = 0.0
    sigma: float = 1.0

    def __post_init__(self):
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")

    @property
    def is_white(self) -> bool:
        return self.gamma == 0.0

    def mode_stddevs(self, eigenvalues: np.ndarray) -> np.ndarray:
        """Multipliers b_k applied to independent mode-wise Brownian motions."""
        return self.sigma * np.asarray(eigenvalues, dtype=float)**(-self.gamma)
