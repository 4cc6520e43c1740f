import numpy as np
import pytest

from spdemle.kernels import phi3_kernel, scale_kernel
from spdemle.spectral import Grid1D


@pytest.fixture(scope="session")
def grid500():
    return Grid1D(500)


@pytest.fixture(scope="session")
def kernel_phi3():
    return phi3_kernel()


@pytest.fixture(scope="session")
def scaled_default(grid500, kernel_phi3):
    return scale_kernel(kernel_phi3, 0.05, 0.4, grid500)


@pytest.fixture
def rng():
    return np.random.default_rng(20240809)
