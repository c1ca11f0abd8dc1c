import numpy as np
import pytest

from sctlab import DifferenceKernel, TensorTrigKernel, perturbed_linear


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture(scope="session")
def doubling():
    return perturbed_linear(2, 0.0)


@pytest.fixture(scope="session")
def perturbed():
    return perturbed_linear(2, 0.05)


@pytest.fixture(scope="session")
def sin4pi_kernel():
    # h(x, y) = sin(4 pi x)
    return TensorTrigKernel([(1.0, 2, "sin", 0, "cos")])


@pytest.fixture(scope="session")
def sin2pi_kernel():
    # h(x, y) = sin(2 pi x)
    return TensorTrigKernel([(1.0, 1, "sin", 0, "cos")])


@pytest.fixture(scope="session")
def zero_kernel():
    return TensorTrigKernel([(0.0, 0, "cos", 0, "cos")])


@pytest.fixture(scope="session")
def diff_sin_kernel():
    # h(x, y) = sin(2 pi (y - x))
    return DifferenceKernel([(1, 0.0, 1.0)])
