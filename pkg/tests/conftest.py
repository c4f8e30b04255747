import numpy as np
import pytest

from strongwork import config as C
from strongwork.machine import MachineSpec
from strongwork.operators import DensityMatrix, HermitianOperator


def random_machine(rng, d_S=2, d_B=4, coupling=1.0, beta=1.0):
    return MachineSpec(
        HermitianOperator(C.random_hermitian(rng, d_S, 2.0)),
        HermitianOperator(C.random_hermitian(rng, d_B, 2.0)),
        HermitianOperator(C.random_hermitian(rng, d_S * d_B, 2.0 * coupling), (d_S, d_B)),
        beta,
    )


def random_state(rng, spec):
    return DensityMatrix(C.random_density(rng, spec.space.total_dim), spec.space)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def machine(rng):
    spec = random_machine(rng)
    return spec, random_state(rng, spec)
