import warnings

import numpy as np
import pytest

from schrovar.potentials import abs2m_potential
from schrovar.semigroup import KernelHandle, build_spectral_engine, engine_handle


@pytest.fixture(autouse=True)
def _quiet_low_dimension():
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", message="critical radius in d=")
        yield


@pytest.fixture(scope="session")
def free_engine():
    return build_spectral_engine(None, 10.0, 512, 256)


@pytest.fixture(scope="session")
def oscillator_engine():
    return build_spectral_engine(abs2m_potential(1, 1), 12.0, 1024, 128)


@pytest.fixture(scope="session")
def oscillator_handle(oscillator_engine):
    return KernelHandle(1, (oscillator_engine,))


@pytest.fixture(scope="session")
def small_oscillator():
    """Cheap full-spectrum engine for property tests."""
    return engine_handle(abs2m_potential(1, 1), 6.0, 128)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
