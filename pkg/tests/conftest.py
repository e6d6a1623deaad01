"""Shared model fixtures for the test suite."""

import pytest

from barlab import BarParams, InitialLaw, NoiseSpec, OffspringLaw


@pytest.fixture
def full_law():
    """Both daughters always alive: the deterministic full binary tree."""
    return OffspringLaw(1.0, 0.0, 0.0)


@pytest.fixture
def strong_law():
    """The (H2)+(H3) workhorse law with mean 1.9."""
    return OffspringLaw(0.9, 0.05, 0.05)


@pytest.fixture
def mixed_law():
    """H3 law with substantial mass on every division outcome (mean 1.5)."""
    return OffspringLaw(0.5, 0.25, 0.25)


@pytest.fixture
def theta_ref():
    """Reference coefficient vector used across estimator tests."""
    return BarParams(0.5, 1.0, 0.3, 0.8, 0.4, 0.9, 0.2, 1.1)


@pytest.fixture
def mild_noise():
    return NoiseSpec(sigma=0.3, rho=0.2, sigma0=0.3, sigma1=0.3)


@pytest.fixture
def no_noise():
    return NoiseSpec(sigma=1.0, rho=0.0, sigma0=1.0, sigma1=1.0, noiseless=True)


@pytest.fixture
def origin_init():
    return InitialLaw(kind="point", value=0.0)
