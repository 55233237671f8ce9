"""
Shared fixtures for the test suites.
"""

import numpy as np
import pytest

from utils.logging_config import configure_logging


@pytest.fixture(autouse=True, scope="session")
def quiet_logging():
    """Route structlog through stderr at WARNING for the whole session."""
    configure_logging("WARNING")


@pytest.fixture
def rng() -> np.random.Generator:
    """Fixed-seed generator so randomized checks replay identically."""
    return np.random.default_rng(20240611)
