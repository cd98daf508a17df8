# tests/conftest.py
"""
Pytest configuration and fixtures for testing.
"""

import pytest
import tempfile
import shutil
from pathlib import Path

from imposter_sim.ics_model import build_warehouse_model, model_from_tables

from tests.fixtures.scenarios import (
    TWO_STATE_OBSERVATION,
    TWO_STATE_TRANSITION,
    TWO_VAR_OBSERVATION,
    TWO_VAR_TRANSITION,
)


@pytest.fixture
def temp_dir():
    """Create a temporary directory for testing."""
    temp_dir = tempfile.mkdtemp()
    yield Path(temp_dir)
    shutil.rmtree(temp_dir)


@pytest.fixture
def two_state_model():
    """One boolean state watched by one three-valued sensor."""
    return model_from_tables(
        [TWO_STATE_TRANSITION], [TWO_STATE_OBSERVATION], parents=[0], meas_values=[(10, 20, 30)]
    )


@pytest.fixture
def joint_model():
    """Two states; the first has two sensors, so it is estimated jointly."""
    return model_from_tables(
        TWO_VAR_TRANSITION,
        TWO_VAR_OBSERVATION,
        parents=[0, 0, 1],
        meas_values=[(0, 1), (0, 1, 2), (5, 6)],
    )


@pytest.fixture(scope="session")
def warehouse():
    """The seeded warehouse plant shared by the slower suites."""
    return build_warehouse_model(42)


# Add markers for pytest
def pytest_configure(config):
    config.addinivalue_line(
        "markers", "performance: mark test as a performance test"
    )
    config.addinivalue_line(
        "markers", "memory: mark test as a memory usage test"
    )
    config.addinivalue_line(
        "markers", "integration: mark test as an integration test"
    )
    config.addinivalue_line(
        "markers", "slow: mark test as slow"
    )
    config.addinivalue_line(
        "markers", "cli: mark test as exercising the command line"
    )
