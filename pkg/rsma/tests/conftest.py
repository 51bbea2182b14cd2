import os

import pytest

TEST_RESOURCES_DIR = os.path.join(os.path.dirname(__file__), "resources")


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "slow: long Monte Carlo checks at reduced sample counts")


@pytest.fixture
def resources_dir():
    return TEST_RESOURCES_DIR
