import warnings

import pytest


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running pipeline checks")
    warnings.filterwarnings("ignore", category=RuntimeWarning)
