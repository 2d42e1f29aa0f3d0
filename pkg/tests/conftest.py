from __future__ import annotations

import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("rrk", deadline=None, max_examples=50, derandomize=True)
settings.load_profile("rrk")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    try:
        from tests import test_acceptance
    except ImportError:
        return
    lines = getattr(test_acceptance, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
