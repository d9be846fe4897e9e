import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from uqfield.field import DomainSpec, generate_analytic  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def unit_square():
    return DomainSpec((11, 11), (0.0, 0.0), (1.0, 1.0))


@pytest.fixture
def center_field():
    return generate_analytic("center", DomainSpec((17, 17), (-1.0, -1.0), (1.0, 1.0)))


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
