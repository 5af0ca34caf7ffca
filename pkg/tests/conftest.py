import numpy as np
import pytest

from cpico.cp_model import make_rng


@pytest.fixture
def rng():
    return make_rng(12345)


def orthonormal(rng, d, r):
    q, _ = np.linalg.qr(rng.standard_normal((d, r)))
    return q


# acceptance verdict lines, echoed in the terminal summary
VERDICTS = []


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in VERDICTS:
            terminalreporter.write_line(line)
