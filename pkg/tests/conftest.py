import numpy as np
import pytest

from ttsfv.tt import TensorTrain


def random_tt(rng, shape, ranks):
    """Random TT with interior ranks ``ranks`` (len(shape) - 1 entries)."""
    full = (1, *ranks, 1)
    cores = [rng.standard_normal((full[l], n, full[l + 1])) for l, n in enumerate(shape)]
    return TensorTrain(cores)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


#: one line per acceptance criterion, printed at the end of the session
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
