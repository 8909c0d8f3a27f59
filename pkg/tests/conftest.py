import numpy as np
import pytest

from irsrm.model import effective_channels
from irsrm.scenario import Scenario, draw_instance


def make_instance(K=4, M=5, L=4, seed=0, p_max=0.1):
    """Channels of one default-geometry draw: (hbar, sigma2, p_max array, ChannelSet)."""
    sc = Scenario(K=K, M=M, L=L, p_max=p_max)
    _, ch = draw_instance(sc, seed)
    return effective_channels(ch.h, ch.g), sc.sigma2, sc.p_max_array, ch


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES = []


def report(number, ok, detail=""):
    line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}".rstrip()
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
