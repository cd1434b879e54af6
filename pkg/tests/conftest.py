import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from oracles import figure2_instance  # noqa: E402

from milpgnn import encode_graph, gen_counterexample  # noqa: E402


@pytest.fixture
def fig2():
    return figure2_instance()


@pytest.fixture
def fig2_graph(fig2):
    return encode_graph(fig2)


@pytest.fixture(scope="session")
def pair():
    return gen_counterexample()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import acceptance_log
    if acceptance_log.LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(acceptance_log.LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
