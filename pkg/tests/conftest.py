import numpy as np
import pytest

from workbench import ModelConfig
from workbench.params import ParamStore


def store_with(**arrays):
    """ParamStore holding the given arrays under the given names."""
    store = ParamStore(0)
    for name, value in arrays.items():
        value = np.asarray(value, dtype=np.float64)
        store.add(name, value.shape)
        store[name].data[...] = value
    return store


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny():
    return ModelConfig.tiny()


def pytest_terminal_summary(terminalreporter):
    """Repeat the acceptance verdicts (one line per criterion) at the end of the run."""
    import sys

    lines = getattr(sys.modules.get("test_acceptance"), "RESULTS", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
