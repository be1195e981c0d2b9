import numpy as np
import pytest

from odec.data import synth_dataset
from odec.ode import SolverConfig
from odec.zoo import dense_model


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def tiny_data():
    kw = dict(seed=3, classes=3, shape=(1, 4, 4), margin=1.5)
    return synth_dataset(samples=60, split="train", **kw), synth_dataset(samples=40, split="test", **kw)


@pytest.fixture(scope="session")
def tiny_model():
    return dense_model((1, 4, 4), 8, 3, seed=5, solver=SolverConfig("rk4", 0.0, 0.5, 0.1))


_VERDICTS = []


@pytest.fixture
def verdict():
    """Record one acceptance line and assert on it."""
    def record(number, title, ok, detail=""):
        _VERDICTS.append((number, f"{'PASS' if ok else 'FAIL'} criterion {number:>2}: {title}  {detail}"))
        assert ok, f"criterion {number} ({title}) failed: {detail}"
    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_VERDICTS):
            terminalreporter.write_line(line)
