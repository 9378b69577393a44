import numpy as np
import pytest

from aivv.engine import EngineConfig, build_engine
from aivv.telemetry import dataset_for, make_windows

SMALL = EngineConfig(hidden_size=8, epochs=8, mc_passes=8)


@pytest.fixture(scope="session")
def hover():
    return dataset_for("hover", 1)


@pytest.fixture(scope="session")
def hover_pairs(hover):
    return make_windows(hover)


@pytest.fixture(scope="session")
def small_engine(hover_pairs):
    train, _ = hover_pairs
    return build_engine(train, SMALL, seed=1)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def pytest_terminal_summary(terminalreporter):
    import checks

    if checks.RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(checks.RESULTS):
            terminalreporter.write_line(checks.RESULTS[n])
