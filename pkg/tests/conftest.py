import numpy as np
import pytest

from survcontrast import Dataset, SimSetting, TestConfig, simulate_dataset


def make_dataset(n=120, seed=0, effect=0.0, censor=True, d=2):
    """Small continuous-time dataset with an optional exposure effect."""
    rng = np.random.default_rng(seed)
    W = rng.normal(size=(n, d))
    A = rng.uniform(-1, 1, size=n) + (0.3 * W[:, 0] if d else 0.0)
    lp = effect * A + (0.4 * W[:, 0] if d else 0.0)
    T = rng.exponential(10.0 * np.exp(-lp))
    C = rng.exponential(25.0, size=n) if censor else np.full(n, np.inf)
    Y = np.minimum(np.minimum(T, C), 40.0)
    delta = ((T <= C) & (T <= 40.0)).astype(int)
    return Dataset(W=W, A=A, Y=Y, delta=delta)


@pytest.fixture(scope="session")
def small_data():
    return make_dataset(n=120, seed=1, effect=0.8)


@pytest.fixture(scope="session")
def null_sim_data():
    return simulate_dataset(SimSetting("A", 200), np.random.default_rng(5))


@pytest.fixture
def config():
    return TestConfig(t=10.0, kappa=5, num_null_draws=200, seed=3)


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "RESULTS", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
