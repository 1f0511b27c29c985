import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from busgame.game import GameConfig

settings.register_profile("default", deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def fixture_cfg():
    """The worked example used throughout: d = 3, d/D = 0.3."""
    return GameConfig(D=10, T=1, v_min=1, v_max=4, epsilon=0.05)


@pytest.fixture
def acceptance_log():
    def log(line: str):
        ACCEPTANCE_LINES.append(line)
        print(line)
    return log


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@st.composite
def configs(draw, min_spread=0.05, **extra):
    """Valid game configs with ``T * v_max < D / 2`` and ``d > 0``."""
    D = draw(st.floats(1.0, 100.0))
    T = draw(st.floats(0.1, 3.0))
    v_max = draw(st.floats(0.02, 0.49)) * D / T
    v_min = v_max * draw(st.floats(0.02, 1.0 - min_spread))
    return GameConfig(D=D, T=T, v_min=v_min, v_max=v_max, **extra)


def random_config(rng: np.random.Generator, **extra) -> GameConfig:
    D = rng.uniform(5, 50)
    T = rng.uniform(0.5, 2)
    v_max = rng.uniform(0.05, 0.49) * D / T
    v_min = v_max * rng.uniform(0.05, 0.95)
    return GameConfig(D=D, T=T, v_min=v_min, v_max=v_max, **extra)
