import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from coulombgas import model as mdl

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@st.composite
def configurations(draw, n_min=2, n_max=16, min_sep=1e-3, scale=3.0):
    """Configurations in [-scale, scale]^2 with every gap >= min_sep.

    Each point gets its own lattice cell and an offset leaving a min_sep margin,
    so the gap bound holds by construction and adjacent cells still allow near pairs.
    """
    n = draw(st.integers(n_min, n_max))
    k = max(1, min(32, int(2 * scale / (4 * min_sep))))
    cell = 2 * scale / k
    cells = draw(st.lists(st.tuples(st.integers(0, k - 1), st.integers(0, k - 1)),
                          min_size=n, max_size=n, unique=True))
    off = draw(arrays(np.float64, (n, 2), elements=st.floats(0.0, cell - min_sep)))
    return -scale + cell * np.asarray(cells, dtype=float) + off


@st.composite
def model_params(draw, n):
    alpha = draw(st.floats(0.1, 50.0))
    beta = draw(st.floats(0.1, 300.0))
    return mdl.ModelParams(n, alpha, beta)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def pair():
    return np.array([[1.0, 0.0], [-1.0, 0.0]])


# one verdict line per acceptance criterion, printed at the end of the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
