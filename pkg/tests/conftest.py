import numpy as np
import pytest
from hypothesis import settings, strategies as st

from caperc.colored_graph import ColoredMultigraph

settings.register_profile("default", deadline=None, max_examples=100)
settings.load_profile("default")


@st.composite
def small_graphs(draw, max_n=8, ks=(2, 3, 4), p=0.3):
    """Random colored multigraph: every pair joins every layer with probability p."""
    n = draw(st.integers(1, max_n))
    k = draw(st.sampled_from(ks))
    seed = draw(st.integers(0, 2**32 - 1))
    return random_graph(np.random.default_rng(seed), n, k, p)


def random_graph(rng, n, k, p=0.3):
    iu, ju = np.triu_indices(n, 1)
    layers = []
    for _ in range(k):
        keep = rng.random(len(iu)) < p
        layers.append(np.stack([iu[keep], ju[keep]], axis=1))
    return ColoredMultigraph(n, tuple(layers))


# one pass/fail line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: dict[int, str] = {}


@pytest.fixture
def acceptance_report():
    def record(number: int, passed: bool, detail: str):
        ACCEPTANCE_LINES[number] = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[number])
