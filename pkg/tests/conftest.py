import numpy as np
import pytest

from refractsurf.scenes import benchmark_scene
from refractsurf.tracer import generate


@pytest.fixture(scope="session")
def wave1_scene():
    return benchmark_scene("wave1", "flat", t=50)


@pytest.fixture(scope="session")
def wave1_frame(wave1_scene):
    return generate(wave1_scene)


@pytest.fixture(scope="session")
def small_frame():
    return generate(benchmark_scene("wave1", "flat", t=50, rows=16, cols=16))


@pytest.fixture(scope="session")
def flat_frame():
    return generate(benchmark_scene("flat_plane", "flat", c=2.0, rows=32, cols=32))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_unit(rng, size):
    v = rng.normal(size=(size, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
