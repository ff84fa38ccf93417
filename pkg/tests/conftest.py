import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from covheat.bundle import make_bundle, trivial_bundle
from covheat.fixtures import rotation, single_vertex_graph, two_vertex_graph

settings.register_profile(
    "covheat", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("covheat")


@pytest.fixture
def g2():
    return two_vertex_graph()


@pytest.fixture
def g2_scalar(g2):
    return trivial_bundle(g2)


@pytest.fixture
def g2_rot(g2):
    """Rank 2 on G2 with a pi/4 rotation and V(a) = diag(1, -1)."""
    return make_bundle(g2, 2, {("a", "b"): rotation(np.pi / 4)}, {"a": np.diag([1.0, -1.0])})


@pytest.fixture
def spin():
    g = single_vertex_graph()
    return g, make_bundle(g, 2, None, {"o": np.diag([1.0, -1.0])})


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def criterion():
    """Record one PASS/FAIL line for an acceptance criterion and assert it."""

    def record(number: int, title: str, ok: bool, detail: str = "") -> None:
        line = f"CRITERION {number:2d} {'PASS' if ok else 'FAIL'}: {title}" + (f" [{detail}]" if detail else "")
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
