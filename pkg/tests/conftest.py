import numpy as np
import pytest

from reebchord.moment_region import (
    build_ball,
    build_concave_sqrt,
    build_convex_power,
    build_counterexample,
    build_ellipsoid,
)


def strict_suite():
    """Strictly monotone regions shared by the oracle and acceptance tests."""
    return {
        "ball": build_ball(2, 1.0),
        "ellipsoid": build_ellipsoid(1.0, 2.0),
        "concave": build_concave_sqrt(1.0),
        "convex_p2": build_convex_power(1.0, 2),
        "convex_p4": build_convex_power(1.0, 4),
        "convex_p8": build_convex_power(1.0, 8),
    }


@pytest.fixture(scope="session")
def suite():
    return strict_suite()


@pytest.fixture(scope="session")
def counterexample():
    return build_counterexample(0.1, 200.0, 16.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def criterion(request):
    """Record one acceptance line; the lines are printed in the terminal summary."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, [])

    def record(number: int, ok: bool, detail: str) -> bool:
        line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        lines.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
