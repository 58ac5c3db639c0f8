from __future__ import annotations

from contextlib import contextmanager

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from rs_regime.hjb import solve_hjb
from rs_regime.models import merton_model, model_m2, model_m3

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

_AC_LINES = pytest.StashKey[list]()


@pytest.fixture(scope="session")
def merton():
    return merton_model()


@pytest.fixture(scope="session")
def m2():
    return model_m2()


@pytest.fixture(scope="session")
def m3():
    return model_m3()


@pytest.fixture(scope="session")
def m2_surface(m2):
    return solve_hjb(m2)


@pytest.fixture(scope="session")
def m3_surface(m3):
    return solve_hjb(m3)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def criterion(request):
    """Context manager that logs one PASS/FAIL line per acceptance criterion."""
    lines = request.config.stash.setdefault(_AC_LINES, [])

    @contextmanager
    def run(number: int, title: str):
        notes: list[str] = []
        try:
            yield notes
        except BaseException as exc:
            msg = str(exc).strip().splitlines()[0] if str(exc).strip() else type(exc).__name__
            line = f"AC{number:>2} FAIL  {title}: {msg[:160]}"
            print(line)
            lines.append((number, line))
            raise
        line = f"AC{number:>2} PASS  {title}" + (f": {'; '.join(notes)}" if notes else "")
        print(line)
        lines.append((number, line))

    return run


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_AC_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
