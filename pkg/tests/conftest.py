import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("repo", deadline=None, derandomize=True, max_examples=60)
settings.load_profile("repo")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_configure(config):
    config.acceptance_verdicts = []


@pytest.fixture
def verdict(request):
    """Record a criterion outcome; the terminal summary prints one line each."""

    def record(number: int, ok: bool, detail: str) -> bool:
        request.config.acceptance_verdicts.append((number, bool(ok), detail))
        return bool(ok)

    return record


def pytest_terminal_summary(terminalreporter, config):
    rows = sorted(getattr(config, "acceptance_verdicts", []))
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    for number, ok, detail in rows:
        terminalreporter.write_line(f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
