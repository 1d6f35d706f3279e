import os
import time
from contextlib import contextmanager

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", max_examples=100, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", max_examples=300, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

# criterion number -> (passed, title, detail, seconds)
ACCEPTANCE: dict[int, tuple[bool, str, str, float]] = {}


class Criterion:
    def __init__(self):
        self.detail = ""

    def note(self, text: str) -> None:
        self.detail = f"{self.detail}; {text}" if self.detail else text


@pytest.fixture
def criterion():
    """``with criterion(n, title, budget_s) as c:`` records one PASS/FAIL line."""

    @contextmanager
    def run(number: int, title: str, budget_s: float):
        c = Criterion()
        start = time.perf_counter()
        try:
            yield c
            elapsed = time.perf_counter() - start
            assert elapsed < budget_s, f"took {elapsed:.1f} s, budget {budget_s} s"
        except BaseException as exc:
            c.note(f"{type(exc).__name__}: {str(exc).splitlines()[0] if str(exc) else ''}")
            ACCEPTANCE[number] = (False, title, c.detail, time.perf_counter() - start)
            raise
        ACCEPTANCE[number] = (True, title, c.detail, elapsed)

    return run


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        ok, title, detail, seconds = ACCEPTANCE[number]
        line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title} ({seconds:.1f} s)"
        terminalreporter.write_line(line + (f"  [{detail}]" if detail else ""))
