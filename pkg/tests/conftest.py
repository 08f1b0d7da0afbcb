import os

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", deadline=None, max_examples=200,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

_ACCEPTANCE: dict[int, str] = {}


@pytest.fixture(scope="session")
def acceptance_report():
    """Criterion number -> one-line PASS/FAIL verdict, printed at the end of the run."""
    return _ACCEPTANCE


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[n])
