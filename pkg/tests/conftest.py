import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

_ACCEPTANCE: dict[str, str] = {}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def verdict():
    """Record one acceptance line per criterion; all clauses must hold for PASS."""

    def record(criterion: int, ok: bool, detail: str) -> None:
        key = f"criterion {criterion}"
        prev = _ACCEPTANCE.get(key)
        if prev is not None:
            ok = ok and prev.startswith("PASS")
            detail = prev.split(": ", 1)[1] + "; " + detail
        _ACCEPTANCE[key] = f"{'PASS' if ok else 'FAIL'}: {detail}"
        print(f"{key}: {_ACCEPTANCE[key]}")

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_ACCEPTANCE, key=lambda k: int(k.split()[1])):
        terminalreporter.write_line(f"{key}: {_ACCEPTANCE[key]}")
