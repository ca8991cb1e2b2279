import math

import pytest
from hypothesis import settings

from pdcouple import primes as pr

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


@pytest.fixture(scope="session")
def table_1e4():
    return pr.build_prime_table(10**4)


@pytest.fixture(scope="session")
def table_1e5():
    return pr.build_prime_table(10**5)


@pytest.fixture(scope="session")
def ladder_small():
    return pr.ladder_for(math.log(10**5) + 2)


@pytest.fixture(scope="session")
def ladder_17():
    return pr.ladder_for(17.0)


_VERDICTS: dict = {}


@pytest.fixture
def verdict():
    """Record and print one PASS/FAIL line for an acceptance criterion."""

    def record(number: int, ok: bool, detail: str) -> bool:
        line = f"CRITERION {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        print(line)
        _VERDICTS[number] = line
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.write_sep("=", "acceptance criteria")
        for n in sorted(_VERDICTS):
            terminalreporter.write_line(_VERDICTS[n])
