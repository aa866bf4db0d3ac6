import os
import pathlib

import numpy as np
import pytest

from drsn.limit import load_or_simulate

CACHE = os.environ.get("DRSN_CACHE_DIR",
                       str(pathlib.Path(__file__).resolve().parent.parent / ".drsn_cache"))


@pytest.fixture(scope="session")
def cache_dir():
    os.makedirs(CACHE, exist_ok=True)
    return CACHE


@pytest.fixture(scope="session")
def small_w():
    """Cheap limit samples for unit tests (not for level statements)."""
    return load_or_simulate(None, 0.1, 4000, 1000, 11)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance criteria register their verdicts here; printed after the run
ACCEPTANCE: dict = {}


@pytest.fixture(scope="session")
def acceptance():
    return ACCEPTANCE


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")
