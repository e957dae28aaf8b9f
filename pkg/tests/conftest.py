import os
import sys
import tempfile

import pytest

# keep the parametrix cache out of the home directory during tests
os.environ.setdefault("NCZETA_CACHE_DIR", tempfile.mkdtemp(prefix="nczeta-cache-"))

from nczeta.integrate import reduce_b2  # noqa: E402
from nczeta.pipeline import load_golden, oracle_bundle, run_pipeline  # noqa: E402
from nczeta.symbolcalc import parametrix  # noqa: E402


@pytest.fixture(scope="session")
def b_symbol():
    return parametrix(2)


@pytest.fixture(scope="session")
def b2(b_symbol):
    return b_symbol[-4]


@pytest.fixture(scope="session")
def reduction(b2):
    return reduce_b2(b2)


@pytest.fixture(scope="session")
def golden():
    return load_golden()


@pytest.fixture(scope="session")
def clean_run():
    return run_pipeline()


@pytest.fixture(scope="session")
def bundle(clean_run):
    return oracle_bundle(clean_run)


def pytest_terminal_summary(terminalreporter):
    results = getattr(sys.modules.get("test_acceptance"), "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
