import os
import tempfile

import numpy as np
import pytest

# keep eigen caches out of the user's home during tests
os.environ.setdefault("GASKET_ZRP_CACHE", tempfile.mkdtemp(prefix="gasket_zrp_cache_"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for res in sorted(RESULTS, key=lambda r: r.number):
            terminalreporter.write_line(res.line())
