import numpy as np
import pytest

from dextron_lite import mcsearch, traj
from dextron_lite.env import DextronEnv


@pytest.fixture(scope="session")
def tset():
    return traj.synthetic_set()


@pytest.fixture
def env(tset):
    return DextronEnv(tset)


@pytest.fixture(scope="session")
def small_gs(tset):
    """G_s from a 3000-sample search; enough for a few dozen full-return records."""
    records, stats = mcsearch.run_search(mcsearch.McConfig(n_samples=3000), tset)
    return records


@pytest.fixture(scope="session")
def gs_success(small_gs):
    out = mcsearch.select(small_gs, "success")
    assert out, "the small search should find full-return records"
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(RESULTS):
        terminalreporter.write_line(RESULTS[n])
