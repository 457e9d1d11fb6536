import pytest

from mtpr.model import ModelParams, generate_instance
from oracles import RESULTS


def pytest_terminal_summary(terminalreporter):
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])


@pytest.fixture(scope="session")
def private_instance():
    """All-private instance at the end-to-end scale (n_priv=30, k=2, d=20000, m=1500)."""
    return generate_instance(ModelParams(d=20000, n_pub=0, n_priv=30, k_pub=0, k_priv=2, m=1500, seed=11))
