import numpy as np
import pytest

from paramgate import device as dv


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def s3():
    return dv.table_s3_device()


def pair_device(delta_mhz=0.0, g_target=None, t1=None):
    """Two degenerate (or detuned) qubits sharing a bus; no noise unless ``t1`` given."""
    freqs = dv.ghz([5.0, 5.0 + delta_mhz / 1e3])
    t1 = np.full(2, 1.0 if t1 is None else t1)
    return dv.DeviceParams(freqs, dv.mhz([-200, -200]), dv.ghz(5.5), dv.mhz([20, 20]), t1,
                           2 * t1, np.zeros(1))


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance: end-to-end acceptance criterion")


def pytest_terminal_summary(terminalreporter):
    # acceptance lines are collected by test_acceptance and repeated here so they
    # show up even when output capture is on
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
