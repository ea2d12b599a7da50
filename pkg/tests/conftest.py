import warnings

import numpy as np
import pytest

from trislit.scan import FringeSamplingWarning, ScanConfig, records_arrays, run_zscan


@pytest.fixture(scope="session")
def reference_scan():
    """Classical scan with the reference parameters on the default 601-point grid."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", FringeSamplingWarning)
        records = run_zscan(ScanConfig())
    return records, records_arrays(records)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE: dict[int, tuple[str, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        status, line = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number}: {status}  {line}")
