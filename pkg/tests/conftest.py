import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from panelcf.datasets import available, load_dataset  # noqa: E402

# criterion number -> list of (part, status, detail); filled by test_acceptance
ACCEPTANCE: dict[int, list] = {}
TITLES: dict[int, str] = {}


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture(scope="session")
def california():
    return load_dataset("california")


def study_or_skip(name: str):
    if not available()[name]:
        pytest.skip(f"{name} panel is not available (set PANELCF_DATA_DIR)")
    return load_dataset(name)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(TITLES):
        parts = ACCEPTANCE.get(n, [])
        statuses = {s for _, s, _ in parts}
        if not parts:
            status = "NOT RUN"
        elif "FAIL" in statuses:
            status = "FAIL"
        elif "SKIP" in statuses:
            status = "INCOMPLETE"
        else:
            status = "PASS"
        detail = "; ".join(f"{p}: {s}{' (' + d + ')' if d else ''}" for p, s, d in parts)
        terminalreporter.write_line(f"criterion {n:>2} {status:<10} {TITLES[n]} | {detail}")
