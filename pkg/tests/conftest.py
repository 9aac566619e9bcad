import numpy as np
import pytest

from stein_bounds.distributions import iid_model, rademacher, standardize


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture
def rademacher_model():
    def build(n: int):
        return standardize(iid_model(rademacher(1.0), n))

    return build


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One pass/fail line per acceptance criterion, printed unconditionally."""
    lines = []
    for status, label in (("passed", "PASS"), ("failed", "FAIL"), ("error", "FAIL")):
        for rep in terminalreporter.stats.get(status, []):
            nodeid = getattr(rep, "nodeid", "")
            if "test_acceptance" in nodeid and "::" in nodeid and getattr(rep, "when", "call") == "call":
                lines.append((nodeid.split("::")[-1], label))
    if lines:
        terminalreporter.section("acceptance criteria")
        for name, label in sorted(set(lines)):
            terminalreporter.write_line(f"{label}  {name}")
