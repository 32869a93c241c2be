import numpy as np
import pytest

from sdcaf.env import ArmSpec, Instance

ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance():
    """Record one pass/fail line per acceptance criterion."""

    def record(number, ok, detail):
        line = f"[criterion {number}] {'PASS' if ok else 'FAIL'}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def random_arm(rng):
    fam = rng.choice(["bernoulli", "beta", "uniform", "deterministic"])
    if fam == "bernoulli":
        return ArmSpec.bernoulli(rng.uniform())
    if fam == "beta":
        return ArmSpec.beta(rng.uniform(0.2, 5), rng.uniform(0.2, 5))
    if fam == "uniform":
        lo, hi = np.sort(rng.uniform(size=2))
        return ArmSpec.uniform(lo, hi)
    return ArmSpec.deterministic(rng.uniform())


@pytest.fixture
def two_arms():
    return Instance((0.9, 0.4), d=3, horizon=200)
