import math
import sys

import numpy as np
import pytest

from bayesmetrology.fock import FockDims, TwoModeState, make_probe
from bayesmetrology.personick import FlatPrior


@pytest.fixture(scope="session")
def probes():
    """Default probes at their default cutoffs, built once per session."""
    names = ("coherent", "noon", "tsv", "ses", "tsc", "tsc-int")
    return {n: make_probe(n) for n in names}


@pytest.fixture
def prior():
    return FlatPrior(0.0, math.pi / 2)


def random_state(rng, d=3) -> TwoModeState:
    """Random normalized two-mode pure state on a d x d box."""
    amps = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return TwoModeState(FockDims.square(d), amps / np.linalg.norm(amps))


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
