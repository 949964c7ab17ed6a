from __future__ import annotations

import numpy as np
import pytest

from cutoff_formation.controller import ControllerGains
from cutoff_formation.graph import CommGraph
from cutoff_formation.potential import PotentialParams

# (criterion, passed, detail) rows filled in by test_acceptance.py
ACCEPTANCE_RESULTS: list[tuple[str, bool, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in sorted(ACCEPTANCE_RESULTS):
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")


@pytest.fixture
def params() -> PotentialParams:
    return PotentialParams(d_risky=0.4, d_cautionary=0.7, lam=1e-3, mu=0.5)


@pytest.fixture
def gains() -> ControllerGains:
    return ControllerGains(gamma_p=2.0, gamma_v=3.0, gamma=0.2, theta_p=1.3, theta_v=1.3)


@pytest.fixture
def k4() -> CommGraph:
    return CommGraph.from_topology("complete", 4)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)
