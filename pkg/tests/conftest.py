"""Shared tabulations.  PDE solves are a few seconds each, so they are
computed once per session."""

import numpy as np
import pytest

from xfpt.dist1d import IntervalScenario, interval_distribution
from xfpt.scenario import GridControls, ScenarioSpec


@pytest.fixture(scope="session")
def pure045():
    return interval_distribution(IntervalScenario(1.0, 1.0, 0.45))


@pytest.fixture(scope="session")
def pure_symmetric():
    return interval_distribution(IntervalScenario(1.0, 1.0, 0.5))


@pytest.fixture(scope="session")
def robin_spec():
    return ScenarioSpec("interval_robin", l=1.0, x0=0.45, gamma0=1.0, gamma1=2.0)


@pytest.fixture(scope="session")
def robin_tab(robin_spec):
    return robin_spec.tabulate()


@pytest.fixture(scope="session")
def concentric_spec():
    return ScenarioSpec("concentric3d", R0=0.25, R1=1.0, r0=0.5)


@pytest.fixture(scope="session")
def concentric_tab(concentric_spec):
    return concentric_spec.tabulate()


def fit_grid(spec, points=4000):
    """Grid reaching down to F ~ 1e-250 (C0/t ~ 575) for short-time fits."""
    C0 = min(spec.target_lengths()) ** 2 / (4 * spec.D)
    return np.geomspace(C0 / 575.0, spec.default_grid()[-1], points)


def richardson(spec):
    from dataclasses import replace
    return replace(spec, grid=GridControls(richardson=True))


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
