import math

import numpy as np
import pytest
from scipy.special import erfc

from xfpt.dist1d import IntervalScenario, Phi, interval_distribution
from xfpt.pdesolve import (ConcentricProblem, RobinIntervalProblem, default_grid, solve_concentric,
                           solve_robin_interval)

INF = math.inf


@pytest.fixture(scope="module")
def dirichlet():
    prob = RobinIntervalProblem(1.0, 1.0, 0.45)
    grid = default_grid(prob, points=1500)
    return solve_robin_interval(prob, grid=grid), interval_distribution(IntervalScenario(1.0, 1.0, 0.45), grid)


def test_dirichlet_limit_matches_series(dirichlet):
    pde, series = dirichlet
    assert np.max(np.abs(pde.F - series.F)) < 5e-4
    assert np.max(np.abs(pde.Fk - series.Fk)) < 5e-4
    assert pde.tail_mass == pytest.approx([0.55, 0.45], abs=1e-6)


def test_richardson_reduces_deep_tail_error():
    prob = RobinIntervalProblem(1.0, 1.0, 0.45)
    grid = np.geomspace(0.45**2 / 4 / 300, 0.2, 300)
    series = interval_distribution(IntervalScenario(1.0, 1.0, 0.45), grid)
    plain = solve_robin_interval(prob, 400, grid)
    rich = solve_robin_interval(prob, 400, grid, richardson=True)
    err_plain = np.max(np.abs(plain.log_F - series.log_F))
    err_rich = np.max(np.abs(rich.log_F - series.log_F))
    assert err_rich < err_plain / 5
    assert rich.diagnostics["richardson"] is True


@pytest.mark.parametrize("g0,g1", [(1.0, 2.0), (0.5, INF), (INF, 0.3), (3.0, 0.0)])
def test_finite_rates_reach_one(g0, g1):
    prob = RobinIntervalProblem(1.0, 1.0, 0.45, g0, g1)
    g_min = min(g for g in (g0, g1) if g > 0)
    t_final = 50 * max(1.0, 1.0 / g_min)
    tab = solve_robin_interval(prob, 400, np.geomspace(1e-3, t_final, 400))
    assert tab.F[-1] == pytest.approx(1.0, abs=1e-3)
    assert tab.tail_mass[1] == pytest.approx(prob.splitting_probability(), abs=1e-4)


def test_robin_splitting_matches_harmonic_solution():
    # u'' = 0 with D u'(0) = g0 u(0), D u'(l) = g1 (1 - u(l))
    g0, g1 = 1.0, 2.0
    A = np.array([[-g0, 1.0], [g1, 1.0 + g1]])  # unknowns (u(0), slope)
    u0, slope = np.linalg.solve(A, [0.0, g1])
    expected = u0 + slope * 0.45
    prob = RobinIntervalProblem(1.0, 1.0, 0.45, g0, g1)
    assert prob.splitting_probability() == pytest.approx(expected, rel=1e-14)
    tab = solve_robin_interval(prob, 400, np.geomspace(1e-3, 60, 300))
    assert tab.Fk[1, -1] == pytest.approx(expected, abs=1e-4)


def _halfline_reference(x, t, D, g):
    a = 1 / math.sqrt(4 * D * t)
    return erfc(x * a) - math.exp(g * (g * t + x) / D) * erfc((2 * g * t + x) * a)


@pytest.mark.parametrize("g0", [1.0, 5.0])
def test_semi_infinite_robin_check(g0):
    x0 = 0.45
    prob = RobinIntervalProblem(20 * x0, 1.0, x0, g0, INF)
    times = np.geomspace(1e-3, 2.0, 120)
    tab = solve_robin_interval(prob, 2000, times)
    ref = np.array([_halfline_reference(x0, t, 1.0, g0) for t in times])
    assert np.max(np.abs(tab.F - ref)) < 1e-3


def test_concentric_tail_mass():
    prob = ConcentricProblem(1.0, 2.0, 1.5, 1.0)
    tab = solve_concentric(prob, 400, np.geomspace(1e-3, 10, 300))
    assert tab.tail_mass[1] == pytest.approx(2 / 3, abs=1e-3)
    assert prob.splitting_probability() == pytest.approx(2 / 3, rel=1e-15)
    assert tab.Fk[1, -1] == pytest.approx(2 / 3, abs=1e-3)


@pytest.mark.parametrize("R0,R1,r0", [(0.25, 1.0, 0.5), (1.0, 3.0, 1.2)])
def test_concentric_splitting_formula(R0, R1, r0):
    tab = solve_concentric(ConcentricProblem(R0, R1, r0, 1.0), 400,
                           np.geomspace(1e-3, 20 * (R1 - R0) ** 2, 300))
    assert tab.tail_mass[1] == pytest.approx(R1 / (R1 - R0) * (r0 - R0) / r0, abs=1e-3)


def test_concentric_matches_radial_series():
    # r F solves the 1-D problem on (R0, R1) with boundary values R0 and R1
    R0, R1, r0 = 0.25, 1.0, 0.5
    prob = ConcentricProblem(R0, R1, r0, 1.0)
    times = np.geomspace(1e-3, 3.0, 200)
    tab = solve_concentric(prob, 2000, times)
    s = times / (R1 - R0) ** 2
    F1 = R1 / r0 * Phi(s, (R1 - r0) / (R1 - R0))
    F0 = R0 / r0 * Phi(s, (r0 - R0) / (R1 - R0))
    assert np.max(np.abs(tab.Fk[1] - F1)) < 1e-4
    assert np.max(np.abs(tab.Fk[0] - F0)) < 1e-4


def test_exterior_sphere_check():
    R0, r0 = 1.0, 1.5
    prob = ConcentricProblem(R0, 20 * r0, r0, 1.0)
    times = np.geomspace(1e-3, 20.0, 150)
    tab = solve_concentric(prob, 2000, times)
    ref = R0 / r0 * erfc((r0 - R0) / np.sqrt(4 * times))
    assert np.max(np.abs(tab.F - ref)) < 1e-3


@pytest.mark.parametrize("make", [
    lambda n, g: solve_robin_interval(RobinIntervalProblem(1.0, 1.0, 0.45, 1.0, 2.0), n, g),
    lambda n, g: solve_concentric(ConcentricProblem(0.25, 1.0, 0.5, 1.0), n, g),
])
def test_refinement_convergence(make):
    grid = np.geomspace(2e-3, 2.0, 200)
    a, b, c = (make(n, grid) for n in (201, 401, 801))
    change1 = np.max(np.abs(a.Fk - b.Fk))
    change2 = np.max(np.abs(b.Fk - c.Fk))
    assert change1 / change2 >= 3.0


def test_maximum_principle_and_monotonicity(robin_tab, concentric_tab):
    for tab in (robin_tab, concentric_tab):
        assert np.all(tab.Fk >= -1e-12) and np.all(tab.F <= 1 + 1e-12)
        assert np.all(np.diff(tab.F) >= 0)
        assert np.all(np.diff(tab.Fk, axis=1) >= 0)
        assert tab.check() == []
        assert "clamped_negative" in tab.diagnostics


def test_invalid_inputs():
    with pytest.raises(ValueError):
        RobinIntervalProblem(1.0, 1.0, 0.5, -1.0, 1.0)
    with pytest.raises(ValueError):
        RobinIntervalProblem(1.0, 1.0, 0.5, 0.0, 0.0)
    with pytest.raises(ValueError):
        RobinIntervalProblem(1.0, 1.0, 0.5, math.nan, 1.0)
    with pytest.raises(ValueError):
        ConcentricProblem(1.0, 2.0, 2.5, 1.0)
    prob = RobinIntervalProblem(1.0, 1.0, 0.5)
    with pytest.raises(ValueError):
        solve_robin_interval(prob, 100)
    with pytest.raises(ValueError):
        solve_robin_interval(prob, 400, [0.1, 0.05, 0.3])
