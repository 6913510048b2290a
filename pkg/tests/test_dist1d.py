import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate
from scipy.special import erfc

from xfpt.dist1d import (IntervalScenario, Phi, Phi_mu, default_interval_grid, interval_distribution,
                         log_Phi, log_Phi_mu, phi, splitting_probabilities)

SHORT, LONG = 10.0, 0.01  # switch values forcing one expansion at s = 1


@pytest.mark.parametrize("w", [0.1, 0.45, 0.55, 0.9])
def test_expansions_agree_at_switch(w):
    s = np.array([1.0])
    assert phi(s, w, switch=SHORT)[0] == pytest.approx(phi(s, w, switch=LONG)[0], abs=1e-10)
    assert Phi(s, w, switch=SHORT)[0] == pytest.approx(Phi(s, w, switch=LONG)[0], abs=1e-10)


def test_drift_kernel_expansions_agree_at_switch():
    s = np.array([1.0])
    for b in (0.25, 1.0):
        a = Phi_mu(s, 0.55, b, switch=SHORT)[0]
        c = Phi_mu(s, 0.55, b, switch=LONG)[0]
        assert a == pytest.approx(c, rel=1e-6)


def test_phi_nonnegative_on_grid():
    s = np.geomspace(1e-3, 10, 100)
    for w in np.linspace(0.01, 0.99, 99):
        assert np.all(phi(s, w) >= 0)


@pytest.mark.parametrize("w", [0.2, 0.45, 0.7])
def test_phi_integrates_to_splitting_probability(w):
    f = lambda u: math.exp(u) * float(phi(np.array([math.exp(u)]), w)[0])  # noqa: E731
    total = sum(integrate.quad(f, a, b, epsabs=1e-13, limit=200)[0]
                for a, b in [(-12, -4), (-4, 0), (0, 4)])
    assert total == pytest.approx(1 - w, abs=1e-8)


def test_Phi_limits():
    assert Phi(np.array([0.0]), 0.45)[0] == 0.0
    assert Phi(np.array([1e3]), 0.45)[0] == pytest.approx(0.55, abs=1e-12)


def test_Phi_matches_image_sum_at_small_s():
    # for s << w^2 only the first image matters: erfc(w / sqrt(4 s))
    s = np.array([1e-3, 5e-3, 1e-2])
    w = 0.45
    expected = erfc(w / np.sqrt(4 * s)) - erfc((2 - w) / np.sqrt(4 * s))
    assert np.allclose(Phi(s, w), expected, rtol=1e-10)


def test_log_Phi_deep_tail():
    # far beyond double-precision underflow the leading image dominates exactly
    s = np.array([1e-4])
    w = 0.45
    z = w / math.sqrt(4 * s[0])
    leading = -z * z - math.log(z * math.sqrt(math.pi)) + math.log1p(-1 / (2 * z * z))
    assert log_Phi(s, w)[0] == pytest.approx(leading, abs=1e-4)
    assert math.isfinite(log_Phi(np.array([1e-6]), w)[0])


def test_Phi_mu_zero_drift_equals_Phi():
    s = np.geomspace(1e-3, 5, 60)
    for w in (0.3, 0.55):
        assert np.allclose(Phi_mu(s, w, 0.0), Phi(s, w), rtol=1e-9, atol=1e-15)


def test_Phi_mu_matches_half_line_oracle_at_small_s():
    # while the far end is invisible, the drift-weighted kernel equals the
    # half-line inverse-Gaussian expression
    w, b = 0.55, 0.25
    s = np.geomspace(1e-3, 0.02, 12)
    rb = math.sqrt(b)
    oracle = 0.5 * (np.exp(-w * rb) * erfc(w / (2 * np.sqrt(s)) - rb * np.sqrt(s))
                    + np.exp(w * rb) * erfc(w / (2 * np.sqrt(s)) + rb * np.sqrt(s)))
    assert np.allclose(Phi_mu(s, w, b), oracle, rtol=1e-5)


@given(st.floats(0.05, 0.95), st.floats(1e-3, 3.0), st.floats(1.01, 2.0))
@settings(max_examples=40, deadline=None)
def test_Phi_monotone_in_s(w, s, factor):
    a, c = Phi(np.array([s, s * factor]), w)
    assert c >= a - 1e-15


def test_symmetric_start_gives_equal_columns(pure_symmetric):
    tab = pure_symmetric
    assert np.allclose(tab.Fk[0], tab.Fk[1], rtol=1e-12, atol=0)
    assert np.allclose(tab.tail_mass, [0.5, 0.5])


def test_pure_tail_mass(pure045):
    assert pure045.tail_mass[1] == pytest.approx(0.45, abs=1e-15)
    assert pure045.F[-1] == pytest.approx(1.0, abs=1e-12)
    assert pure045.check() == []


def test_columns_monotone_and_consistent(pure045):
    assert np.all(np.diff(pure045.Fk, axis=1) >= 0)
    assert np.allclose(np.exp(pure045.log_F), pure045.F, rtol=1e-10, atol=1e-300)


def test_t_lnF_tends_to_minus_C0():
    scn = IntervalScenario(1.0, 1.0, 0.45)
    C0 = 0.45**2 / 4
    t = np.geomspace(C0 / 575, C0 / 57.5, 200)  # the smallest tabulated decade
    tab = interval_distribution(scn, t)
    # t ln F = -C0 + (ln A) t + p t ln t: regress and read the intercept
    X = np.column_stack([np.ones_like(t), t, t * np.log(t)])
    coef, *_ = np.linalg.lstsq(X, t * tab.log_F, rcond=None)
    assert coef[0] == pytest.approx(-C0, rel=0.02)


@pytest.mark.parametrize("mu", [1.0, 2.0, -1.5])
def test_drift_prefactor(mu):
    base = IntervalScenario(1.0, 1.0, 0.45)
    drift = IntervalScenario(1.0, 1.0, 0.45, mu)
    t = np.geomspace(1e-4, 1e-3, 5)
    lp, ld = interval_distribution(base, t), interval_distribution(drift, t)
    ratio1 = np.exp(ld.log_Fk[1] - lp.log_Fk[1])
    ratio0 = np.exp(ld.log_Fk[0] - lp.log_Fk[0])
    assert ratio1[0] == pytest.approx(math.exp(mu * 0.55 / 2), rel=0.02)
    assert ratio0[0] == pytest.approx(math.exp(-mu * 0.45 / 2), rel=0.02)


@pytest.mark.parametrize("mu,x0", [(1.0, 0.45), (2.0, 0.45), (-3.0, 0.3), (0.5, 0.8)])
def test_drift_splitting_probability(mu, x0):
    # oracle: the hitting probability of the right end solves
    # D u'' + mu u' = 0, u(0) = 0, u(l) = 1
    scn = IntervalScenario(1.0, 1.0, x0, mu)
    expected = (1 - math.exp(-mu * x0)) / (1 - math.exp(-mu))
    assert splitting_probabilities(scn)[1] == pytest.approx(expected, rel=1e-14)
    tab = interval_distribution(scn)
    assert tab.F[-1] == pytest.approx(1.0, abs=1e-10)
    assert tab.Fk[1, -1] == pytest.approx(expected, abs=1e-8)


def test_drift_split_reference_form_is_not_a_probability():
    # The closed form (1 - e^{-mu x0/D}) / (1 - e^{-mu l/D}) * e^{mu (l - x0)/D}
    # exceeds 1 at mu l/D = 2, so the library uses the boundary-value
    # solution above instead.
    mu, x0 = 2.0, 0.45
    alt = (1 - math.exp(-mu * x0)) / (1 - math.exp(-mu)) * math.exp(mu * (1 - x0))
    assert alt > 1
    assert splitting_probabilities(IntervalScenario(1.0, 1.0, x0, mu))[1] < 1


def test_drift_split_agrees_with_ode_solution_numerically():
    from scipy.integrate import solve_bvp
    mu, x0 = 1.0, 0.45
    xs = np.linspace(0, 1, 50)
    sol = solve_bvp(lambda x, y: np.vstack([y[1], -mu * y[1]]),
                    lambda ya, yb: np.array([ya[0], yb[0] - 1]), xs, np.vstack([xs, np.ones_like(xs)]),
                    tol=1e-10)
    expected = float(sol.sol(x0)[0])
    assert splitting_probabilities(IntervalScenario(1.0, 1.0, x0, mu))[1] == pytest.approx(expected, rel=1e-6)


def test_grid_and_input_errors():
    scn = IntervalScenario(1.0, 1.0, 0.45)
    with pytest.raises(ValueError):
        interval_distribution(scn, [0.1, 0.05, 0.2])
    with pytest.raises(ValueError):
        IntervalScenario(1.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        IntervalScenario(-1.0, 1.0, 0.5)
    with pytest.raises(ValueError):
        phi(np.array([0.0]), 0.5)
    with pytest.raises(ValueError):
        Phi(np.array([1.0]), 1.5)


def test_default_grid_reaches_the_extreme_peak_and_the_tail():
    scn = IntervalScenario(1.0, 1.0, 0.45)
    g = default_interval_grid(scn, N_max=1e8)
    C0 = 0.45**2 / 4
    assert g[0] < C0 / math.log(1e8) / 2
    tab = interval_distribution(scn, g)
    assert 1 - tab.F[-1] < 1e-12


def test_time_scale_invariance():
    # F depends on t only through D t / l^2
    a = interval_distribution(IntervalScenario(1.0, 1.0, 0.45), [0.01, 0.1, 1.0])
    b = interval_distribution(IntervalScenario(2.0, 4.0, 0.9), [0.01, 0.1, 1.0])
    assert np.allclose(a.log_Fk, b.log_Fk, rtol=1e-12)
