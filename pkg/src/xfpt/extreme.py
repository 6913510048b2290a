"""Extreme hitting probabilities ``P(K_N = k)``.

The probability that the fastest of ``N`` iid searchers hits target ``k`` is
the Stieltjes integral ``N * int (1 - F)**(N-1) dF_k``.  It is evaluated
here over the cells of a tabulation, in the log domain, so that values far
below the double-precision range are still returned through ``log_p``.
Large-``N`` laws ``eta (ln N)**rho N**(1 - beta)`` follow from the short-time
parameters of ``F`` and ``F_k``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, optimize
from scipy.special import logsumexp

from .shorttime import ShortTimeParams
from .special import log_gamma
from .tabulated import TabulatedDistribution

__all__ = [
    "AsymptoticLaw",
    "ExtremeResult",
    "ExponentFit",
    "P1Row",
    "GridCoverageError",
    "OrderingError",
    "hitting_prob_quadrature",
    "quadrature_ladder",
    "tabulate_with_coverage",
    "escape_prob",
    "asymptotic_law",
    "asymptotic_eval",
    "verify_prop_p1",
    "empirical_exponent",
    "NEAR_EQUIDISTANT",
]

#: laws are refused when L_k / L_0 falls below this ratio
NEAR_EQUIDISTANT = 1.02


class GridCoverageError(RuntimeError):
    """The integrand has significant mass outside the tabulated time range."""


class OrderingError(ValueError):
    """Target 0 is not the unique closest target."""


@dataclass(frozen=True)
class AsymptoticLaw:
    """``P(K_N = k) ~ eta (ln N)**rho N**(1 - beta)``.  ``log_eta`` carries
    the prefactor when ``eta`` itself leaves the double range."""

    beta: float
    rho: float
    eta: float
    log_eta: float | None = None

    def __post_init__(self):
        if not self.beta > 1:
            raise ValueError("beta must exceed 1")
        if self.log_eta is None:
            if not self.eta > 0:
                raise ValueError("eta must be positive")
            object.__setattr__(self, "log_eta", math.log(self.eta))


@dataclass(frozen=True)
class ExtremeResult:
    N: float
    k: int
    p: float
    method: str
    log_p: float
    diagnostics: dict = field(default_factory=dict, compare=False)


# --------------------------------------------------------------------------
# quadrature


def _log_increments(logv: np.ndarray) -> np.ndarray:
    """``log(v[i+1] - v[i])`` from log values, ``-inf`` where not increasing."""
    a, b = logv[:-1], logv[1:]
    with np.errstate(invalid="ignore", divide="ignore"):
        out = b + np.log(-np.expm1(a - b))
    out[~(b > a)] = -np.inf
    return out


def _cell_log_masses(tab: TabulatedDistribution, N: float):
    """Per-cell log of ``P(min of N falls in the cell)`` and the log of the
    conditional target masses ``dF_k / dF`` of each cell.

    Cells are ``(0, t_0]``, the grid intervals, and ``(t_last, inf]``."""
    lS = tab.log_survival()
    escape = tab.escape_mass
    lS_end = math.log(escape) if escape > 0 else -math.inf
    lS_all = np.concatenate([[0.0], lS, [lS_end]])
    a, b = lS_all[:-1], lS_all[1:]
    with np.errstate(divide="ignore", invalid="ignore"):
        d = b - a
        log_mass = N * a + np.log(-np.expm1(N * d))
    if np.isinf(lS_end):
        log_mass[-1] = N * a[-1]  # S_last**N - 0

    # dF and dF_k in log form; first cell from 0, last cell to the tail masses
    total = 1.0 - escape
    logF_ext = np.concatenate([[-np.inf], tab.log_F])
    dF = _log_increments(logF_ext)
    dF_tail = total - tab.F[-1]
    dF = np.append(dF, math.log(dF_tail) if dF_tail > 0 else -np.inf)
    dFk = np.empty((tab.m, dF.size))
    for k in range(tab.m):
        ext = np.concatenate([[-np.inf], tab.log_Fk[k]])
        inc = _log_increments(ext)
        tail = tab.tail_mass[k] - tab.Fk[k, -1]
        dFk[k] = np.append(inc, math.log(tail) if tail > 0 else -np.inf)

    # flat survival cells where F_k still moved (round-off): use N S^(N-1) dF_k
    flat = ~np.isfinite(log_mass) & np.isfinite(dF)
    with np.errstate(divide="ignore", invalid="ignore"):
        cond = dFk - dF
        log_mass = np.where(flat, math.log(N) + (N - 1) * a + dF, log_mass)
    cond[:, ~np.isfinite(dF)] = -np.inf
    cond[np.isnan(cond)] = -np.inf
    log_mass[np.isnan(log_mass)] = -np.inf
    return log_mass, cond


def hitting_prob_quadrature(tab: TabulatedDistribution, N: float, k: int,
                            min_coverage: float = 0.999) -> ExtremeResult:
    """``P(K_N = k)`` by Stieltjes quadrature over the tabulation cells.

    Each cell contributes ``(S_a**N - S_b**N) * dF_k / dF`` where ``S = 1 - F``
    at the cell ends.  This is the exact probability that the minimum of
    ``N`` draws lands in the cell, times the within-cell target split, so the
    result is exact for ``N = 1`` and the target probabilities together with
    ``escape_prob`` sum to one.

    Raises ``GridCoverageError`` if less than ``min_coverage`` of the result
    comes from resolved grid cells (the mass sits before ``t_0``).
    """
    if not N >= 1:
        raise ValueError("N must be >= 1")
    if not 0 <= k < tab.m:
        raise IndexError(f"target {k} out of range (m = {tab.m})")
    log_mass, cond = _cell_log_masses(tab, float(N))
    terms = log_mass + cond[k]
    if not np.isfinite(terms).any():
        return ExtremeResult(N, k, 0.0, "quadrature", -math.inf,
                             {"coverage": 1.0, "t_peak": math.nan})
    log_p = float(logsumexp(terms))
    frac_first = math.exp(terms[0] - log_p) if np.isfinite(terms[0]) else 0.0
    frac_tail = math.exp(terms[-1] - log_p) if np.isfinite(terms[-1]) else 0.0
    coverage = 1.0 - frac_first - frac_tail
    i = int(np.argmax(terms))
    t = tab.times
    if i == 0:
        t_peak = t[0]
    elif i == t.size:
        t_peak = t[-1]
    else:
        t_peak = math.sqrt(t[i - 1] * t[i])
    diag = {"coverage": coverage, "t_peak": t_peak, "first_cell_fraction": frac_first,
            "tail_cell_fraction": frac_tail}
    if frac_first > 1 - min_coverage:
        raise GridCoverageError(
            f"{100 * frac_first:.3g}% of P(K_N={k}) at N={N:g} lies before t_min={t[0]:.3g}; "
            "extend the grid to smaller times (lower t_min)")
    log_p = min(log_p, 0.0)
    return ExtremeResult(N, k, math.exp(log_p), "quadrature", log_p, diag)


def quadrature_ladder(tab: TabulatedDistribution, N_list: Sequence[float], k: int,
                      min_coverage: float = 0.999) -> list[ExtremeResult]:
    return [hitting_prob_quadrature(tab, N, k, min_coverage) for N in N_list]


def tabulate_with_coverage(tabulate: Callable[[np.ndarray], TabulatedDistribution],
                           grid: np.ndarray, N_list: Sequence[float], C0: float,
                           min_coverage: float = 0.999, floor_factor: float = 1e-8):
    """Tabulate, then halve ``t_min`` (at constant point density in ``ln t``)
    until every target at every ``N`` meets ``min_coverage``.

    Returns the final tabulation; raises ``GridCoverageError`` once ``t_min``
    would fall below ``floor_factor * C0``.
    """
    grid = np.asarray(grid, float)
    density = (grid.size - 1) / math.log(grid[-1] / grid[0])
    while True:
        tab = tabulate(grid)
        try:
            for N in N_list:
                for k in range(tab.m):
                    hitting_prob_quadrature(tab, N, k, min_coverage)
            return tab
        except GridCoverageError:
            t_min = grid[0] / 2
            if t_min < floor_factor * C0:
                raise
            extra = max(2, int(round(density * math.log(2))))
            grid = np.concatenate([np.geomspace(t_min, grid[0], extra + 1)[:-1], grid])


def escape_prob(tab: TabulatedDistribution, N: float) -> float:
    """Probability that none of ``N`` searchers ever hits a target."""
    if not N >= 1:
        raise ValueError("N must be >= 1")
    return float(tab.escape_mass) ** N


# --------------------------------------------------------------------------
# asymptotic laws


def asymptotic_law(near: ShortTimeParams, far: ShortTimeParams,
                   allow_near_equidistant: bool = False) -> AsymptoticLaw:
    """Large-``N`` law of the far target from ``F ~ A t^p e^{-C0/t}`` (near)
    and ``F_k ~ B t^q e^{-C_k/t}`` (far).

    ``beta = C_k/C0``, ``rho = p beta - q`` and
    ``eta = B C0**(q - p beta) A**(-beta) beta Gamma(beta)``.
    """
    if not far.C > near.C:
        raise OrderingError("far.C must exceed near.C: target 0 must be the closest target")
    beta = far.C / near.C
    if math.sqrt(beta) < NEAR_EQUIDISTANT:
        msg = (f"targets nearly equidistant (L_k/L_0 = {math.sqrt(beta):.4f} < {NEAR_EQUIDISTANT}); "
               "the law converges only at astronomically large N")
        if not allow_near_equidistant:
            raise OrderingError(msg)
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
    A, p, C0 = near.A, near.p, near.C
    B, q = far.A, far.p
    rho = p * beta - q
    log_eta = (math.log(B) + (q - p * beta) * math.log(C0) - beta * math.log(A)
               + math.log(beta) + log_gamma(beta))
    eta = math.exp(log_eta) if log_eta < 709 else math.inf
    return AsymptoticLaw(beta, rho, eta, log_eta)


def asymptotic_eval(law: AsymptoticLaw, N: float, k: int = 1) -> ExtremeResult:
    """Evaluate the law at ``N >= 2``, clamping to 1 (flagged) when the
    asymptote exceeds a probability at small ``N``."""
    if not N >= 2:
        raise ValueError("N must be >= 2 so that ln N > 0")
    lnN = math.log(N)
    raw = law.log_eta + law.rho * math.log(lnN) + (1 - law.beta) * lnN
    clamped = raw > 0
    log_p = min(raw, 0.0)
    return ExtremeResult(N, k, math.exp(log_p), "asymptotic", log_p,
                         {"clamped": clamped, "log_p_raw": raw})


# --------------------------------------------------------------------------
# verification of the basic Laplace-type estimate


@dataclass(frozen=True)
class P1Row:
    N: float
    integral: float
    log_integral: float
    asymptote: float
    log_asymptote: float
    ratio: float


def _p1_log_integrand(u, A, p, q, C, C_plus, N):
    t = math.exp(u)
    f = math.log(A) + p * u - C / t
    return (q - 1) * u - C_plus / t + (N - 1) * math.log1p(-math.exp(f))


def verify_prop_p1(A: float, p: float, q: float, C: float, C_plus: float, delta: float,
                   N_list: Sequence[float]) -> list[P1Row]:
    """Tabulate ``I(N) = int_0^delta t**(q-2) exp(-C_plus/t) (1 - A t**p exp(-C/t))**(N-1) dt``
    against ``C**(q-1) (A C**p)**(-beta) Gamma(beta) (ln N)**(p beta - q) N**(-beta)``
    with ``beta = C_plus / C``.

    The integral is taken in ``u = ln t`` around the peak of the integrand,
    scaled by its maximum, with adaptive Gauss-Kronrod quadrature.
    """
    if not (C_plus > C > 0 and A > 0 and delta > 0):
        raise ValueError("need C_plus > C > 0, A > 0, delta > 0")
    us = np.linspace(math.log(delta) - 12, math.log(delta), 2000)
    ft = math.log(A) + p * us - C / np.exp(us)
    if np.max(ft) >= 0:
        raise ValueError("A t^p exp(-C/t) must stay below 1 on (0, delta]; reduce delta")
    beta = C_plus / C
    rows = []
    for N in N_list:
        if not N >= 2:
            raise ValueError("N must be >= 2")
        g = lambda u: _p1_log_integrand(u, A, p, q, C, C_plus, N)  # noqa: E731
        u_hi = math.log(delta)
        # the peak sits near t* = C / ln N; search well around it
        u_guess = math.log(min(C / math.log(N), delta))
        res = optimize.minimize_scalar(lambda u: -g(u), bounds=(u_guess - 8, u_hi), method="bounded",
                                       options={"xatol": 1e-10})
        u_pk = float(res.x)
        g_pk = g(u_pk)
        # integrate out to where the integrand is exp(-60) below its peak
        lo = u_pk - 1.0
        while g(lo) - g_pk > -60:
            lo -= 1.0
        hi = u_pk + 1.0
        while hi < u_hi and g(hi) - g_pk > -60:
            hi += 1.0
        hi = min(hi, u_hi)
        val, _ = integrate.quad(lambda u: math.exp(g(u) - g_pk), lo, hi, points=[u_pk],
                                epsabs=0.0, epsrel=1e-11, limit=400)
        log_I = g_pk + math.log(val)
        lnN = math.log(N)
        log_as = ((q - 1) * math.log(C) - beta * (math.log(A) + p * math.log(C)) + log_gamma(beta)
                  + (p * beta - q) * math.log(lnN) - beta * lnN)
        rows.append(P1Row(float(N), math.exp(log_I), log_I, math.exp(log_as), log_as,
                          math.exp(log_I - log_as)))
    return rows


# --------------------------------------------------------------------------
# empirical exponent


@dataclass(frozen=True)
class ExponentFit:
    slope: float
    stderr: float
    log_power: float
    n_points: int


def empirical_exponent(results: Sequence[ExtremeResult], min_decades: float = 4.0,
                       log_log_term: bool = True) -> ExponentFit:
    """Slope of ``ln p`` against ``ln N``, with a ``ln ln N`` regressor
    absorbing the logarithmic factor of the law."""
    N = np.array([r.N for r in results], float)
    lp = np.array([r.log_p for r in results], float)
    if N.size < 4 or N.min() <= math.e:
        raise ValueError("need >= 4 ladder points, all with N > e")
    if math.log10(N.max() / N.min()) < min_decades:
        raise ValueError(f"ladder spans fewer than {min_decades} decades of N")
    if np.any(lp < math.log(1e-250)) or not np.all(np.isfinite(lp)):
        raise ValueError("all probabilities must exceed 1e-250")
    lnN = np.log(N)
    cols = [np.ones_like(lnN), lnN] + ([np.log(lnN)] if log_log_term else [])
    X = np.column_stack(cols)
    coef, *_ = np.linalg.lstsq(X, lp, rcond=None)
    dof = N.size - X.shape[1]
    resid = lp - X @ coef
    s2 = float(resid @ resid) / dof if dof > 0 else 0.0
    cov = s2 * np.linalg.inv(X.T @ X)
    return ExponentFit(float(coef[1]), float(math.sqrt(max(cov[1, 1], 0.0))),
                       float(coef[2]) if log_log_term else 0.0, int(N.size))
