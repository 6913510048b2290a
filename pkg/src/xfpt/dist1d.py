"""Hitting-time laws for 1-D diffusion on ``(0, l)`` with absorbing ends.

All kernels work in dimensionless time ``s = D t / l**2`` and position
``w in (0, 1)``; ``w`` is the distance (in units of ``l``) from the start to
the end being hit. Each kernel switches from an image (short-time) sum for
``s <= switch`` to an eigenfunction (large-time) sum for ``s > switch``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .special import log_erfc
from .tabulated import TabulatedDistribution, geometric_grid

__all__ = [
    "IntervalScenario",
    "phi",
    "Phi",
    "log_Phi",
    "Phi_mu",
    "log_Phi_mu",
    "splitting_probabilities",
    "interval_distribution",
    "default_interval_grid",
    "TERMS",
    "SWITCH",
    "PANELS",
]

TERMS = 1000
SWITCH = 1.0
PANELS = 1000
# exp(-745) is the double-precision underflow threshold
_UNDERFLOW = 745.0


@dataclass(frozen=True)
class IntervalScenario:
    """Searchers start at ``x0`` in ``(0, l)``; target 0 is ``x <= 0`` and
    target 1 is ``x >= l``; constant drift ``mu`` points toward target 1."""

    l: float
    D: float
    x0: float
    mu: float = 0.0

    def __post_init__(self):
        if not (self.l > 0 and self.D > 0):
            raise ValueError("need l > 0 and D > 0")
        if not 0 < self.x0 < self.l:
            raise ValueError("x0 must lie strictly inside (0, l)")
        if not math.isfinite(self.mu):
            raise ValueError("mu must be finite")

    @property
    def lengths(self) -> tuple[float, float]:
        """Distances ``(L_0, L_1) = (x0, l - x0)`` to the two targets."""
        return self.x0, self.l - self.x0

    @property
    def b(self) -> float:
        return self.l**2 * self.mu**2 / (4 * self.D**2)


def _check(s, w):
    s = np.asarray(s, dtype=float)
    if not 0 < w < 1:
        raise ValueError("w must lie in (0, 1)")
    if np.any(s < 0) or np.any(~np.isfinite(s)):
        raise ValueError("s must be finite and nonnegative")
    return s


def _image_count(smax: float, terms: int) -> int:
    # images with (2k+w)^2/(4s) beyond the underflow threshold contribute exactly 0
    need = int(math.ceil(math.sqrt(4 * _UNDERFLOW * max(smax, 1e-300)) / 2)) + 2
    return max(1, min(terms, need))


def _phi_short(s, w, terms):
    K = _image_count(float(s.max()), terms)
    k = np.arange(-K, K + 1)
    a = (w + 2 * k)[None, :]
    ss = s[:, None]
    return np.sum(a * np.exp(-(a**2) / (4 * ss)), axis=1) / np.sqrt(4 * np.pi * s**3)


def _phi_long(s, w, terms):
    k = np.arange(1, terms + 1)
    kp = k * np.pi
    return np.sum(np.exp(-(kp[None, :] ** 2) * s[:, None]) * 2 * kp * np.sin(kp * w), axis=1)


def phi(s, w, terms: int = TERMS, switch: float = SWITCH):
    """Dimensionless hitting density for the end at distance ``w``.

    ``phi(s, w) ds`` is the probability of first exit through that end during
    ``[s, s + ds]``; it is defined for ``s > 0``.
    """
    s = _check(s, w)
    if np.any(s <= 0):
        raise ValueError("phi requires s > 0")
    flat = np.atleast_1d(s).ravel()
    out = np.empty_like(flat)
    short = flat <= switch
    if short.any():
        out[short] = _phi_short(flat[short], w, terms)
    if (~short).any():
        out[~short] = _phi_long(flat[~short], w, terms)
    return out.reshape(np.shape(s))[()]


def _log_Phi_short(s, w, terms):
    """Exact log of the erfc image sum, relative to its leading image."""
    out = np.full(s.shape, -np.inf)
    pos = s > 0
    if not pos.any():
        return out
    sp = s[pos]
    K = _image_count(float(sp.max()), terms)
    root = 2 * np.sqrt(sp)
    lead = log_erfc(w / root)
    k = np.arange(1, K + 1)
    plus = log_erfc((2 * k[None, :] + w) / root[:, None])
    minus = log_erfc((2 * k[None, :] - w) / root[:, None])
    rel = np.sum(np.exp(plus - lead[:, None]) - np.exp(minus - lead[:, None]), axis=1)
    out[pos] = lead + np.log1p(rel)
    return out


def _Phi_long(s, w, terms):
    k = np.arange(1, terms + 1)
    kp = k * np.pi
    decay = np.exp(-(kp[None, :] ** 2) * s[:, None])
    # sum_k 2 sin(k pi w)/(k pi) = 1 - w on (0, 1); only the transient is summed
    return (1 - w) - np.sum(decay * 2 * np.sin(kp * w) / kp, axis=1)


def log_Phi(s, w, terms: int = TERMS, switch: float = SWITCH):
    """Natural log of :func:`Phi`; finite wherever ``Phi > 0``."""
    s = _check(s, w)
    flat = np.atleast_1d(s).ravel()
    out = np.empty_like(flat)
    short = flat <= switch
    if short.any():
        out[short] = _log_Phi_short(flat[short], w, terms)
    if (~short).any():
        out[~short] = np.log(_Phi_long(flat[~short], w, terms))
    return out.reshape(np.shape(s))[()]


def Phi(s, w, terms: int = TERMS, switch: float = SWITCH):
    """Cumulative kernel ``Phi(s, w) = int_0^s phi(s', w) ds'``."""
    return np.exp(log_Phi(s, w, terms, switch))


def _mu_constant(b, w):
    """``sum_k 2 k pi sin(k pi w) / (b + k^2 pi^2) = sinh(sqrt(b)(1-w)) / sinh(sqrt(b))``."""
    if b == 0:
        return 1.0 - w
    rb = math.sqrt(b)
    return math.exp(-rb * w) * math.expm1(-2 * rb * (1 - w)) / math.expm1(-2 * rb)


def _Phi_mu_long(s, w, b, terms):
    k = np.arange(1, terms + 1)
    kp = k * np.pi
    lam = b + kp**2
    decay = np.exp(-lam[None, :] * s[:, None])
    return _mu_constant(b, w) - np.sum(decay * 2 * kp * np.sin(kp * w) / lam, axis=1)


def _log_Phi_mu_short(s, w, b, terms, panels):
    # Phi_mu(s) = exp(-b s) Phi(s) + b int_0^s exp(-b s') Phi(s') ds'.
    # The trapezoid acts only on the second (relatively small) term, accumulated
    # in log form so it survives underflow at tiny s.
    out = np.full(s.shape, -np.inf)
    pos = s > 0
    if not pos.any():
        return out
    sp = s[pos]
    lo = min(float(sp.min()), w * w / (4 * 700.0))
    nodes = np.union1d(np.geomspace(lo, float(sp.max()), panels + 1), sp)
    g = -b * nodes + _log_Phi_short(nodes, w, terms)
    # tail below the first node: Laplace estimate of int_0^lo Phi
    E0 = w * w / (4 * nodes[0])
    head = g[0] + math.log(nodes[0]) - math.log(E0 + 1.5)
    with np.errstate(divide="ignore"):
        logpanel = np.log(np.diff(nodes) / 2) + np.logaddexp(g[:-1], g[1:])
    logI = np.logaddexp.accumulate(np.concatenate([[head], logpanel]))
    idx = np.searchsorted(nodes, sp)
    out[pos] = np.logaddexp(-b * sp + _log_Phi_short(sp, w, terms), math.log(b) + logI[idx])
    return out


def log_Phi_mu(s, w, b, terms: int = TERMS, switch: float = SWITCH, panels: int = PANELS):
    """Natural log of :func:`Phi_mu`."""
    s = _check(s, w)
    if b < 0:
        raise ValueError("b must be nonnegative")
    if b == 0:
        return log_Phi(s, w, terms, switch)
    flat = np.atleast_1d(s).ravel()
    out = np.empty_like(flat)
    short = flat <= switch
    if short.any():
        out[short] = _log_Phi_mu_short(flat[short], w, b, terms, panels)
    if (~short).any():
        out[~short] = np.log(_Phi_mu_long(flat[~short], w, b, terms))
    return out.reshape(np.shape(s))[()]


def Phi_mu(s, w, b, terms: int = TERMS, switch: float = SWITCH, panels: int = PANELS):
    """Drift-weighted cumulative kernel ``int_0^s exp(-b s') phi(s', w) ds'``."""
    return np.exp(log_Phi_mu(s, w, b, terms, switch, panels))


def splitting_probabilities(scn: IntervalScenario) -> np.ndarray:
    """Single-searcher probabilities ``(P(kappa=0), P(kappa=1))``."""
    if scn.mu == 0:
        p1 = scn.x0 / scn.l
    else:
        r = scn.mu / scn.D
        p1 = math.expm1(-r * scn.x0) / math.expm1(-r * scn.l)
    return np.array([1.0 - p1, p1])


def default_interval_grid(scn: IntervalScenario, N_max: float = 1e8,
                          points: int = 4000, survival_floor: float = 1e-13) -> np.ndarray:
    """Geometric grid from well before the extreme-statistic peak to the time
    the single-searcher survival drops below ``survival_floor``."""
    C0 = min(scn.lengths) ** 2 / (4 * scn.D)
    t_min = C0 / (math.log(max(N_max, 2.0)) + 40.0)
    lam1 = math.pi**2 * scn.D / scn.l**2 + scn.mu**2 / (4 * scn.D)
    t_max = (math.log(1 / survival_floor) + 3.0) / lam1
    return geometric_grid(t_min, t_max, points)


def interval_distribution(scn: IntervalScenario, grid=None, terms: int = TERMS,
                          switch: float = SWITCH, panels: int = PANELS) -> TabulatedDistribution:
    """Tabulate ``F``, ``F_0``, ``F_1`` for ``scn`` on ``grid``."""
    t = default_interval_grid(scn) if grid is None else np.asarray(grid, dtype=float)
    if np.any(np.diff(t) <= 0):
        raise ValueError("time grid must be strictly increasing")
    s = scn.D * t / scn.l**2
    w0, w1 = scn.x0 / scn.l, 1 - scn.x0 / scn.l
    if scn.mu == 0:
        lf0 = log_Phi(s, w0, terms, switch)
        lf1 = log_Phi(s, w1, terms, switch)
    else:
        lf0 = -scn.mu * scn.x0 / (2 * scn.D) + log_Phi_mu(s, w0, scn.b, terms, switch, panels)
        lf1 = scn.mu * (scn.l - scn.x0) / (2 * scn.D) + log_Phi_mu(s, w1, scn.b, terms, switch, panels)
    log_Fk = np.vstack([lf0, lf1])
    Fk = np.exp(log_Fk)
    tails = splitting_probabilities(scn)
    # series truncation can leave O(1e-16) overshoot at late times
    Fk = np.minimum(np.maximum.accumulate(Fk, axis=1), tails[:, None])
    log_F = np.logaddexp(lf0, lf1)
    return TabulatedDistribution(
        times=t, F=Fk.sum(axis=0), Fk=Fk, tail_mass=tails, escape_mass=0.0,
        log_F=log_F, log_Fk=log_Fk,
        diagnostics={"source": "series", "terms": terms, "switch": switch},
    )
