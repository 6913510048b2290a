"""Monte Carlo oracles: inversion sampling from a tabulation and direct
path simulation of the 1-D and radial scenarios.

Randomness is organised in fixed blocks of trials.  Block ``b`` of stream
``stream_id`` under ``seed`` always draws from the same generator, so
results depend only on ``(seed, stream_id, M, N)`` and never on the number
of worker threads.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from statistics import NormalDist

import numpy as np

from .tabulated import TabulatedDistribution

__all__ = [
    "RngStream",
    "McEstimate",
    "wilson_interval",
    "sample_tau_kappa",
    "sample_many",
    "estimate_extreme",
    "simulate_path",
    "simulate_paths",
    "StepSizeError",
]

_Z95 = NormalDist().inv_cdf(0.975)
# uniforms held in memory per block of extreme-statistic trials
_BLOCK_UNIFORMS = 1 << 21


class StepSizeError(ValueError):
    """Time step too coarse for the path simulator."""


@dataclass(frozen=True)
class RngStream:
    """Deterministic family of generators keyed by ``(seed, stream_id)``."""

    seed: int
    stream_id: int = 0

    def generator(self, block: int = 0) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=int(self.seed), spawn_key=(int(self.stream_id), int(block)))
        return np.random.Generator(np.random.PCG64(ss))


@dataclass(frozen=True)
class McEstimate:
    """Frequency estimate of ``P(K_N = k)``; ``k = None`` stands for escape."""

    p_hat: float
    ci_low: float
    ci_high: float
    samples: int
    N: int
    k: int | None
    count: int = 0

    def contains(self, p: float) -> bool:
        return self.ci_low <= p <= self.ci_high


def wilson_interval(count: int, n: int, z: float = _Z95) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if n <= 0:
        raise ValueError("need n > 0")
    ph = count / n
    z2 = z * z
    denom = 1 + z2 / n
    centre = (ph + z2 / (2 * n)) / denom
    half = z * math.sqrt(ph * (1 - ph) / n + z2 / (4 * n * n)) / denom
    return max(0.0, centre - half), min(1.0, centre + half)


# --------------------------------------------------------------------------
# inversion sampling


class _Inverter:
    """Vectorised inverse of a tabulated ``F`` with target labels.

    Cell ``j`` covers ``F[j-1] < u <= F[j]`` with ``F[-1] = 0`` and a final
    cell up to ``F(inf) = 1 - escape``; within a cell ``ln t`` is linear in
    ``u``.  Outside the grid, the short-time cell follows ``exp(-c/t)`` and
    the long-time cell an exponential tail, each with the local rate of the
    adjacent grid interval.
    """

    def __init__(self, tab: TabulatedDistribution):
        self.tab = tab
        t, F = tab.times, tab.F
        self.total = 1.0 - tab.escape_mass
        self.F_ext = np.append(F, max(self.total, F[-1]))
        self.logt = np.log(t)
        masses = np.empty((t.size + 1, tab.m))
        masses[0] = tab.Fk[:, 0]
        masses[1:-1] = np.diff(tab.Fk, axis=1).T
        masses[-1] = tab.tail_mass - tab.Fk[:, -1]
        masses = np.clip(masses, 0.0, None)
        sums = masses.sum(axis=1, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            cum = np.cumsum(masses, axis=1) / sums
        cum[~np.isfinite(cum).all(axis=1)] = np.linspace(1 / tab.m, 1, tab.m)
        cum[:, -1] = 1.0
        self.cum = cum
        lf = tab.log_F
        c = -(lf[1] - lf[0]) / (1 / t[1] - 1 / t[0])
        self.c_short = c if np.isfinite(c) and c > 0 else None
        rest = self.total - F
        if rest[-2] > 0 and rest[-1] > 0 and rest[-1] < rest[-2]:
            self.lam = math.log(rest[-2] / rest[-1]) / (t[-1] - t[-2])
        else:
            self.lam = None

    def cells(self, u):
        return np.searchsorted(self.F_ext, u, side="left")

    def times(self, u, j):
        t, F, n = self.tab.times, self.tab.F, self.tab.times.size
        tau = np.full(u.shape, np.inf)
        inner = (j >= 1) & (j < n)
        ji = j[inner]
        lo, hi = F[ji - 1], F[ji]
        frac = np.where(hi > lo, (u[inner] - lo) / np.where(hi > lo, hi - lo, 1.0), 1.0)
        tau[inner] = np.exp(self.logt[ji - 1] + frac * (self.logt[ji] - self.logt[ji - 1]))
        first = j == 0
        if first.any():
            uf = np.maximum(u[first], 1e-300)
            if self.c_short is not None and F[0] > 0:
                c = self.c_short
                tau[first] = c / (c / t[0] - np.log(uf / F[0]))
            else:
                tau[first] = t[0] * uf / max(F[0], 1e-300)
        last = j == n
        if last.any():
            rest0 = self.total - F[-1]
            remain = np.maximum(self.total - u[last], 1e-300)
            if self.lam is not None and rest0 > 0:
                tau[last] = t[-1] + np.log(rest0 / remain) / self.lam
            else:
                tau[last] = t[-1]
        return tau

    def labels(self, j, v):
        lab = np.full(j.shape, -1, dtype=np.int64)
        ok = j <= self.tab.times.size
        rows = self.cum[j[ok]]
        lab[ok] = (v[ok, None] > rows).sum(axis=1)
        return lab


def sample_many(tab: TabulatedDistribution, size: int, gen: np.random.Generator):
    """``size`` independent draws of ``(tau, kappa)``; escape is
    ``(inf, -1)``."""
    inv = _Inverter(tab)
    u = gen.random(size)
    v = gen.random(size)
    j = inv.cells(u)
    return inv.times(u, j), inv.labels(j, v)


def sample_tau_kappa(tab: TabulatedDistribution, rng: RngStream, block: int = 0):
    """One draw of ``(tau, kappa)``; ``(inf, inf)`` when the searcher escapes."""
    tau, kap = sample_many(tab, 1, rng.generator(block))
    if kap[0] < 0:
        return math.inf, math.inf
    return float(tau[0]), int(kap[0])


def _block_counts(inv: _Inverter, N: int, trials: int, gen: np.random.Generator, direct: bool):
    if direct:
        # the minimum of N uniforms has CDF 1 - (1 - u)**N
        u = -np.expm1(np.log1p(-gen.random(trials)) / N)
    else:
        u = gen.random((trials, N)).min(axis=1)
    v = gen.random(trials)
    lab = inv.labels(inv.cells(u), v)
    m = inv.tab.m
    counts = np.bincount(np.where(lab < 0, m, lab), minlength=m + 1)
    return counts


def estimate_extreme(tab: TabulatedDistribution, N: int, M: int, rng: RngStream,
                     threads: int | None = None, direct_min: bool = False) -> list[McEstimate]:
    """Estimate ``P(K_N = k)`` for every target and for escape (last entry,
    ``k = None``) from ``M`` trials of ``N`` searchers.

    Each trial draws ``N`` uniforms and keeps the smallest; because the
    tabulated ``F`` is monotone, the searcher holding it is the fastest, so
    only that one is inverted and labelled.  ``direct_min=True`` draws the
    minimum directly instead, at cost independent of ``N``.
    """
    N, M = int(N), int(M)
    if N < 1 or M < 100:
        raise ValueError("need N >= 1 and M >= 100")
    inv = _Inverter(tab)
    per_block = max(1, _BLOCK_UNIFORMS // (1 if direct_min else N))
    bounds = [(b, min(per_block, M - b * per_block)) for b in range(-(-M // per_block))]
    threads = threads or int(os.environ.get("XFPT_THREADS", "1") or 1)

    def work(item):
        b, size = item
        return _block_counts(inv, N, size, rng.generator(b), direct_min)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, bounds))
    else:
        parts = [work(item) for item in bounds]
    counts = np.sum(parts, axis=0)
    out = []
    for k in range(tab.m + 1):
        lo, hi = wilson_interval(int(counts[k]), M)
        out.append(McEstimate(counts[k] / M, lo, hi, M, N, k if k < tab.m else None, int(counts[k])))
    return out


# --------------------------------------------------------------------------
# path simulation


def _char_time(spec) -> float:
    if spec.kind.startswith("interval"):
        return spec.l**2 / spec.D
    if spec.kind == "concentric3d":
        return (spec.R1 - spec.R0) ** 2 / spec.D
    raise ValueError(f"path simulation does not support kind {spec.kind!r}")


def _bridge_hit(d1, d2, D, dt, gen):
    """Did a Brownian bridge between distances ``d1, d2 > 0`` from a flat
    boundary touch it within ``dt``?  Only paths near the boundary draw."""
    expo = np.maximum(d1, 0) * np.maximum(d2, 0) / (D * dt)
    hit = np.zeros(expo.shape, bool)
    near = np.flatnonzero(expo < 40.0)  # exp(-40): negligible
    if near.size:
        hit[near] = gen.random(near.size) < np.exp(-expo[near])
    return hit


def simulate_paths(spec, dt: float, n_paths: int, rng: RngStream, t_max: float | None = None,
                   block: int = 0):
    """Euler-Maruyama paths until absorption; returns arrays ``(tau, kappa)``.

    Perfectly absorbing boundaries use a Brownian-bridge crossing test each
    step.  A Robin end with trapping rate ``gamma`` absorbs a path that
    crosses it with probability ``gamma * sqrt(pi dt / D)`` and reflects it
    otherwise.  The radial scenario moves in 3-D Cartesian coordinates.
    Paths still running at ``t_max`` get ``tau = inf`` and ``kappa = -1``.
    """
    T = _char_time(spec)
    if not 0 < dt <= 1e-4 * T * (1 + 1e-12):
        raise StepSizeError(f"dt must be in (0, 1e-4 * {T:g}]")
    t_max = 50.0 * T if t_max is None else t_max
    gen = rng.generator(block)
    D = spec.D
    tau = np.full(n_paths, np.inf)
    kap = np.full(n_paths, -1, dtype=np.int64)
    sd = math.sqrt(2 * D * dt)
    ids = np.arange(n_paths)
    radial = spec.kind == "concentric3d"
    if radial:
        X = np.zeros((n_paths, 3))
        X[:, 0] = spec.r0
        R0, R1 = spec.R0, spec.R1
    else:
        x = np.full(n_paths, float(spec.x0))
        l = spec.l
        mu = spec.mu if spec.kind == "interval_drift" else 0.0
        g0 = spec.gamma0 if spec.kind == "interval_robin" else math.inf
        g1 = spec.gamma1 if spec.kind == "interval_robin" else math.inf
        pr = [g * math.sqrt(math.pi * dt / D) for g in (g0, g1)]
        if any(math.isfinite(g) and p > 1 for g, p in zip((g0, g1), pr)):
            raise StepSizeError("gamma * sqrt(pi dt / D) exceeds 1; reduce dt")
    steps = 0
    while ids.size and steps * dt < t_max:
        steps += 1
        if radial:
            ra = np.sqrt(np.einsum("ij,ij->i", X, X))
            X = X + sd * gen.standard_normal(X.shape)
            rb = np.sqrt(np.einsum("ij,ij->i", X, X))
            hit0 = (rb <= R0) | _bridge_hit(ra - R0, rb - R0, D, dt, gen)
            hit1 = ~hit0 & ((rb >= R1) | _bridge_hit(R1 - ra, R1 - rb, D, dt, gen))
        else:
            xa = x
            x = xa + mu * dt + sd * gen.standard_normal(xa.size)
            if math.isinf(g0):
                hit0 = (x <= 0) | _bridge_hit(xa, x, D, dt, gen)
            else:
                cross = x < 0
                hit0 = cross & (gen.random(x.size) < pr[0])
                x = np.where(cross & ~hit0, -x, x)
            if math.isinf(g1):
                hit1 = ~hit0 & ((x >= l) | _bridge_hit(l - xa, l - x, D, dt, gen))
            else:
                cross = ~hit0 & (x > l)
                hit1 = cross & (gen.random(x.size) < pr[1])
                x = np.where(cross & ~hit1, 2 * l - x, x)
        done = hit0 | hit1
        if done.any():
            tau[ids[done]] = steps * dt
            kap[ids[done]] = np.where(hit0[done], 0, 1)
            keep = ~done
            ids = ids[keep]
            if radial:
                X = X[keep]
            else:
                x = x[keep]
    return tau, kap


def simulate_path(spec, dt: float, rng: RngStream, block: int = 0):
    """One simulated ``(tau, kappa)``; ``(inf, inf)`` if not absorbed by the
    default horizon."""
    tau, kap = simulate_paths(spec, dt, 1, rng, block=block)
    if kap[0] < 0:
        return math.inf, math.inf
    return float(tau[0]), int(kap[0])
