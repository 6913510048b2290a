"""Short-time laws ``F_k(t) ~ A t**p exp(-C/t)``: catalog and empirical fit.

Entry 0 of a catalog describes ``F`` (hitting *any* target), whose leading
behaviour is set by the closest target; entry ``k >= 1`` describes ``F_k``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .tabulated import TabulatedDistribution

__all__ = ["ShortTimeParams", "FitResult", "InsufficientResolution", "catalog", "fit_shorttime"]


class InsufficientResolution(ValueError):
    """The tabulation does not resolve enough of the short-time tail."""


@dataclass(frozen=True)
class ShortTimeParams:
    """Parameters of ``A t**p exp(-C/t)``.

    ``proven`` is False for entries that are conjectured rather than derived
    (partially absorbing ends, curved targets)."""

    A: float
    p: float
    C: float
    proven: bool = True

    def __post_init__(self):
        if not (self.A > 0 and self.C > 0):
            raise ValueError("need A > 0 and C > 0")

    def log_value(self, t):
        t = np.asarray(t, float)
        return math.log(self.A) + self.p * np.log(t) - self.C / t


def _free(L, D):
    return math.sqrt(4 * D / (math.pi * L * L))


def catalog(spec) -> list[ShortTimeParams]:
    """Leading short-time parameters for each target of ``spec``."""
    kind, D = spec.kind, spec.D
    L = spec.target_lengths()
    C = [v * v / (4 * D) for v in L]
    if kind == "interval_pure":
        return [ShortTimeParams(_free(v, D), 0.5, c) for v, c in zip(L, C)]
    if kind == "interval_drift":
        mu = spec.mu
        return [ShortTimeParams(math.exp(-mu * L[0] / (2 * D)) * _free(L[0], D), 0.5, C[0]),
                ShortTimeParams(math.exp(mu * L[1] / (2 * D)) * _free(L[1], D), 0.5, C[1])]
    if kind == "interval_robin":
        out = []
        for v, c, g in zip(L, C, (spec.gamma0, spec.gamma1)):
            if math.isinf(g):
                out.append(ShortTimeParams(_free(v, D), 0.5, c, proven=False))
            else:
                out.append(ShortTimeParams(2 * g / v * _free(v, D), 1.5, c, proven=False))
        return out
    if kind == "concentric3d":
        r0 = spec.r0
        return [ShortTimeParams(spec.R0 / r0 * _free(L[0], D), 0.5, C[0], proven=False),
                ShortTimeParams(spec.R1 / r0 * _free(L[1], D), 0.5, C[1], proven=False)]
    if kind == "narrow_capture":
        x = np.asarray(spec.start)
        out = []
        for v, c, ctr, r in zip(L, C, spec.centers, spec.radii):
            ratio = spec.epsilon * r / float(np.linalg.norm(x - np.asarray(ctr)))
            out.append(ShortTimeParams(ratio * _free(v, D), 0.5, c, proven=False))
        return out
    raise ValueError(f"no short-time catalog for kind {kind!r}")


@dataclass(frozen=True)
class FitResult:
    params: ShortTimeParams
    residual: float
    window: tuple[float, float]
    n_points: int
    diagnostics: dict = field(default_factory=dict, compare=False)


def _local_scale(t, logF):
    # -d lnF / d(1/t): tends to C where the short-time law holds
    return -np.diff(logF) / np.diff(1.0 / t)


def fit_shorttime(tab: TabulatedDistribution, target: int, floor: float = 1e-250,
                  ceiling: float = 1e-3, band: float = 0.2, min_decades: float = 1.5) -> FitResult:
    """Least-squares fit of ``ln F_k = ln A + p ln t - C/t``.

    Only points with ``floor <= F_k <= ceiling`` qualify.  The local scale
    ``-d ln F_k / d(1/t)`` (equal to ``C + p t + ...`` under the law) is
    computed between neighbouring points, and the fit uses the longest
    contiguous run where it stays within ``band`` of its median.  For
    ``target = -1`` the total ``F`` is fitted.
    """
    logF = tab.log_F if target == -1 else tab.log_Fk[target]
    t = tab.times
    ok = (logF >= math.log(floor)) & (logF <= math.log(ceiling)) & np.isfinite(logF)
    if ok.sum() < 8:
        raise InsufficientResolution("fewer than 8 grid points in the short-time window")
    sel = np.flatnonzero(ok)
    # restrict to the leading contiguous block of qualifying points
    breaks = np.flatnonzero(np.diff(sel) > 1)
    if breaks.size:
        sel = sel[: breaks[0] + 1]
    ts, ys = t[sel], logF[sel]
    if math.log10(ts[-1] / ts[0]) < min_decades:
        raise InsufficientResolution(
            f"qualifying window spans {math.log10(ts[-1] / ts[0]):.2f} decades of t; need {min_decades}")

    c = _local_scale(ts, ys)
    med = float(np.median(c))
    good = np.abs(c - med) <= band * abs(med)
    # longest contiguous run of good intervals
    best, start, run_start = (0, 0), None, None
    for i, g in enumerate(np.append(good, False)):
        if g and run_start is None:
            run_start = i
        elif not g and run_start is not None:
            if i - run_start > best[1] - best[0]:
                best = (run_start, i)
            run_start = None
    lo, hi = best[0], best[1] + 1  # intervals [lo, hi) -> points lo..hi
    tw, yw = ts[lo:hi], ys[lo:hi]
    if tw.size < 5:
        raise InsufficientResolution("no stable short-time window found")

    X = np.column_stack([np.ones_like(tw), np.log(tw), -1.0 / tw])
    coef, *_ = np.linalg.lstsq(X, yw, rcond=None)
    resid = float(np.linalg.norm(X @ coef - yw) / math.sqrt(tw.size))
    logA, p, C = coef
    if not C > 0:
        raise InsufficientResolution(f"fitted C = {C:.3g} is not positive")
    params = ShortTimeParams(float(math.exp(logA)), float(p), float(C), proven=False)
    return FitResult(params, resid, (float(tw[0]), float(tw[-1])), int(tw.size),
                     {"median_scale": med, "log_A": float(logA)})
