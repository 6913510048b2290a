"""Crank-Nicolson solver for hitting-time laws without a usable closed series.

Two problems are covered: the interval ``(0, l)`` with Robin (partially
absorbing) ends, and the radial shell ``R0 < r < R1`` between two absorbing
concentric spheres in 3-D.  For both, ``F(x, t)`` and ``F_1(x, t)`` solve the
backward equation with zero initial data and boundary data that switches on
at ``t = 0``.

The march does not start at ``t = 0``.  At a tiny time ``t_start`` the
solution is, to within ``exp(-600)`` relative, the superposition of the
half-line solutions of each end, which are known in closed form; the solver
is initialised from those and steps forward with a step size that shrinks
in proportion to the local large-deviation exponent ``L**2 / (4 D t)``.
This keeps relative accuracy deep in the short-time tail, which is what the
extreme statistics depend on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded

from .special import erfc, erfcx, log_erfc
from .tabulated import TabulatedDistribution, geometric_grid

__all__ = [
    "RobinIntervalProblem",
    "ConcentricProblem",
    "SolverError",
    "solve_robin_interval",
    "solve_concentric",
    "halfline_cdf",
    "exterior_sphere_cdf",
    "exterior_sphere_distribution",
    "default_grid",
]

INF = math.inf
E_START = 600.0
E_CAP = 700.0


class SolverError(RuntimeError):
    """The linear solve produced non-finite values."""


@dataclass(frozen=True)
class RobinIntervalProblem:
    """Interval ``(0, l)`` with trapping rates ``gamma0`` at ``x = 0`` and
    ``gamma1`` at ``x = l`` (``math.inf`` for a perfectly absorbing end)."""

    l: float
    D: float
    x0: float
    gamma0: float = INF
    gamma1: float = INF

    def __post_init__(self):
        if not (self.l > 0 and self.D > 0):
            raise ValueError("need l > 0 and D > 0")
        if not 0 < self.x0 < self.l:
            raise ValueError("x0 must lie strictly inside (0, l)")
        for g in (self.gamma0, self.gamma1):
            if math.isnan(g) or g < 0:
                raise ValueError("trapping rates must be >= 0 or inf")
        if not (self.gamma0 > 0 or self.gamma1 > 0):
            raise ValueError("at least one trapping rate must be positive")

    @property
    def lengths(self) -> tuple[float, float]:
        return self.x0, self.l - self.x0

    def splitting_probability(self) -> float:
        """Single-searcher ``P(kappa = 1)``; the harmonic function is linear."""
        a = 0.0 if self.gamma0 == INF else (INF if self.gamma0 == 0 else self.D / self.gamma0)
        c = 0.0 if self.gamma1 == INF else (INF if self.gamma1 == 0 else self.D / self.gamma1)
        if a == INF:
            return 1.0
        if c == INF:
            return 0.0
        return (self.x0 + a) / (self.l + a + c)


@dataclass(frozen=True)
class ConcentricProblem:
    """Absorbing spheres ``|x| <= R0`` (target 0) and ``|x| >= R1`` (target 1)."""

    R0: float
    R1: float
    r0: float
    D: float

    def __post_init__(self):
        if not 0 < self.R0 < self.r0 < self.R1:
            raise ValueError("need 0 < R0 < r0 < R1")
        if not self.D > 0:
            raise ValueError("need D > 0")

    @property
    def lengths(self) -> tuple[float, float]:
        return self.r0 - self.R0, self.R1 - self.r0

    def splitting_probability(self) -> float:
        return self.R1 / (self.R1 - self.R0) * (self.r0 - self.R0) / self.r0


def halfline_cdf(x, t, D: float, gamma: float = INF):
    """Hitting probability by ``t`` of the end of a half-line at distance ``x``.

    For finite ``gamma`` the end is partially absorbing (Robin); the form
    ``erfc(z) - exp(2 a z + a^2) erfc(z + a)`` is evaluated through ``erfcx``.
    """
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    z = x / np.sqrt(4 * D * t)
    if gamma == INF:
        return erfc(z)
    a = gamma * np.sqrt(t / D)
    with np.errstate(under="ignore"):
        return np.exp(-z * z) * (erfcx(z) - erfcx(z + a))


def exterior_sphere_cdf(r, t, R0: float, D: float):
    """``P(tau <= t)`` for the exterior of an absorbing sphere of radius ``R0``."""
    r = np.asarray(r, dtype=float)
    return R0 / r * erfc((r - R0) / np.sqrt(4 * D * np.asarray(t, dtype=float)))


def exterior_sphere_distribution(R0: float, r0: float, D: float, grid) -> TabulatedDistribution:
    """Single absorbing sphere in free 3-D space; escape mass ``1 - R0/r0``."""
    if not 0 < R0 < r0:
        raise ValueError("need 0 < R0 < r0")
    t = np.asarray(grid, dtype=float)
    logF = math.log(R0 / r0) + log_erfc((r0 - R0) / np.sqrt(4 * D * t))
    F = np.exp(logF)
    return TabulatedDistribution(times=t, F=F, Fk=F[None, :], tail_mass=np.array([R0 / r0]),
                                 escape_mass=1 - R0 / r0, log_F=logF, log_Fk=logF[None, :],
                                 diagnostics={"source": "closed form"})


# --------------------------------------------------------------------------
# discretisation


class _Operator:
    """Tridiagonal ``dG/dt = A G + c_j`` on the unknown nodes, two columns."""

    def __init__(self, lower, diag, upper, sources, unknown, fixed):
        self.lower, self.diag, self.upper = lower, diag, upper
        self.sources = sources          # (n_unknown, 2)
        self.unknown = unknown          # indices into the full node array
        self.fixed = fixed              # {node index: (value_F, value_F1)}

    def apply(self, G):
        out = self.diag[:, None] * G
        out[1:] += self.lower[1:, None] * G[:-1]
        out[:-1] += self.upper[:-1, None] * G[1:]
        return out

    def banded(self, scale):
        n = self.diag.size
        ab = np.zeros((3, n))
        ab[0, 1:] = -scale * self.upper[:-1]
        ab[1] = 1 - scale * self.diag
        ab[2, :-1] = -scale * self.lower[1:]
        return ab

    def full(self, G, n_nodes):
        out = np.empty((n_nodes, 2))
        out[self.unknown] = G
        for j, vals in self.fixed.items():
            out[j] = vals
        return out


def _interval_operator(prob: RobinIntervalProblem, nodes: int):
    n = nodes - 1
    h = prob.l / n
    D = prob.D
    k = D / h**2
    lower = np.full(nodes, k)
    upper = np.full(nodes, k)
    diag = np.full(nodes, -2 * k)
    src = np.zeros((nodes, 2))
    fixed = {}
    # boundary targets: F -> 1 at both ends; F1 -> 0 at x=0, 1 at x=l
    g_left, g_right = (1.0, 0.0), (1.0, 1.0)
    if prob.gamma0 == INF:
        fixed[0] = g_left
        src[1] += k * np.array(g_left)
    else:
        upper[0] = 2 * k
        diag[0] = -2 * k - 2 * prob.gamma0 / h
        src[0] = 2 * prob.gamma0 / h * np.array(g_left)
    if prob.gamma1 == INF:
        fixed[n] = g_right
        src[n - 1] += k * np.array(g_right)
    else:
        lower[n] = 2 * k
        diag[n] = -2 * k - 2 * prob.gamma1 / h
        src[n] = 2 * prob.gamma1 / h * np.array(g_right)
    unknown = np.array([j for j in range(nodes) if j not in fixed])
    x = np.linspace(0.0, prob.l, nodes)
    return x, _Operator(lower[unknown], diag[unknown], upper[unknown], src[unknown], unknown, fixed)


def _radial_operator(prob: ConcentricProblem, nodes: int):
    n = nodes - 1
    r = np.linspace(prob.R0, prob.R1, nodes)
    h = (prob.R1 - prob.R0) / n
    D = prob.D
    rm = (r - h / 2) ** 2
    rp = (r + h / 2) ** 2
    scale = D / (r**2 * h**2)
    lower = scale * rm
    upper = scale * rp
    diag = -scale * (rm + rp)
    src = np.zeros((nodes, 2))
    g_in, g_out = (1.0, 0.0), (1.0, 1.0)
    fixed = {0: g_in, n: g_out}
    src[1] += lower[1] * np.array(g_in)
    src[n - 1] += upper[n - 1] * np.array(g_out)
    unknown = np.arange(1, n)
    return r, _Operator(lower[unknown], diag[unknown], upper[unknown], src[unknown], unknown, fixed)


def _smallest_decay_rate(op: _Operator, iters: int = 30) -> float:
    """Smallest eigenvalue of ``-A`` by inverse iteration."""
    ab = op.banded(1.0)
    ab[1] -= 1.0  # banded(1) encodes I - A; drop the identity
    v = np.ones(op.diag.size)
    lam = 0.0
    for _ in range(iters):
        u = solve_banded((1, 1), ab, v)
        lam = float(np.linalg.norm(v) / np.linalg.norm(u))
        v = u / np.linalg.norm(u)
    return lam


def _interp_at(xs, G, x0):
    """Cubic Lagrange interpolation at ``x0`` through the four nearest nodes,
    done on ``log G`` where all four values are positive."""
    i = int(np.clip(np.searchsorted(xs, x0) - 2, 0, xs.size - 4))
    xi = xs[i:i + 4]
    w = np.ones(4)
    for a in range(4):
        for b in range(4):
            if a != b:
                w[a] *= (x0 - xi[b]) / (xi[a] - xi[b])
    vals = G[i:i + 4]
    out = np.empty(vals.shape[1:])
    for c in range(vals.shape[1]):
        v = vals[:, c]
        if np.all(v > 0):
            out[c] = math.exp(float(w @ np.log(v)))
        else:
            out[c] = float(w @ v)
    return out


def _march(xs, op, init, x0, t_start, times, L_ref, D, kappa=0.1, rho_max=0.02):
    """Crank-Nicolson from ``t_start``; returns values at ``x0`` for ``times``."""
    G = init(t_start)[op.unknown]
    out = np.empty((times.size, 2))
    t = t_start
    clamped = 0
    steps = 0
    for i, t_out in enumerate(times):
        while t < t_out * (1 - 1e-14):
            E = min(E_CAP, L_ref**2 / (4 * D * t))
            dt = min(t * min(rho_max, kappa / max(E, 1e-300)), t_out - t)
            rhs = G + 0.5 * dt * op.apply(G) + dt * op.sources
            G = solve_banded((1, 1), op.banded(0.5 * dt), rhs, check_finite=False)
            if not np.all(np.isfinite(G)):
                raise SolverError(f"non-finite solution at t={t:g}; grid may be ill-conditioned")
            neg = G < 0
            if neg.any():
                clamped += int(neg.sum())
                G[neg] = 0.0
            t += dt
            steps += 1
        t = t_out
        out[i] = _interp_at(xs, op.full(G, xs.size), x0)
    return out, {"steps": steps, "clamped_negative": clamped}


def _assemble(times, cols_early, cols_solved, tail1, diag):
    cols = np.vstack([cols_early, cols_solved]) if cols_early.size else cols_solved
    F = np.clip(cols[:, 0], 0.0, 1.0)
    F1 = np.clip(cols[:, 1], 0.0, 1.0)
    F1 = np.minimum(np.maximum.accumulate(F1), F)
    F = np.maximum.accumulate(F)
    F0 = np.maximum.accumulate(np.clip(F - F1, 0.0, None))
    F = F0 + F1
    diag["monotone_repairs"] = int(np.sum(np.diff(cols[:, 0]) < 0) + np.sum(np.diff(cols[:, 1]) < 0))
    return TabulatedDistribution(times=times, F=F, Fk=np.vstack([F0, F1]),
                                 tail_mass=np.array([1 - tail1, tail1]), escape_mass=0.0,
                                 diagnostics=diag)


def _default_grid(L0, L1, D, lam1, N_max, points, survival_floor=1e-13):
    C0 = min(L0, L1) ** 2 / (4 * D)
    t_min = C0 / (math.log(max(N_max, 2.0)) + 40.0)
    t_max = (math.log(1 / survival_floor) + 3.0) / lam1
    return geometric_grid(t_min, t_max, points)


def default_grid(prob: RobinIntervalProblem | ConcentricProblem, space_nodes: int = 2000,
                 N_max: float = 1e8, points: int = 4000) -> np.ndarray:
    """Automatic tabulation grid: from ``C0 / (ln N_max + 40)`` to where the
    survival probability falls below 1e-13 (from the slowest decay rate)."""
    if isinstance(prob, ConcentricProblem):
        _, op = _radial_operator(prob, space_nodes)
    else:
        _, op = _interval_operator(prob, space_nodes)
    L0, L1 = prob.lengths
    return _default_grid(L0, L1, prob.D, _smallest_decay_rate(op), N_max, points)


def _solve(xs, op, init, x0, L0, L1, D, grid, N_max, points):
    lam1 = _smallest_decay_rate(op)
    times = _default_grid(L0, L1, D, lam1, N_max, points) if grid is None else np.asarray(grid, float)
    if times.ndim != 1 or np.any(np.diff(times) <= 0) or times[0] <= 0:
        raise ValueError("time grid must be strictly increasing and positive")
    t_start = min(L0, L1) ** 2 / (4 * D * E_START)
    early = times < t_start
    early_cols = np.empty((0, 2))
    if early.any():
        early_cols = np.array([_interp_at(xs, init(t), x0) for t in times[early]])
    solved, diag = _march(xs, op, init, x0, t_start, times[~early], max(L0, L1), D)
    # discrete steady state gives the tail masses consistent with the march
    ab = op.banded(1.0)
    ab[1] -= 1.0
    steady = solve_banded((1, 1), ab, op.sources)
    tail1 = float(_interp_at(xs, op.full(steady, xs.size), x0)[1])
    diag.update({"source": "crank-nicolson", "space_nodes": xs.size, "t_start": t_start,
                 "decay_rate": lam1})
    return times, early_cols, solved, tail1, diag


def _richardson(coarse: TabulatedDistribution, fine: TabulatedDistribution) -> TabulatedDistribution:
    """Cancel the ``h**2`` term of the log-domain error of two solves whose
    meshes differ by exactly a factor two in spacing.

    The semi-discrete kernel overestimates the tail by ``exp(E y**2 / 12)``
    with ``E = L**2/(4 D t)`` and ``y = 2 E h / L``, so the relative error
    grows like ``E**3 h**2``; extrapolating ``log F`` removes it.
    """
    def combine(lc, lf):
        out = (4.0 * lf - lc) / 3.0
        return np.where(np.isfinite(lc) & np.isfinite(lf), out, lf)

    with np.errstate(invalid="ignore"):
        lF = combine(coarse.log_F, fine.log_F)
        l1 = combine(coarse.log_Fk[1], fine.log_Fk[1])
    cols = np.column_stack([np.exp(lF), np.exp(l1)])
    tail1 = (4.0 * fine.tail_mass[1] - coarse.tail_mass[1]) / 3.0
    diag = dict(fine.diagnostics)
    diag.update({"richardson": True, "space_nodes": (coarse.diagnostics["space_nodes"],
                                                     fine.diagnostics["space_nodes"])})
    return _assemble(fine.times, np.empty((0, 2)), cols, tail1, diag)


def _with_richardson(run, space_nodes, grid, richardson):
    if space_nodes < 200:
        raise ValueError("space_nodes must be >= 200")
    coarse = run(space_nodes, grid)
    if not richardson:
        return coarse
    fine = run(2 * space_nodes - 1, coarse.times)
    return _richardson(coarse, fine)


def solve_robin_interval(prob: RobinIntervalProblem, space_nodes: int = 2000, grid=None,
                         N_max: float = 1e8, points: int = 4000,
                         richardson: bool = False) -> TabulatedDistribution:
    """Tabulate ``F, F_0, F_1`` at ``x0`` for the Robin interval problem.

    With ``richardson=True`` a second solve on the halved mesh is combined
    with the first to remove the leading spatial error of ``log F``; this
    matters only deep in the short-time tail (``F`` below ~1e-30).
    """
    D, l = prob.D, prob.l
    L0, L1 = prob.lengths

    def run(nodes, times):
        xs, op = _interval_operator(prob, nodes)

        def init(t):
            right = halfline_cdf(l - xs, t, D, prob.gamma1)
            left = halfline_cdf(xs, t, D, prob.gamma0)
            return np.column_stack([left + right, right])

        out = _solve(xs, op, init, prob.x0, L0, L1, D, times, N_max, points)
        return _assemble(*out)

    return _with_richardson(run, space_nodes, grid, richardson)


def solve_concentric(prob: ConcentricProblem, space_nodes: int = 2000, grid=None,
                     N_max: float = 1e8, points: int = 4000,
                     richardson: bool = False) -> TabulatedDistribution:
    """Tabulate ``F, F_0, F_1`` at radius ``r0`` between concentric spheres.

    ``richardson`` as in :func:`solve_robin_interval`.
    """
    D = prob.D
    L0, L1 = prob.lengths

    def run(nodes, times):
        rs, op = _radial_operator(prob, nodes)

        def init(t):
            inner = prob.R0 / rs * erfc((rs - prob.R0) / math.sqrt(4 * D * t))
            outer = prob.R1 / rs * erfc((prob.R1 - rs) / math.sqrt(4 * D * t))
            return np.column_stack([inner + outer, outer])

        out = _solve(rs, op, init, prob.r0, L0, L1, D, times, N_max, points)
        return _assemble(*out)

    return _with_richardson(run, space_nodes, grid, richardson)
