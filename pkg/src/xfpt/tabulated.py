"""Tabulated joint law of a single searcher's hitting time and hit target."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["TabulatedDistribution", "geometric_grid"]


def _log_of(values: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(np.clip(values, 0.0, None))


@dataclass(frozen=True)
class TabulatedDistribution:
    """``F(t) = P(tau <= t)`` and ``F_k(t) = P(tau <= t, kappa = k)`` on a grid.

    ``log_F`` / ``log_Fk`` carry the same columns in natural-log form; when the
    producer knows them analytically they stay finite long after the linear
    values underflow to zero. If omitted they are derived from the linear
    columns.
    """

    times: np.ndarray
    F: np.ndarray
    Fk: np.ndarray
    tail_mass: np.ndarray
    escape_mass: float = 0.0
    log_F: np.ndarray | None = None
    log_Fk: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        if times.ndim != 1 or times.size < 2:
            raise ValueError("times must be a 1-D grid with at least two points")
        if not np.all(np.diff(times) > 0):
            raise ValueError("time grid must be strictly increasing")
        if times[0] < 0:
            raise ValueError("times must be nonnegative")
        Fk = np.atleast_2d(np.asarray(self.Fk, dtype=float))
        F = np.asarray(self.F, dtype=float)
        if Fk.shape[1] != times.size or F.shape != times.shape:
            raise ValueError("column lengths do not match the time grid")
        tail = np.asarray(self.tail_mass, dtype=float)
        if tail.shape != (Fk.shape[0],):
            raise ValueError("need one tail mass per target")
        log_F = _log_of(F) if self.log_F is None else np.asarray(self.log_F, float)
        log_Fk = _log_of(Fk) if self.log_Fk is None else np.atleast_2d(
            np.asarray(self.log_Fk, float))
        for name, val in (("times", times), ("F", F), ("Fk", Fk), ("tail_mass", tail),
                          ("log_F", log_F), ("log_Fk", log_Fk)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)
        object.__setattr__(self, "escape_mass", float(self.escape_mass))

    @property
    def m(self) -> int:
        """Number of targets."""
        return self.Fk.shape[0]

    def log_survival(self) -> np.ndarray:
        """``ln(1 - F(t))`` without cancellation at small ``F``."""
        with np.errstate(divide="ignore"):
            small = self.F < 1e-15
            out = np.log1p(-np.minimum(self.F, 1.0))
            out[small] = -np.exp(self.log_F[small])
        return out

    def check(self, tol: float = 1e-10) -> list[str]:
        """Return a list of violated invariants (empty when consistent)."""
        problems = []
        if np.max(np.abs(self.F - self.Fk.sum(axis=0))) > tol:
            problems.append("F != sum_k F_k")
        for name, col in [("F", self.F)] + [(f"F_{k}", c) for k, c in enumerate(self.Fk)]:
            if np.any(np.diff(col) < -tol):
                problems.append(f"{name} not nondecreasing")
        if np.any(self.Fk < -tol) or np.any(self.F > 1 + tol):
            problems.append("probabilities outside [0, 1]")
        if abs(self.tail_mass.sum() + self.escape_mass - 1.0) > max(tol, 1e-9):
            problems.append("tail masses and escape mass do not sum to 1")
        return problems


def geometric_grid(t_min: float, t_max: float, points: int = 4000) -> np.ndarray:
    """Geometrically spaced grid on ``[t_min, t_max]``."""
    if not 0 < t_min < t_max:
        raise ValueError("need 0 < t_min < t_max")
    return np.geomspace(t_min, t_max, int(points))
