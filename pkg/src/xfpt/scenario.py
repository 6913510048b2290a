"""Declarative scenario descriptions and their JSON form.

A scenario is a flat JSON object with a ``kind`` discriminator, the
kind-specific geometric/physical parameters, and optional run controls::

    {"kind": "interval_drift", "l": 1.0, "D": 1.0, "x0": 0.45, "mu": 2.0,
     "N_ladder": [1, 10, 100], "grid": {"points": 4000}, "seed": 7}
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Any

import numpy as np

from .dist1d import IntervalScenario, interval_distribution, default_interval_grid
from .geo import GeodesicScene, geodesic_lengths
from .pdesolve import (ConcentricProblem, RobinIntervalProblem, solve_concentric,
                       solve_robin_interval)
from .pdesolve import default_grid as pde_default_grid
from .tabulated import TabulatedDistribution

__all__ = ["ConfigError", "GridControls", "ScenarioSpec", "KINDS", "load_spec", "dump_spec"]

_COMMON = ("N_ladder", "grid", "seed", "trials")
KIND_FIELDS = {
    "interval_pure": ("l", "D", "x0"),
    "interval_drift": ("l", "D", "x0", "mu"),
    "interval_robin": ("l", "D", "x0", "gamma0", "gamma1"),
    "concentric3d": ("R0", "R1", "r0", "D"),
    "narrow_capture": ("D", "start", "centers", "radii", "epsilon"),
    "geodesic_scene": ("D", "scene"),
}
KINDS = tuple(KIND_FIELDS)
_REQUIRED = {
    "interval_pure": ("l", "x0"),
    "interval_drift": ("l", "x0", "mu"),
    "interval_robin": ("l", "x0"),
    "concentric3d": ("R0", "R1", "r0"),
    "narrow_capture": ("start", "centers", "radii", "epsilon"),
    "geodesic_scene": ("scene",),
}


class ConfigError(ValueError):
    """Scenario validation failure; ``field`` names the offending entry."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass(frozen=True)
class GridControls:
    """Time-grid and solver resolution.  ``t_min`` overrides the automatic
    lower end of the tabulation grid when set."""

    points: int = 4000
    N_max: float = 1e8
    space_nodes: int = 2000
    t_min: float | None = None
    richardson: bool = False


def _blame(kind, message):
    """The parameter of ``kind`` named first in a validation message."""
    hits = []
    for name in KIND_FIELDS[kind]:
        m = re.search(rf"(?<![A-Za-z0-9_]){re.escape(name)}(?![A-Za-z0-9_])", message)
        if m:
            hits.append((m.start(), name))
    return min(hits)[1] if hits else kind


def _rate(name, value):
    if value is None or (isinstance(value, str) and value.lower() in ("inf", "infinity")):
        return math.inf
    try:
        value = float(value)
    except (TypeError, ValueError):
        raise ConfigError(name, f"expected a number or 'inf', got {value!r}") from None
    if not value > 0:
        raise ConfigError(name, "trapping rate must be positive")
    return value


def _vec(name, value, dim=3):
    try:
        out = tuple(float(v) for v in value)
    except TypeError:
        raise ConfigError(name, "expected a list of numbers") from None
    if len(out) != dim:
        raise ConfigError(name, f"expected {dim} coordinates")
    return out


@dataclass(frozen=True)
class ScenarioSpec:
    """One search problem plus run controls.  Only the fields listed for
    ``kind`` in ``KIND_FIELDS`` are meaningful; the rest keep defaults."""

    kind: str
    D: float = 1.0
    l: float | None = None
    x0: float | None = None
    mu: float = 0.0
    gamma0: float = math.inf
    gamma1: float = math.inf
    R0: float | None = None
    R1: float | None = None
    r0: float | None = None
    start: tuple[float, ...] | None = None
    centers: tuple[tuple[float, ...], ...] | None = None
    radii: tuple[float, ...] | None = None
    epsilon: float | None = None
    scene: GeodesicScene | None = None
    N_ladder: tuple[int, ...] = (1, 10, 100, 1000, 10**4, 10**5, 10**6, 10**7, 10**8)
    grid: GridControls = field(default_factory=GridControls)
    seed: int = 0
    trials: int = 100_000

    def __post_init__(self):
        if self.kind not in KIND_FIELDS:
            raise ConfigError("kind", f"unknown kind {self.kind!r}; expected one of {', '.join(KINDS)}")
        for name in _REQUIRED[self.kind]:
            if getattr(self, name) is None:
                raise ConfigError(name, f"required for kind {self.kind!r}")
        if not self.D > 0:
            raise ConfigError("D", "diffusivity must be positive")
        if any(int(n) < 1 for n in self.N_ladder):
            raise ConfigError("N_ladder", "searcher counts must be >= 1")
        if self.trials < 1:
            raise ConfigError("trials", "must be positive")
        try:
            if self.kind.startswith("interval"):
                self.interval_scenario()
            if self.kind == "interval_robin":
                self.robin_problem()
            if self.kind == "concentric3d":
                self.concentric_problem()
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(_blame(self.kind, str(exc)), str(exc)) from None
        if self.kind == "narrow_capture":
            self._check_narrow()

    def _check_narrow(self):
        if len(self.centers) != len(self.radii) or len(self.centers) < 2:
            raise ConfigError("centers", "need >= 2 targets with one radius each")
        if not self.epsilon > 0 or any(r <= 0 for r in self.radii):
            raise ConfigError("radii", "epsilon and radii must be positive")
        L = self.target_lengths()
        if any(v <= 0 for v in L):
            raise ConfigError("start", "start point lies inside a target")
        if any(L[k] <= L[0] for k in range(1, len(L))):
            raise ConfigError("centers", "target 0 must be the unique closest target")

    # ---- derived problems -------------------------------------------------
    def interval_scenario(self) -> IntervalScenario:
        mu = self.mu if self.kind == "interval_drift" else 0.0
        return IntervalScenario(self.l, self.D, self.x0, mu)

    def robin_problem(self) -> RobinIntervalProblem:
        return RobinIntervalProblem(self.l, self.D, self.x0, self.gamma0, self.gamma1)

    def concentric_problem(self) -> ConcentricProblem:
        return ConcentricProblem(self.R0, self.R1, self.r0, self.D)

    @property
    def n_targets(self) -> int:
        if self.kind == "narrow_capture":
            return len(self.centers)
        if self.kind == "geodesic_scene":
            return len(self.scene.targets)
        return 2

    def target_lengths(self) -> tuple[float, ...]:
        """Straight-line (or geodesic) distance from the start to each target."""
        if self.kind.startswith("interval"):
            return (self.x0, self.l - self.x0)
        if self.kind == "concentric3d":
            return (self.r0 - self.R0, self.R1 - self.r0)
        if self.kind == "narrow_capture":
            x = np.asarray(self.start)
            return tuple(float(np.linalg.norm(x - np.asarray(c)) - self.epsilon * r)
                         for c, r in zip(self.centers, self.radii))
        return tuple(geodesic_lengths(self.scene))

    def tabulate(self, grid=None) -> TabulatedDistribution:
        """Tabulate ``F`` and ``F_k`` with the engine that suits the kind."""
        g = self.grid
        if grid is None and g.t_min is not None:
            grid = self._grid_from(g.t_min)
        if self.kind in ("interval_pure", "interval_drift"):
            scn = self.interval_scenario()
            if grid is None:
                grid = default_interval_grid(scn, N_max=g.N_max, points=g.points)
            return interval_distribution(scn, grid)
        if self.kind == "interval_robin":
            return solve_robin_interval(self.robin_problem(), g.space_nodes, grid, g.N_max, g.points,
                                        g.richardson)
        if self.kind == "concentric3d":
            return solve_concentric(self.concentric_problem(), g.space_nodes, grid, g.N_max, g.points,
                                    g.richardson)
        raise ConfigError("kind", f"no tabulation engine for kind {self.kind!r}")

    def _grid_from(self, t_min):
        # keep the automatic upper end, replace only the lower end
        return np.geomspace(t_min, self.default_grid()[-1], self.grid.points)

    def default_grid(self) -> np.ndarray:
        """Automatic tabulation grid for this scenario."""
        g = self.grid
        if self.kind in ("interval_pure", "interval_drift"):
            return default_interval_grid(self.interval_scenario(), N_max=g.N_max, points=g.points)
        if self.kind == "interval_robin":
            return pde_default_grid(self.robin_problem(), g.space_nodes, g.N_max, g.points)
        if self.kind == "concentric3d":
            return pde_default_grid(self.concentric_problem(), g.space_nodes, g.N_max, g.points)
        raise ConfigError("kind", f"no tabulation engine for kind {self.kind!r}")

    def tabulate_grid(self) -> np.ndarray:
        """The grid ``tabulate`` uses: automatic, or from ``grid.t_min``."""
        if self.grid.t_min is not None:
            return self._grid_from(self.grid.t_min)
        return self.default_grid()

    # ---- JSON -------------------------------------------------------------
    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"kind": self.kind}
        for name in KIND_FIELDS[self.kind]:
            value = getattr(self, name)
            if name in ("gamma0", "gamma1"):
                value = "inf" if math.isinf(value) else value
            elif name == "scene":
                value = value.to_dict()
            elif name in ("start", "radii"):
                value = list(value)
            elif name == "centers":
                value = [list(c) for c in value]
            out[name] = value
        out["N_ladder"] = [int(n) for n in self.N_ladder]
        out["grid"] = asdict(self.grid)
        out["seed"] = self.seed
        out["trials"] = self.trials
        return out

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ScenarioSpec":
        if not isinstance(data, dict):
            raise ConfigError("<root>", "scenario must be a JSON object")
        kind = data.get("kind")
        if kind not in KIND_FIELDS:
            raise ConfigError("kind", f"unknown kind {kind!r}; expected one of {', '.join(KINDS)}")
        allowed = set(KIND_FIELDS[kind]) | set(_COMMON) | {"kind"}
        extra = sorted(set(data) - allowed)
        if extra:
            raise ConfigError(extra[0], f"not a parameter of kind {kind!r}")
        kw: dict[str, Any] = {"kind": kind}
        for name in KIND_FIELDS[kind]:
            if name not in data:
                continue
            value = data[name]
            if name in ("gamma0", "gamma1"):
                value = _rate(name, value)
            elif name == "start":
                value = _vec(name, value)
            elif name == "centers":
                value = tuple(_vec(f"centers[{i}]", c) for i, c in enumerate(value))
            elif name == "radii":
                value = tuple(float(r) for r in value)
            elif name == "scene":
                try:
                    value = GeodesicScene.from_dict(value)
                except (KeyError, TypeError, ValueError) as exc:
                    raise ConfigError("scene", str(exc)) from None
            else:
                try:
                    value = float(value)
                except (TypeError, ValueError):
                    raise ConfigError(name, f"expected a number, got {value!r}") from None
            kw[name] = value
        if "N_ladder" in data:
            try:
                kw["N_ladder"] = tuple(int(n) for n in data["N_ladder"])
            except (TypeError, ValueError):
                raise ConfigError("N_ladder", "expected a list of integers") from None
        if "grid" in data:
            known = {f.name for f in fields(GridControls)}
            bad = sorted(set(data["grid"]) - known)
            if bad:
                raise ConfigError(f"grid.{bad[0]}", "unknown grid control")
            g = dict(data["grid"])
            kw["grid"] = GridControls(
                points=int(g.get("points", 4000)), N_max=float(g.get("N_max", 1e8)),
                space_nodes=int(g.get("space_nodes", 2000)),
                t_min=None if g.get("t_min") is None else float(g["t_min"]),
                richardson=bool(g.get("richardson", False)))
        for name in ("seed", "trials"):
            if name in data:
                kw[name] = int(data[name])
        return cls(**kw)

    def with_seed(self, seed: int) -> "ScenarioSpec":
        return replace(self, seed=int(seed))


def load_spec(path) -> ScenarioSpec:
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError("<file>", f"invalid JSON: {exc}") from None
    return ScenarioSpec.from_dict(data)


def dump_spec(spec: ScenarioSpec) -> str:
    return json.dumps(spec.to_dict(), indent=2, sort_keys=True) + "\n"
