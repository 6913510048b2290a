"""Geodesic target distances and the decay-exponent bound.

Three distance engines are provided:

* ``geodesic_euclidean`` -- straight-line distance in 2-D or 3-D;
* ``geodesic_polygonal`` -- shortest paths around reflecting polygonal
  obstacles in the plane, via a visibility graph;
* ``geodesic_grid`` -- shortest paths in the isotropic metric
  ``ds / sqrt(a(x))`` on a node grid (Dijkstra with an optional wider stencil).

For constant diffusivity the lengths feed ``C_k = L_k**2 / (4 D)`` and the
bound exponent ``1 - (L_k / L_0)**2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import shapely
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra
from shapely.geometry import LineString, Point, Polygon
from shapely.ops import nearest_points

__all__ = [
    "Disc",
    "PolygonTarget",
    "DiffusivityField",
    "GeodesicScene",
    "GeodesicError",
    "geodesic_euclidean",
    "geodesic_polygonal",
    "geodesic_grid",
    "geodesic_lengths",
    "bound_exponent",
    "EIGHT_NEIGHBOUR_BOUND",
]

#: worst-case overestimate of Euclidean length by 8-connected paths
EIGHT_NEIGHBOUR_BOUND = math.sqrt(4 - 2 * math.sqrt(2)) - 1  # = 0.0824


class GeodesicError(ValueError):
    """Invalid scene, unreachable target, or ordering violation."""


@dataclass(frozen=True)
class Disc:
    """Disc (2-D) or ball (3-D) target."""

    center: tuple[float, ...]
    radius: float

    def distance(self, x) -> float:
        return float(np.linalg.norm(np.asarray(x, float) - np.asarray(self.center))) - self.radius

    def shape(self):
        return Point(self.center[:2]).buffer(self.radius, 64)

    def boundary_samples(self, n: int) -> np.ndarray:
        th = 2 * np.pi * np.arange(n) / n
        c = np.asarray(self.center[:2])
        return c + self.radius * np.column_stack([np.cos(th), np.sin(th)])

    def nearest(self, x) -> np.ndarray:
        c = np.asarray(self.center[:2])
        d = np.asarray(x, float) - c
        return c + self.radius * d / np.linalg.norm(d)

    def contains(self, pts) -> np.ndarray:
        pts = np.atleast_2d(pts)
        return np.linalg.norm(pts - np.asarray(self.center[: pts.shape[1]]), axis=1) <= self.radius

    def to_dict(self):
        return {"type": "disc", "center": list(self.center), "radius": self.radius}


@dataclass(frozen=True)
class PolygonTarget:
    """Convex (or simple) polygonal target in the plane."""

    vertices: tuple[tuple[float, float], ...]

    def shape(self):
        return Polygon(self.vertices)

    def distance(self, x) -> float:
        poly = self.shape()
        p = Point(x[:2])
        if poly.covers(p):
            return -poly.exterior.distance(p)
        return poly.exterior.distance(p)

    def boundary_samples(self, n: int) -> np.ndarray:
        ring = self.shape().exterior
        s = np.linspace(0, ring.length, n, endpoint=False)
        pts = [ring.interpolate(v).coords[0] for v in s]
        return np.vstack([np.asarray(pts), np.asarray(self.vertices, float)])

    def nearest(self, x) -> np.ndarray:
        return np.asarray(nearest_points(self.shape().exterior, Point(x[:2]))[0].coords[0])

    def contains(self, pts) -> np.ndarray:
        pts = np.atleast_2d(pts)
        return shapely.covers(self.shape(), shapely.points(pts[:, 0], pts[:, 1]))

    def to_dict(self):
        return {"type": "polygon", "vertices": [list(v) for v in self.vertices]}


@dataclass(frozen=True)
class DiffusivityField:
    """Scalar field ``a`` on nodes ``origin + h * (j, i)`` (row ``i`` is y).

    Non-finite or non-positive entries mark blocked nodes."""

    values: tuple[tuple[float, ...], ...]
    h: float
    origin: tuple[float, float] = (0.0, 0.0)

    @classmethod
    def from_array(cls, a, h, origin=(0.0, 0.0)):
        a = np.asarray(a, float)
        return cls(tuple(map(tuple, a.tolist())), float(h), tuple(map(float, origin)))

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.values, float)

    def to_dict(self):
        return {"values": [list(r) for r in self.values], "h": self.h, "origin": list(self.origin)}


def _target_from_dict(d):
    kind = d.get("type", "disc")
    if kind == "disc":
        return Disc(tuple(float(c) for c in d["center"]), float(d["radius"]))
    if kind == "polygon":
        return PolygonTarget(tuple(tuple(float(c) for c in v) for v in d["vertices"]))
    raise ValueError(f"unknown target type {kind!r}")


@dataclass(frozen=True)
class GeodesicScene:
    """Start point(s), targets, planar obstacles and an optional diffusivity field.

    ``obstacles`` are vertex lists; two vertices describe a thin wall."""

    start: tuple[tuple[float, ...], ...]
    targets: tuple[Disc | PolygonTarget, ...]
    obstacles: tuple[tuple[tuple[float, float], ...], ...] = ()
    diffusivity_field: DiffusivityField | None = None
    D_ref: float = 1.0
    samples: int = 256
    stencil: int = 1
    _shapes: tuple = field(default=(), compare=False, repr=False)

    def __post_init__(self):
        if not self.start or not self.targets:
            raise GeodesicError("scene needs a start point and at least one target")
        if self.samples < 8:
            raise GeodesicError("samples must be >= 8")
        if self.stencil < 1:
            raise GeodesicError("stencil must be >= 1")
        for x in self.start:
            for k, tgt in enumerate(self.targets):
                if tgt.distance(x) <= 0:
                    raise GeodesicError(f"start {x} lies inside target {k}")
        shapes = tuple(_obstacle_shape(o) for o in self.obstacles)
        if shapes and self.dim != 2:
            raise GeodesicError("obstacles are supported in 2-D scenes only")
        for i, s in enumerate(shapes):
            for x in self.start:
                if s.intersects(Point(x[:2])):
                    raise GeodesicError(f"obstacle {i} touches the start set")
            for k, tgt in enumerate(self.targets):
                if s.intersects(tgt.shape()):
                    raise GeodesicError(f"obstacle {i} overlaps target {k}")
        if self.diffusivity_field is not None:
            a = self.diffusivity_field.array
            ok = np.isfinite(a) & (a > 0)
            if not ok.any():
                raise GeodesicError("diffusivity field has no open nodes")
        object.__setattr__(self, "_shapes", shapes)

    @property
    def dim(self) -> int:
        return len(self.start[0])

    def to_dict(self):
        out = {
            "start": [list(x) for x in self.start],
            "targets": [t.to_dict() for t in self.targets],
            "obstacles": [[list(v) for v in o] for o in self.obstacles],
            "D_ref": self.D_ref,
            "samples": self.samples,
            "stencil": self.stencil,
        }
        if self.diffusivity_field is not None:
            out["diffusivity_field"] = self.diffusivity_field.to_dict()
        return out

    @classmethod
    def from_dict(cls, d):
        start = d["start"]
        if start and not isinstance(start[0], (list, tuple)):
            start = [start]
        fld = d.get("diffusivity_field")
        if fld is not None:
            fld = DiffusivityField.from_array(fld["values"], fld["h"], fld.get("origin", (0.0, 0.0)))
        return cls(
            start=tuple(tuple(float(c) for c in x) for x in start),
            targets=tuple(_target_from_dict(t) for t in d["targets"]),
            obstacles=tuple(tuple(tuple(float(c) for c in v) for v in o) for o in d.get("obstacles", [])),
            diffusivity_field=fld,
            D_ref=float(d.get("D_ref", 1.0)),
            samples=int(d.get("samples", 256)),
            stencil=int(d.get("stencil", 1)),
        )


def _obstacle_shape(vertices):
    if len(vertices) == 2:
        return LineString(vertices)
    if len(vertices) < 2:
        raise GeodesicError("obstacle needs at least two vertices")
    poly = Polygon(vertices)
    if not poly.is_valid:
        raise GeodesicError("obstacle polygon is not simple")
    return poly


def geodesic_euclidean(scene: GeodesicScene) -> list[float]:
    """Straight-line distance from the start set to each target."""
    if scene.obstacles or scene.diffusivity_field is not None:
        raise GeodesicError("euclidean lengths need a scene without obstacles or field")
    return [min(t.distance(x) for x in scene.start) for t in scene.targets]


def _blocked(a, b, shapes) -> np.ndarray:
    """Mask of segments ``a[i] -> b[i]`` whose interior crosses an obstacle."""
    segs = shapely.linestrings(np.stack([a, b], axis=1))
    out = np.zeros(len(a), bool)
    for s in shapes:
        # walls block proper crossings; polygons block any interior contact
        pattern = "0********" if s.geom_type == "LineString" else "T********"
        out |= shapely.relate_pattern(segs, s, pattern)
    return out


def geodesic_polygonal(scene: GeodesicScene) -> list[float]:
    """Shortest paths around planar obstacles.

    Graph nodes are the start points, obstacle vertices and, per target,
    ``scene.samples`` boundary points plus the exact nearest target point
    seen from every other node.  An edge is kept when its segment does not
    cross an obstacle; paths end on the first target node they reach.
    """
    if scene.dim != 2:
        raise GeodesicError("polygonal geodesics are planar")
    shapes = scene._shapes
    hubs = [np.asarray(x, float)[:2] for x in scene.start]
    for s in shapes:
        coords = np.asarray(s.exterior.coords if s.geom_type == "Polygon" else s.coords)
        hubs.extend(coords[:-1] if s.geom_type == "Polygon" else coords)
    hubs = np.asarray(hubs)
    n_hub, n_start = len(hubs), len(scene.start)

    # hub-hub visibility
    ii, jj = np.triu_indices(n_hub, 1)
    free = ~_blocked(hubs[ii], hubs[jj], shapes)
    ii, jj = ii[free], jj[free]
    w = np.linalg.norm(hubs[ii] - hubs[jj], axis=1)
    rows, cols, wts = [ii, jj], [jj, ii], [w, w]

    lengths = []
    for tgt in scene.targets:
        ends = np.vstack([tgt.boundary_samples(scene.samples), [tgt.nearest(h) for h in hubs]])
        hi = np.repeat(np.arange(n_hub), len(ends))
        ei = np.tile(np.arange(len(ends)), n_hub)
        ok = ~_blocked(hubs[hi], ends[ei], shapes)
        # a single sink node collects the target: the graph has n_hub + 1 nodes
        d = np.linalg.norm(hubs[hi[ok]] - ends[ei[ok]], axis=1)
        sink = np.full(n_hub, np.inf)
        np.minimum.at(sink, hi[ok], d)
        reach = np.isfinite(sink)
        r = np.concatenate(rows + [np.flatnonzero(reach)])
        c = np.concatenate(cols + [np.full(reach.sum(), n_hub)])
        v = np.concatenate(wts + [sink[reach]])
        graph = coo_matrix((v, (r, c)), shape=(n_hub + 1, n_hub + 1)).tocsr()
        dist = dijkstra(graph, directed=True, indices=np.arange(n_start), min_only=True)
        L = float(dist[n_hub])
        if not math.isfinite(L):
            raise GeodesicError("target unreachable from the start set")
        lengths.append(L)
    return lengths


def _stencil(radius: int):
    offs = []
    for dx in range(0, radius + 1):
        for dy in range(-radius, radius + 1):
            if (dx == 0 and dy <= 0) or math.gcd(dx, abs(dy)) != 1:
                continue
            offs.append((dx, dy))
    return offs


def _rasterize(scene: GeodesicScene, shape2d, h, origin):
    ny, nx = shape2d
    X, Y = np.meshgrid(origin[0] + h * np.arange(nx), origin[1] + h * np.arange(ny))
    pts = shapely.points(X.ravel(), Y.ravel())
    blocked = np.zeros(nx * ny, bool)
    for s in scene._shapes:
        # a clearance of 0.75 h keeps thin and diagonal walls watertight
        blocked |= shapely.dwithin(s, pts, 0.75 * h) if s.geom_type == "LineString" else \
            shapely.covers(s, pts) | shapely.dwithin(s.exterior, pts, 0.75 * h)
    return blocked.reshape(ny, nx), np.column_stack([X.ravel(), Y.ravel()])


def geodesic_grid(scene: GeodesicScene, field_override=None) -> list[float]:
    """Dijkstra distances on the node grid of ``scene.diffusivity_field``.

    Each edge of the stencil (``scene.stencil = 1`` gives the 8-connected
    grid) costs its length times the trapezoid average of ``1/sqrt(a)`` over
    the nodes it passes; an edge is dropped if any of those nodes is blocked.
    Start and target are snapped to nodes: the start to the nearest open
    node, targets to every open node they cover.
    """
    fld = field_override or scene.diffusivity_field
    if fld is None:
        raise GeodesicError("grid geodesics need a diffusivity field")
    if scene.dim != 2:
        raise GeodesicError("grid geodesics are planar")
    a = fld.array
    ny, nx = a.shape
    h, origin = fld.h, fld.origin
    open_ = np.isfinite(a) & (a > 0)
    blocked, coords = _rasterize(scene, a.shape, h, origin)
    open_ &= ~blocked
    inv = np.where(open_, 1.0 / np.sqrt(np.where(open_, a, 1.0)), np.inf)
    idx = np.arange(nx * ny).reshape(ny, nx)

    rows, cols, wts = [], [], []
    for dx, dy in _stencil(scene.stencil):
        m = max(abs(dx), abs(dy))
        i0, i1 = max(0, -dy), ny - max(0, dy)
        j0, j1 = 0, nx - dx
        if i1 <= i0 or j1 <= j0:
            continue
        acc = np.zeros((i1 - i0, j1 - j0))
        for s in range(m + 1):
            fy, fx = s * dy / m, s * dx / m
            vals = []
            for oy in {math.floor(fy), math.ceil(fy)}:
                for ox in {math.floor(fx), math.ceil(fx)}:
                    vals.append(inv[i0 + oy:i1 + oy, j0 + ox:j1 + ox])
            v = np.mean(vals, axis=0)
            acc += v * (0.5 if s in (0, m) else 1.0)
        w = acc / m * h * math.hypot(dx, dy)
        src = idx[i0:i1, j0:j1]
        dst = idx[i0 + dy:i1 + dy, j0 + dx:j1 + dx]
        ok = np.isfinite(w)
        rows.append(src[ok])
        cols.append(dst[ok])
        wts.append(w[ok])
    graph = coo_matrix((np.concatenate(wts), (np.concatenate(rows), np.concatenate(cols))),
                       shape=(nx * ny, nx * ny)).tocsr()

    flat_open = open_.ravel()
    starts = []
    for x in scene.start:
        d = np.linalg.norm(coords - np.asarray(x[:2]), axis=1)
        d[~flat_open] = np.inf
        starts.append(int(np.argmin(d)))
    dist = dijkstra(graph, directed=False, indices=starts, min_only=True)
    lengths = []
    for k, tgt in enumerate(scene.targets):
        inside = tgt.contains(coords) & flat_open
        if not inside.any():
            raise GeodesicError(f"target {k} covers no open grid node")
        L = float(dist[inside].min())
        if not math.isfinite(L):
            raise GeodesicError(f"target {k} unreachable on the grid")
        lengths.append(L)
    return lengths


def geodesic_lengths(scene: GeodesicScene) -> list[float]:
    """Dispatch to the engine matching the scene's content."""
    if scene.diffusivity_field is not None:
        return geodesic_grid(scene)
    if scene.obstacles:
        return geodesic_polygonal(scene)
    return geodesic_euclidean(scene)


def bound_exponent(L0: float, Lk: float, D: float = 1.0) -> tuple[float, float, float]:
    """Return ``(1 - (Lk/L0)**2, L0**2/(4D), Lk**2/(4D))``."""
    if not 0 < L0 < Lk:
        raise GeodesicError("need 0 < L0 < Lk (unique closest target)")
    if not D > 0:
        raise GeodesicError("D must be positive")
    return 1.0 - (Lk / L0) ** 2, L0**2 / (4 * D), Lk**2 / (4 * D)
