"""2-D geometric primitives and environment maps.

The floor plan is a rectangle with origin at its lower-left corner.
Obstructions are zero-thickness wall segments carrying a relative
permittivity; the map boundary absorbs rays.  All types are frozen
dataclasses and safe to share between threads.

Map files are JSON:

    { "width_m": 35.0, "height_m": 65.5,
      "walls": [ { "id": "w0", "x1": 0, "y1": 10, "x2": 20, "y2": 10,
                   "eps_r": 5.0 } ] }
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import NamedTuple

from .errors import MapFormatError

# "Strictly ahead" tolerance for ray hits, in meters.
HIT_EPS = 1e-9


@dataclass(frozen=True)
class Point2:
    """A point in the map plane, meters."""

    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"non-finite coordinates ({self.x}, {self.y})")

    def distance_to(self, other: "Point2") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)

    def bearing_to(self, other: "Point2") -> float:
        """Heading from this point toward ``other``, in [0, 2*pi)."""
        return math.atan2(other.y - self.y, other.x - self.x) % (2.0 * math.pi)


@dataclass(frozen=True)
class Segment:
    """Directed wall geometry between two distinct endpoints."""

    a: Point2
    b: Point2

    def __post_init__(self):
        if self.a.x == self.b.x and self.a.y == self.b.y:
            raise ValueError("segment endpoints coincide")

    @property
    def length(self) -> float:
        return self.a.distance_to(self.b)

    def point_at(self, u: float) -> Point2:
        return Point2(self.a.x + u * (self.b.x - self.a.x),
                      self.a.y + u * (self.b.y - self.a.y))

    def normal(self) -> tuple[float, float]:
        """Unit normal of the supporting line (one of the two; sign is arbitrary)."""
        dx = self.b.x - self.a.x
        dy = self.b.y - self.a.y
        n = math.hypot(dx, dy)
        return (-dy / n, dx / n)


@dataclass(frozen=True)
class Obstruction:
    """A wall segment with a relative permittivity of at least 1."""

    wall: Segment
    eps_r: float
    id: str

    def __post_init__(self):
        if not (self.eps_r >= 1.0):
            raise ValueError(f"obstruction {self.id!r}: eps_r must be >= 1.0, got {self.eps_r}")


@dataclass(frozen=True)
class EnvironmentMap:
    """Rectangular floor plan with wall obstructions.

    Invariants checked at construction: positive extent, every wall
    endpoint inside the rectangle, unique wall ids.
    """

    width: float
    height: float
    obstructions: tuple[Obstruction, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "obstructions", tuple(self.obstructions))
        if not (self.width > 0 and self.height > 0):
            raise ValueError(f"map extent must be positive, got {self.width} x {self.height}")
        seen: set[str] = set()
        for obs in self.obstructions:
            if obs.id in seen:
                raise ValueError(f"duplicate obstruction id {obs.id!r}")
            seen.add(obs.id)
            for p in (obs.wall.a, obs.wall.b):
                if not (0.0 <= p.x <= self.width and 0.0 <= p.y <= self.height):
                    raise ValueError(
                        f"obstruction {obs.id!r}: endpoint ({p.x}, {p.y}) "
                        f"outside map [0,{self.width}]x[0,{self.height}]")

    def contains(self, p: Point2) -> bool:
        return 0.0 <= p.x <= self.width and 0.0 <= p.y <= self.height

    def boundary_segments(self) -> tuple[Segment, ...]:
        w, h = self.width, self.height
        c = (Point2(0, 0), Point2(w, 0), Point2(w, h), Point2(0, h))
        return (Segment(c[0], c[1]), Segment(c[1], c[2]),
                Segment(c[2], c[3]), Segment(c[3], c[0]))


@dataclass(frozen=True)
class Ray2:
    """Half-line from an origin along a unit direction vector."""

    origin: Point2
    direction: tuple[float, float]

    def __post_init__(self):
        dx, dy = self.direction
        if abs(math.hypot(dx, dy) - 1.0) > 1e-12:
            raise ValueError(f"ray direction ({dx}, {dy}) is not a unit vector")
        object.__setattr__(self, "direction", (float(dx), float(dy)))

    @classmethod
    def from_heading(cls, origin: Point2, heading_rad: float) -> "Ray2":
        return cls(origin, (math.cos(heading_rad), math.sin(heading_rad)))

    @property
    def heading(self) -> float:
        return math.atan2(self.direction[1], self.direction[0]) % (2.0 * math.pi)

    def point_at(self, t: float) -> Point2:
        return Point2(self.origin.x + t * self.direction[0],
                      self.origin.y + t * self.direction[1])


class RayHit(NamedTuple):
    point: Point2
    distance: float
    incidence_angle: float


class ObstructionHit(NamedTuple):
    """First thing a ray meets.  ``obstruction_id`` is None for the map boundary."""

    obstruction_id: str | None
    point: Point2
    distance: float
    incidence_angle: float


def ray_segment_intersect(ray: Ray2, seg: Segment) -> RayHit | None:
    """Nearest intersection of a ray with a segment, or None.

    Hits closer than HIT_EPS along the ray are discarded so a ray
    relaunched from a wall never re-hits it.  The returned incidence
    angle is measured from the wall normal and lies in [0, pi/2].
    """
    ox, oy = ray.origin.x, ray.origin.y
    dx, dy = ray.direction
    ax, ay = seg.a.x, seg.a.y
    ex, ey = seg.b.x - ax, seg.b.y - ay

    denom = dx * ey - dy * ex
    if denom == 0.0:
        # Parallel (collinear overlap is not a crossing for a
        # zero-thickness wall; the ray slides along it).
        return None
    # Solve origin + t*d = a + u*e.
    t = ((ax - ox) * ey - (ay - oy) * ex) / denom
    u = ((ax - ox) * dy - (ay - oy) * dx) / denom
    if t <= HIT_EPS or u < 0.0 or u > 1.0:
        return None
    point = ray.point_at(t)
    # cos(incidence) = |d . n| for unit d and unit normal n.
    nx, ny = seg.normal()
    cos_inc = abs(dx * nx + dy * ny)
    incidence = math.acos(min(1.0, max(0.0, cos_inc)))
    return RayHit(point, t, incidence)


def first_obstruction(ray: Ray2, env: EnvironmentMap) -> ObstructionHit | None:
    """First obstruction (or boundary) met by a ray inside the map.

    Ties within HIT_EPS are broken toward the lowest obstruction id;
    walls win ties against the boundary.  Returns None only if the ray
    starts outside the map pointing away.
    """
    best: ObstructionHit | None = None
    for obs in env.obstructions:
        hit = ray_segment_intersect(ray, obs.wall)
        if hit is None:
            continue
        if (best is None or hit.distance < best.distance - HIT_EPS
                or (abs(hit.distance - best.distance) <= HIT_EPS
                    and (best.obstruction_id is None or obs.id < best.obstruction_id))):
            best = ObstructionHit(obs.id, hit.point, hit.distance, hit.incidence_angle)
    for wall in env.boundary_segments():
        hit = ray_segment_intersect(ray, wall)
        if hit is None:
            continue
        if best is None or hit.distance < best.distance - HIT_EPS:
            best = ObstructionHit(None, hit.point, hit.distance, hit.incidence_angle)
    return best


def _require_number(obj: dict, key: str, where: str) -> float:
    if key not in obj:
        raise MapFormatError(f"{where}: missing field {key!r}")
    v = obj[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise MapFormatError(f"{where}: field {key!r} must be a number, got {v!r}")
    return float(v)


def load_map(path) -> EnvironmentMap:
    """Load an EnvironmentMap from a JSON file (schema in module docstring)."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise MapFormatError(
                f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}"
            ) from exc
    if not isinstance(raw, dict):
        raise MapFormatError(f"{path}: top level must be an object")
    width = _require_number(raw, "width_m", str(path))
    height = _require_number(raw, "height_m", str(path))
    walls_raw = raw.get("walls", [])
    if not isinstance(walls_raw, list):
        raise MapFormatError(f"{path}: 'walls' must be a list")
    obstructions = []
    for i, w in enumerate(walls_raw):
        where = f"{path}: walls[{i}]"
        if not isinstance(w, dict):
            raise MapFormatError(f"{where}: must be an object")
        wall_id = w.get("id")
        if not isinstance(wall_id, str) or not wall_id:
            raise MapFormatError(f"{where}: field 'id' must be a non-empty string")
        where = f"{path}: wall {wall_id!r}"
        x1 = _require_number(w, "x1", where)
        y1 = _require_number(w, "y1", where)
        x2 = _require_number(w, "x2", where)
        y2 = _require_number(w, "y2", where)
        eps_r = _require_number(w, "eps_r", where)
        try:
            obstructions.append(
                Obstruction(Segment(Point2(x1, y1), Point2(x2, y2)), eps_r, wall_id))
        except ValueError as exc:
            raise MapFormatError(f"{where}: {exc}") from exc
    try:
        return EnvironmentMap(width, height, tuple(obstructions))
    except ValueError as exc:
        raise MapFormatError(f"{path}: {exc}") from exc


def save_map(env: EnvironmentMap, path) -> None:
    """Write an EnvironmentMap as JSON.  load_map(save_map(env)) == env."""
    doc = {
        "width_m": env.width,
        "height_m": env.height,
        "walls": [
            {"id": o.id,
             "x1": o.wall.a.x, "y1": o.wall.a.y,
             "x2": o.wall.b.x, "y2": o.wall.b.y,
             "eps_r": o.eps_r}
            for o in env.obstructions
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")
