"""Parametric road scenes built from templates."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..grid import Pose2

CAR = (4.5, 1.9)
TRUCK = (9.0, 2.5)
MOTORCYCLE = (2.2, 0.8)
PEDESTRIAN_RADIUS = 0.3
LAYOUTS = ("straight", "t_junction", "crossing")


class PlacementFailure(RuntimeError):
    pass


@dataclass(frozen=True)
class Rect:
    """Rectangle with center, half extents and rotation (radians)."""

    cx: float
    cy: float
    hx: float
    hy: float
    angle: float = 0.0

    def contains(self, x, y) -> bool:
        c, s = math.cos(self.angle), math.sin(self.angle)
        dx, dy = x - self.cx, y - self.cy
        lx, ly = c * dx + s * dy, -s * dx + c * dy
        return abs(lx) <= self.hx and abs(ly) <= self.hy

    def bounding_radius(self) -> float:
        return math.hypot(self.hx, self.hy)


@dataclass(frozen=True)
class Circle:
    cx: float
    cy: float
    r: float

    def contains(self, x, y) -> bool:
        return math.hypot(x - self.cx, y - self.cy) <= self.r

    def bounding_radius(self) -> float:
        return self.r


@dataclass(frozen=True)
class Template:
    id: str
    layout: str = "straight"
    extent: float = 300.0
    road_width: float = 8.0
    parking: float = 2.2
    sidewalk: float = 3.0
    building_length: tuple[float, float] = (8.0, 30.0)
    building_depth: tuple[float, float] = (8.0, 20.0)
    building_gap: tuple[float, float] = (0.0, 6.0)
    building_setback: tuple[float, float] = (0.0, 2.0)
    # object counts per 100 m of road
    parked_cars: tuple[float, float] = (3.0, 8.0)
    moving_vehicles: tuple[float, float] = (1.5, 5.0)
    pedestrians: tuple[float, float] = (2.0, 8.0)
    static_obstacles: tuple = ()

    def __post_init__(self):
        if self.layout not in LAYOUTS:
            raise ValueError(f"unknown layout {self.layout!r}, expected one of {LAYOUTS}")

    @property
    def corridor(self) -> float:
        """Half width of road plus parking strip and sidewalk."""
        return self.road_width / 2 + self.parking + self.sidewalk


@dataclass(frozen=True)
class Road:
    """Axis-aligned road strip: ``horizontal`` roads run along world x."""

    horizontal: bool
    start: float
    end: float

    @property
    def length(self) -> float:
        return self.end - self.start


@dataclass
class Scenario:
    template_id: str
    obstacles: list = field(default_factory=list)
    poses: tuple[Pose2, Pose2] = (Pose2(), Pose2())
    rng_seed: int = 0
    index: int = 0


def roads_for(t: Template) -> list[Road]:
    h = t.extent / 2
    roads = [Road(True, -h, h)]
    if t.layout == "t_junction":
        roads.append(Road(False, 0.0, h))
    elif t.layout == "crossing":
        roads.append(Road(False, -h, h))
    return roads


def _in_corridor(t: Template, roads, x, y, margin=0.0) -> bool:
    c = t.corridor + margin
    for road in roads:
        along, across = (x, y) if road.horizontal else (y, x)
        if abs(across) < c and road.start - c < along < road.end + c:
            return True
    return False


def _rect_hits_corridor(t: Template, roads, r: Rect) -> bool:
    c = t.corridor
    for road in roads:
        if road.horizontal:
            if abs(r.cy) - r.hy < c and r.cx + r.hx > road.start - c and r.cx - r.hx < road.end + c:
                return True
        else:
            if abs(r.cx) - r.hx < c and r.cy + r.hy > road.start - c and r.cy - r.hy < road.end + c:
                return True
    return False


def _road_frame(road: Road, along: float, across: float):
    return (along, across) if road.horizontal else (across, along)


def _road_heading(road: Road, direction: int) -> float:
    base = 0.0 if road.horizontal else math.pi / 2
    return base if direction > 0 else base + math.pi


def _buildings(t: Template, roads, rng) -> list[Rect]:
    out = []
    for road in roads:
        for side in (-1, 1):
            s = road.start - t.corridor
            while s < road.end + t.corridor:
                length = rng.uniform(*t.building_length)
                depth = rng.uniform(*t.building_depth)
                setback = rng.uniform(*t.building_setback)
                across = side * (t.corridor + setback + depth / 2)
                along = s + length / 2
                cx, cy = _road_frame(road, along, across)
                hx, hy = (length / 2, depth / 2) if road.horizontal else (depth / 2, length / 2)
                rect = Rect(cx, cy, hx, hy)
                if not _rect_hits_corridor(t, roads, rect):
                    out.append(rect)
                s += length + rng.uniform(*t.building_gap)
    return out


def _lane_offset(t: Template, direction: int) -> float:
    # right-hand traffic: driving +along keeps to negative "across" for horizontal roads
    return -direction * t.road_width / 4


def sample_lane_pose(t: Template, roads, rng, margin: float, heading_jitter_deg: float = 10.0) -> Pose2:
    lengths = np.array([max(r.length - 2 * margin, 0.0) for r in roads])
    if lengths.sum() <= 0:
        raise PlacementFailure(f"template {t.id!r} has no drivable length inside margin {margin}")
    road = roads[rng.choice(len(roads), p=lengths / lengths.sum())]
    direction = 1 if rng.random() < 0.5 else -1
    along = rng.uniform(road.start + margin, road.end - margin)
    x, y = _road_frame(road, along, _lane_offset(t, direction) if road.horizontal else -_lane_offset(t, direction))
    jitter = math.radians(rng.uniform(-heading_jitter_deg, heading_jitter_deg))
    return Pose2(x, y, _road_heading(road, direction) + jitter)


def vehicle_body(pose: Pose2, size=CAR) -> Rect:
    return Rect(pose.x, pose.y, size[0] / 2, size[1] / 2, pose.psi)


def _clear_of(obstacles, x, y, radius) -> bool:
    for ob in obstacles:
        if math.hypot(ob.cx - x, ob.cy - y) < radius + ob.bounding_radius():
            return False
    return True


def place_vehicles(t: Template, roads, rng, max_distance: float, margin: float,
                   tries: int = 500) -> tuple[Pose2, Pose2]:
    pose1 = sample_lane_pose(t, roads, rng, margin)
    if max_distance <= 0:
        return pose1, pose1
    min_distance = min(6.0, 0.5 * max_distance)
    for _ in range(tries):
        pose2 = sample_lane_pose(t, roads, rng, margin)
        d = math.hypot(pose2.x - pose1.x, pose2.y - pose1.y)
        if min_distance <= d <= max_distance:
            return pose1, pose2
    raise PlacementFailure(f"no second vehicle within {max_distance} m after {tries} tries on {t.id!r}")


def build_scenario(t: Template, rng, max_distance: float = 40.0, margin: float = 50.0,
                   index: int = 0, seed: int = 0) -> Scenario:
    """Randomize one scene on template ``t``.

    ``margin`` keeps the vehicles that far from the template border so the
    world extends beyond the sensor range.
    """
    roads = roads_for(t)
    margin = min(margin, t.extent / 2 - 1.0)
    pose1, pose2 = place_vehicles(t, roads, rng, max_distance, margin)
    obstacles: list = list(_buildings(t, roads, rng))
    for spec in t.static_obstacles:
        obstacles.append(spec)
    egos = [vehicle_body(pose1), vehicle_body(pose2)]
    keep_out = [Circle(p.x, p.y, 3.0) for p in (pose1, pose2)]

    def try_add(ob):
        if _clear_of(keep_out, ob.cx, ob.cy, ob.bounding_radius()) and \
                _clear_of(dynamic, ob.cx, ob.cy, ob.bounding_radius() + 0.3):
            dynamic.append(ob)

    dynamic: list = []
    h = t.extent / 2
    per_100m = sum(r.length for r in roads) / 100.0

    def count(bounds):
        return int(round(rng.uniform(*bounds) * per_100m))
    for _ in range(count(t.parked_cars)):
        road = roads[rng.integers(len(roads))]
        side = 1 if rng.random() < 0.5 else -1
        across = side * (t.road_width / 2 + t.parking / 2)
        along = rng.uniform(road.start, road.end)
        cx, cy = _road_frame(road, along, across)
        if _in_corridor(t, [r for r in roads if r is not road], cx, cy, margin=-t.sidewalk):
            continue
        hx, hy = (CAR[0] / 2, CAR[1] / 2) if road.horizontal else (CAR[1] / 2, CAR[0] / 2)
        try_add(Rect(cx, cy, hx, hy))
    for _ in range(count(t.moving_vehicles)):
        road = roads[rng.integers(len(roads))]
        direction = 1 if rng.random() < 0.5 else -1
        size = (CAR, CAR, CAR, TRUCK, MOTORCYCLE)[rng.integers(5)]
        along = rng.uniform(road.start, road.end)
        off = _lane_offset(t, direction) if road.horizontal else -_lane_offset(t, direction)
        cx, cy = _road_frame(road, along, off)
        hx, hy = (size[0] / 2, size[1] / 2) if road.horizontal else (size[1] / 2, size[0] / 2)
        try_add(Rect(cx, cy, hx, hy))
    for _ in range(count(t.pedestrians)):
        road = roads[rng.integers(len(roads))]
        side = 1 if rng.random() < 0.5 else -1
        across = side * (t.road_width / 2 + t.parking + rng.uniform(0.4, t.sidewalk - 0.4))
        along = rng.uniform(road.start, road.end)
        cx, cy = _road_frame(road, along, across)
        if abs(cx) > h or abs(cy) > h:
            continue
        try_add(Circle(cx, cy, PEDESTRIAN_RADIUS))
    obstacles.extend(dynamic)
    obstacles.extend(egos)
    for p in (pose1, pose2):
        for ob in obstacles:
            if ob.contains(p.x, p.y) and ob not in egos:
                raise PlacementFailure(f"vehicle at ({p.x:.1f}, {p.y:.1f}) lies inside {ob}")
    return Scenario(t.id, obstacles, (pose1, pose2), seed, index)
