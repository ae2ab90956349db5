"""Analytic ray-cast inverse sensor model producing evidential grids."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..evidence import combine_arrays
from ..grid import EvidentialGrid, GridGeometry, Pose2
from .world import Circle, Rect


@dataclass(frozen=True)
class SensorConfig:
    n_rays: int = 720
    max_range: float = 50.0
    m_free: float = 0.7
    m_occ: float = 0.9
    # ray marching step as a fraction of the cell size
    step_fraction: float = 0.25

    def __post_init__(self):
        if self.n_rays < 1 or not self.max_range > 0:
            raise ValueError(f"invalid sensor config {self}")
        if not (0 <= self.m_free < 1 and 0 <= self.m_occ < 1):
            raise ValueError("single-ray masses must lie in [0, 1)")


def ray_angles(n_rays: int) -> np.ndarray:
    # half-step offset keeps rays off the cell boundaries through the grid center
    return 2.0 * np.pi * (np.arange(n_rays) + 0.5) / n_rays


def first_hits(origin, angles, obstacles, max_range: float) -> np.ndarray:
    """Distance to the first obstacle along each world-frame ray (inf if none).

    Obstacles that contain the origin are ignored, which also removes the
    sensing vehicle's own body.
    """
    ox, oy = origin
    dx, dy = np.cos(angles), np.sin(angles)
    best = np.full(angles.shape, np.inf)
    rects = [ob for ob in obstacles if isinstance(ob, Rect)]
    circles = [ob for ob in obstacles if isinstance(ob, Circle)]
    reach = max_range
    if rects:
        r = np.array([[o.cx, o.cy, o.hx, o.hy, o.angle] for o in rects])
        near = np.hypot(r[:, 0] - ox, r[:, 1] - oy) - np.hypot(r[:, 2], r[:, 3]) <= reach
        r = r[near]
        c, s = np.cos(r[:, 4])[:, None], np.sin(r[:, 4])[:, None]
        px, py = ox - r[:, 0:1], oy - r[:, 1:2]
        lox, loy = c * px + s * py, -s * px + c * py
        ldx, ldy = c * dx + s * dy, -s * dx + c * dy
        inside = (np.abs(lox) <= r[:, 2:3]) & (np.abs(loy) <= r[:, 3:4])
        ldx = np.where(np.abs(ldx) < 1e-12, 1e-12, ldx)
        ldy = np.where(np.abs(ldy) < 1e-12, 1e-12, ldy)
        tx1, tx2 = (-r[:, 2:3] - lox) / ldx, (r[:, 2:3] - lox) / ldx
        ty1, ty2 = (-r[:, 3:4] - loy) / ldy, (r[:, 3:4] - loy) / ldy
        t_near = np.maximum(np.minimum(tx1, tx2), np.minimum(ty1, ty2))
        t_far = np.minimum(np.maximum(tx1, tx2), np.maximum(ty1, ty2))
        hit = (t_near <= t_far) & (t_near > 0) & ~np.broadcast_to(inside, t_near.shape)
        if hit.size:
            best = np.minimum(best, np.where(hit, t_near, np.inf).min(axis=0))
    if circles:
        ci = np.array([[o.cx, o.cy, o.r] for o in circles])
        ci = ci[np.hypot(ci[:, 0] - ox, ci[:, 1] - oy) - ci[:, 2] <= reach]
        qx, qy = ci[:, 0:1] - ox, ci[:, 1:2] - oy
        b = qx * dx + qy * dy
        q2 = qx ** 2 + qy ** 2
        disc = b ** 2 - (q2 - ci[:, 2:3] ** 2)
        outside = q2 > ci[:, 2:3] ** 2
        t = b - np.sqrt(np.maximum(disc, 0.0))
        hit = (disc >= 0) & (t > 0) & np.broadcast_to(outside, t.shape)
        if hit.size:
            best = np.minimum(best, np.where(hit, t, np.inf).min(axis=0))
    return best


def _cell_index(geometry: GridGeometry, x, y):
    i = np.floor((x + geometry.length / 2) / geometry.resolution).astype(np.int64)
    j = np.floor((y + geometry.width / 2) / geometry.resolution).astype(np.int64)
    ok = (i >= 0) & (i < geometry.n_x) & (j >= 0) & (j < geometry.n_y)
    return i * geometry.n_y + j, ok


def ray_counts(geometry: GridGeometry, angles, ranges, hit, step: float):
    """Per-cell number of rays passing freely and number of rays ending in it.

    ``angles`` are vehicle-frame ray directions, ``ranges`` the distance
    travelled by each ray, ``hit`` whether the ray ended on an obstacle.
    """
    n_cells = geometry.n_x * geometry.n_y
    dx, dy = np.cos(angles), np.sin(angles)
    # hit cell: nudge just past the boundary into the obstacle
    hx, hy = (ranges + 1e-6) * dx, (ranges + 1e-6) * dy
    hit_cell, hit_ok = _cell_index(geometry, hx, hy)
    hit_ok &= hit
    occ_count = np.bincount(hit_cell[hit_ok], minlength=n_cells)

    n_steps = int(np.ceil(ranges.max() / step)) if ranges.size else 0
    t = (np.arange(n_steps) + 0.5) * step
    ray_id = np.repeat(np.arange(angles.size), n_steps)
    tt = np.tile(t, angles.size)
    before = tt < np.repeat(ranges, n_steps)
    ray_id, tt = ray_id[before], tt[before]
    cells, ok = _cell_index(geometry, tt * dx[ray_id], tt * dy[ray_id])
    # a ray's own hit cell never counts as free for that ray
    ok &= ~(hit_ok[ray_id] & (cells == hit_cell[ray_id]))
    keys = np.unique(ray_id[ok] * n_cells + cells[ok])
    free_count = np.bincount(keys % n_cells, minlength=n_cells)
    return free_count.reshape(geometry.shape), occ_count.reshape(geometry.shape)


def masses_from_counts(free_count, occ_count, m_free: float, m_occ: float):
    """Dempster-combine ``free_count`` free and ``occ_count`` occupied observations.

    Repeated combination of a simple support function with itself gives
    ``1 - (1 - m)^n``; the free and occupied parts are then combined.  Where
    both parts saturate to 1 in floating point the ratio form is used.
    """
    f = np.power(1.0 - m_free, free_count.astype(np.float64))
    o = np.power(1.0 - m_occ, occ_count.astype(np.float64))
    mf, mo, _ = combine_arrays(1.0 - f, np.zeros_like(f), np.zeros_like(o), 1.0 - o)
    bad = np.isnan(mf)
    if bad.any():
        # log ratio f/o, finite even when both underflow
        lr = free_count[bad] * math.log1p(-m_free) - occ_count[bad] * math.log1p(-m_occ)
        fb, ob = f[bad], o[bad]
        with np.errstate(over="ignore"):  # exp -> inf gives the right limit of 0
            mf[bad] = (1.0 - fb) / (np.exp(lr) + 1.0 - fb)
            mo[bad] = (1.0 - ob) / (np.exp(-lr) + 1.0 - ob)
    return mf, mo


def raycast_ism(scenario, vehicle_pose: Pose2, geometry: GridGeometry | None = None,
                sensor: SensorConfig | None = None) -> EvidentialGrid:
    """Evidential grid as seen by a sensor at ``vehicle_pose`` (grid in vehicle frame)."""
    geometry = geometry or GridGeometry()
    sensor = sensor or SensorConfig()
    obstacles = scenario.obstacles if hasattr(scenario, "obstacles") else scenario
    local = ray_angles(sensor.n_rays)
    d = first_hits((vehicle_pose.x, vehicle_pose.y), local + vehicle_pose.psi, obstacles, sensor.max_range)
    hit = d <= sensor.max_range
    ranges = np.where(hit, d, sensor.max_range)
    free_count, occ_count = ray_counts(geometry, local, ranges, hit, sensor.step_fraction * geometry.resolution)
    mf, mo = masses_from_counts(free_count, occ_count, sensor.m_free, sensor.m_occ)
    return EvidentialGrid(geometry, mf, mo)
