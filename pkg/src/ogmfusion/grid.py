"""Metric evidential grids, SE(2) poses and resampling of mass planes.

Index convention: axis 0 (``i``) runs along the vehicle's forward x axis,
axis 1 (``j``) along the lateral y axis.  The sensor sits at the grid center,
which falls on a cell corner for even cell counts.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .evidence import _CLAMP_SLACK

# continuous source coordinates this close to an integer index are snapped,
# so identity and whole-cell shifts resample exactly
_SNAP = 1e-9


class GeometryMismatch(ValueError):
    pass


def wrap_angle(a: float) -> float:
    """Wrap to (-pi, pi]."""
    w = math.remainder(a, 2.0 * math.pi)
    return math.pi if w == -math.pi else w


@dataclass(frozen=True)
class GridGeometry:
    n_x: int = 256
    n_y: int = 176
    resolution: float = 0.32

    def __post_init__(self):
        if self.n_x <= 0 or self.n_y <= 0 or not self.resolution > 0:
            raise ValueError(f"invalid grid geometry {self}")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_x, self.n_y)

    @property
    def length(self) -> float:
        return self.n_x * self.resolution

    @property
    def width(self) -> float:
        return self.n_y * self.resolution

    def world_to_cell(self, x: float, y: float) -> tuple[int, int] | None:
        """Cell index of a vehicle-frame point, ``None`` when out of bounds."""
        i = math.floor((x + self.length / 2) / self.resolution)
        j = math.floor((y + self.width / 2) / self.resolution)
        if 0 <= i < self.n_x and 0 <= j < self.n_y:
            return i, j
        return None

    def cell_center(self, i, j):
        x = (np.asarray(i) + 0.5) * self.resolution - self.length / 2
        y = (np.asarray(j) + 0.5) * self.resolution - self.width / 2
        return x, y

    def cell_centers(self):
        """Arrays ``(x, y)`` of shape ``(n_x, n_y)`` with every cell center."""
        ii, jj = np.meshgrid(np.arange(self.n_x), np.arange(self.n_y), indexing="ij")
        return self.cell_center(ii, jj)


@dataclass(frozen=True)
class Pose2:
    """Rigid 2D transform; as a vehicle pose it maps vehicle-frame points to world."""

    x: float = 0.0
    y: float = 0.0
    psi: float = 0.0

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.x, self.y, self.psi)):
            raise ValueError(f"non-finite pose {self}")
        object.__setattr__(self, "psi", wrap_angle(self.psi))

    def matrix(self) -> np.ndarray:
        c, s = math.cos(self.psi), math.sin(self.psi)
        return np.array([[c, -s, self.x], [s, c, self.y], [0.0, 0.0, 1.0]])

    @classmethod
    def from_matrix(cls, m) -> "Pose2":
        return cls(float(m[0, 2]), float(m[1, 2]), math.atan2(m[1, 0], m[0, 0]))

    def compose(self, other: "Pose2") -> "Pose2":
        """``self * other``: apply ``other`` first, then ``self``."""
        c, s = math.cos(self.psi), math.sin(self.psi)
        return Pose2(
            self.x + c * other.x - s * other.y,
            self.y + s * other.x + c * other.y,
            self.psi + other.psi,
        )

    def inverse(self) -> "Pose2":
        c, s = math.cos(self.psi), math.sin(self.psi)
        return Pose2(-(c * self.x + s * self.y), s * self.x - c * self.y, -self.psi)

    def apply(self, x, y):
        c, s = math.cos(self.psi), math.sin(self.psi)
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        return c * x - s * y + self.x, s * x + c * y + self.y

    def is_identity(self) -> bool:
        return self.x == 0.0 and self.y == 0.0 and self.psi == 0.0


IDENTITY = Pose2()


def relative_transform(pose_ref: Pose2, pose_src: Pose2) -> Pose2:
    """Transform taking points in the ``pose_src`` frame into the ``pose_ref`` frame."""
    return pose_ref.inverse().compose(pose_src)


def _readonly(a):
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class EvidentialGrid:
    """Free and occupied mass planes of shape ``geometry.shape``."""

    geometry: GridGeometry
    m_free: np.ndarray = field(repr=False)
    m_occ: np.ndarray = field(repr=False)

    def __post_init__(self):
        mf, mo = _readonly(self.m_free), _readonly(self.m_occ)
        if mf.shape != self.geometry.shape or mo.shape != self.geometry.shape:
            raise GeometryMismatch(f"planes {mf.shape}/{mo.shape} do not match {self.geometry.shape}")
        object.__setattr__(self, "m_free", mf)
        object.__setattr__(self, "m_occ", mo)

    @classmethod
    def vacuous(cls, geometry: GridGeometry) -> "EvidentialGrid":
        z = np.zeros(geometry.shape)
        return cls(geometry, z, z)

    @classmethod
    def from_planes(cls, planes, geometry: GridGeometry | None = None) -> "EvidentialGrid":
        planes = np.asarray(planes)
        if geometry is None:
            geometry = GridGeometry(planes.shape[1], planes.shape[2])
        return cls(geometry, planes[0], planes[1])

    @property
    def uncertainty(self) -> np.ndarray:
        return 1.0 - self.m_free - self.m_occ

    @property
    def p_occ(self) -> np.ndarray:
        return self.m_occ + 0.5 * (1.0 - self.m_free - self.m_occ)

    def planes(self) -> np.ndarray:
        return np.stack([self.m_free, self.m_occ])

    def is_valid(self, tol: float = _CLAMP_SLACK) -> bool:
        mf, mo = self.m_free, self.m_occ
        return bool(
            np.all(np.isfinite(mf)) and np.all(np.isfinite(mo))
            and mf.min(initial=0) >= -tol and mo.min(initial=0) >= -tol
            and (mf + mo).max(initial=0) <= 1.0 + tol
        )

    def equals(self, other: "EvidentialGrid") -> bool:
        return (
            self.geometry == other.geometry
            and np.array_equal(self.m_free, other.m_free)
            and np.array_equal(self.m_occ, other.m_occ)
        )

    def quantized(self) -> "EvidentialGrid":
        """Round masses to float32 precision while keeping ``m_free + m_occ <= 1``.

        Grids stored on disk are float32; quantizing first makes the
        in-memory grid round-trip bit-exactly.
        """
        mf = self.m_free.astype(np.float32)
        mo = self.m_occ.astype(np.float32)
        for _ in range(4):
            over = mf.astype(np.float64) + mo.astype(np.float64) > 1.0
            if not over.any():
                break
            take_f = over & (mf >= mo)
            take_o = over & ~take_f
            mf[take_f] = np.nextafter(mf[take_f], np.float32(0))
            mo[take_o] = np.nextafter(mo[take_o], np.float32(0))
        return EvidentialGrid(self.geometry, mf.astype(np.float64), mo.astype(np.float64))


def _snap(u):
    r = np.rint(u)
    return np.where(np.abs(u - r) < _SNAP, r, u)


def source_coordinates(geometry: GridGeometry, t: Pose2):
    """Continuous source indices ``(u, v)`` pulled by every destination cell.

    ``t`` maps source-frame points into the destination frame, so each
    destination cell center is carried back through ``t^-1``.
    """
    x, y = geometry.cell_centers()
    sx, sy = t.inverse().apply(x, y)
    u = (sx + geometry.length / 2) / geometry.resolution - 0.5
    v = (sy + geometry.width / 2) / geometry.resolution - 0.5
    return _snap(u), _snap(v)


def sample_planes(planes, u, v, method: str = "bilinear"):
    """Sample ``planes`` (C, n_x, n_y) at continuous indices; outside is zero.

    Zero is the vacuous mass, so padding never invents evidence.
    """
    planes = np.asarray(planes, dtype=np.float64)
    n_x, n_y = planes.shape[1:]
    inside = (u >= -0.5) & (u <= n_x - 0.5) & (v >= -0.5) & (v <= n_y - 0.5)
    out = np.zeros((planes.shape[0],) + u.shape)
    if method == "nearest":
        i = np.clip(np.floor(u + 0.5).astype(np.int64), 0, n_x - 1)
        j = np.clip(np.floor(v + 0.5).astype(np.int64), 0, n_y - 1)
        out[:, inside] = planes[:, i[inside], j[inside]]
        return out
    if method != "bilinear":
        raise ValueError(f"unknown interpolation {method!r}")
    uu, vv = u[inside], v[inside]
    i0 = np.floor(uu).astype(np.int64)
    j0 = np.floor(vv).astype(np.int64)
    fu = uu - i0
    fv = vv - j0
    acc = np.zeros((planes.shape[0], uu.size))
    for di, wi in ((0, 1.0 - fu), (1, fu)):
        for dj, wj in ((0, 1.0 - fv), (1, fv)):
            ii = i0 + di
            jj = j0 + dj
            w = wi * wj
            ok = (ii >= 0) & (ii < n_x) & (jj >= 0) & (jj < n_y) & (w > 0)
            acc[:, ok] += w[ok] * planes[:, ii[ok], jj[ok]]
    out[:, inside] = acc
    return out


def resample_planes(planes, geometry: GridGeometry, t: Pose2, method: str = "bilinear"):
    planes = np.asarray(planes, dtype=np.float64)
    if t.is_identity():
        return planes.copy()
    u, v = source_coordinates(geometry, t)
    return sample_planes(planes, u, v, method)


def resample(src: EvidentialGrid, t: Pose2, method: str = "bilinear") -> EvidentialGrid:
    """Move ``src`` by the rigid transform ``t`` (source frame -> destination frame)."""
    mf, mo = resample_planes(src.planes(), src.geometry, t, method)
    # convex weights of valid masses stay valid; clip rounding only
    total = mf + mo
    over = total > 1.0
    if over.any():
        mf[over] /= total[over]
        mo[over] /= total[over]
    return EvidentialGrid(src.geometry, mf, mo)
