"""Binary grid files, PPM rendering, scenario templates and dataset layout.

Grid file (little-endian)::

    b"EOGM" | version u32 | n_x u32 | n_y u32 | resolution f64
    | m_free float32[n_x * n_y] | m_occ float32[n_x * n_y]

Both planes are row-major with ``i`` (forward axis) as the slow index.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .grid import EvidentialGrid, GridGeometry, Pose2
from .simworld.dataset import SamplePair
from .simworld.noise import CONFIGS, NoiseSpec
from .simworld.world import Circle, Rect, Template

GRID_MAGIC = b"EOGM"
GRID_VERSION = 1
_GRID_HEADER = struct.Struct("<4sIIId")
LOAD_TOLERANCE = 1e-6
MANIFEST_NAME = "manifest.json"
MANIFEST_VERSION = 1


class GridFormatError(ValueError):
    pass


class BadMagic(GridFormatError):
    pass


class VersionMismatch(GridFormatError):
    pass


class TruncatedFile(GridFormatError):
    pass


class InvariantViolation(GridFormatError):
    pass


def grid_to_bytes(grid: EvidentialGrid) -> bytes:
    g = grid.geometry
    header = _GRID_HEADER.pack(GRID_MAGIC, GRID_VERSION, g.n_x, g.n_y, g.resolution)
    planes = np.stack([grid.m_free, grid.m_occ]).astype("<f4")
    return header + planes.tobytes(order="C")


def grid_from_bytes(data: bytes) -> EvidentialGrid:
    if len(data) < _GRID_HEADER.size:
        raise TruncatedFile(f"header needs {_GRID_HEADER.size} bytes, got {len(data)}")
    magic, version, n_x, n_y, res = _GRID_HEADER.unpack_from(data)
    if magic != GRID_MAGIC:
        raise BadMagic(f"expected {GRID_MAGIC!r}, got {magic!r}")
    if version != GRID_VERSION:
        raise VersionMismatch(f"unsupported grid version {version}")
    n = 2 * n_x * n_y
    payload = data[_GRID_HEADER.size:]
    if len(payload) < 4 * n:
        raise TruncatedFile(f"expected {4 * n} payload bytes, got {len(payload)}")
    planes = np.frombuffer(payload, dtype="<f4", count=n).astype(np.float64).reshape(2, n_x, n_y)
    mf, mo = planes
    if not (np.all(np.isfinite(planes)) and planes.min(initial=0) >= 0
            and (mf + mo).max(initial=0) <= 1.0 + LOAD_TOLERANCE):
        raise InvariantViolation("grid masses violate 0 <= m_free, m_occ and m_free + m_occ <= 1")
    return EvidentialGrid(GridGeometry(n_x, n_y, res), mf, mo)


def save_grid(grid: EvidentialGrid, path) -> None:
    Path(path).write_bytes(grid_to_bytes(grid))


def load_grid(path) -> EvidentialGrid:
    return grid_from_bytes(Path(path).read_bytes())


def render_rgb(grid: EvidentialGrid) -> np.ndarray:
    """RGB image with red = occupied mass, green = free mass; forward points up."""
    red = np.rint(255 * grid.m_occ).astype(np.uint8)
    green = np.rint(255 * grid.m_free).astype(np.uint8)
    img = np.stack([red, green, np.zeros_like(red)], axis=-1)
    # rows: largest forward x at the top; columns: +y (left of vehicle) on the left
    return img[::-1, ::-1]


def render(grid: EvidentialGrid, path) -> None:
    img = render_rgb(grid)
    h, w = img.shape[:2]
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        f.write(img.tobytes())


def read_ppm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    parts = data.split(maxsplit=4)
    if parts[0] != b"P6":
        raise ValueError("not a binary PPM")
    w, h = int(parts[1]), int(parts[2])
    return np.frombuffer(parts[4], dtype=np.uint8, count=w * h * 3).reshape(h, w, 3)


# -- scenario templates -----------------------------------------------------

def _obstacle(spec: dict):
    kind = spec.get("type")
    if kind == "rect":
        return Rect(float(spec["x"]), float(spec["y"]), float(spec["hx"]), float(spec["hy"]),
                    float(spec.get("angle", 0.0)))
    if kind == "circle":
        return Circle(float(spec["x"]), float(spec["y"]), float(spec["r"]))
    raise ValueError(f"unknown obstacle type {kind!r}")


def templates_from_dict(doc: dict) -> list[Template]:
    out = []
    for t in doc.get("templates", []):
        t = dict(t)
        statics = tuple(_obstacle(o) for o in t.pop("static_obstacles", []) or [])
        for key, value in list(t.items()):
            if isinstance(value, list):
                t[key] = tuple(value)
        out.append(Template(static_obstacles=statics, **t))
    if not out:
        raise ValueError("template file defines no templates")
    return out


def load_templates(path=None) -> list[Template]:
    """Read templates from a YAML file; ``None`` loads the bundled set."""
    if path is None:
        text = resources.files("ogmfusion").joinpath("data/templates.yaml").read_text("utf-8")
    else:
        text = Path(path).read_text("utf-8")
    return templates_from_dict(yaml.safe_load(text))


# -- dataset layout -----------------------------------------------------------

def _pose_dict(p: Pose2) -> dict:
    return {"x": p.x, "y": p.y, "psi": p.psi}


def _pose(d: dict) -> Pose2:
    return Pose2(d["x"], d["y"], d["psi"])


def sample_name(pair: SamplePair) -> str:
    return f"s{pair.scene:05d}_{pair.perspective}"


def save_sample(pair: SamplePair, root) -> str:
    name = sample_name(pair)
    d = Path(root) / name
    d.mkdir(parents=True, exist_ok=True)
    save_grid(pair.g1, d / "g1.eogm")
    save_grid(pair.g2, d / "g2.eogm")
    save_grid(pair.label, d / "label.eogm")
    meta = {
        "pose1": _pose_dict(pair.pose1),
        "pose2": _pose_dict(pair.pose2),
        "scene": pair.scene,
        "perspective": pair.perspective,
        "template_id": pair.template_id,
    }
    (d / "meta.json").write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")
    return name


def load_sample(directory) -> SamplePair:
    d = Path(directory)
    meta = json.loads((d / "meta.json").read_text("utf-8"))
    return SamplePair(
        load_grid(d / "g1.eogm"), load_grid(d / "g2.eogm"),
        _pose(meta["pose1"]), _pose(meta["pose2"]), load_grid(d / "label.eogm"),
        meta["scene"], meta["perspective"], meta.get("template_id", ""),
    )


@dataclass
class DatasetManifest:
    geometry: GridGeometry
    seed: int
    samples: dict[str, str] = field(default_factory=dict)
    """sample directory name -> split"""
    configs: dict[str, NoiseSpec] = field(default_factory=lambda: dict(CONFIGS))
    version: int = MANIFEST_VERSION
    extra: dict = field(default_factory=dict)

    def split(self, name: str) -> list[str]:
        return sorted(k for k, v in self.samples.items() if v == name)

    def to_dict(self) -> dict:
        g = self.geometry
        return {
            "version": self.version,
            "geometry": {"n_x": g.n_x, "n_y": g.n_y, "resolution": g.resolution},
            "seed": self.seed,
            "configs": {k: {"r": v.r, "alpha": v.alpha} for k, v in self.configs.items()},
            "split_ratios": [0.8, 0.1, 0.1],
            "samples": dict(sorted(self.samples.items())),
            **self.extra,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetManifest":
        if d.get("version") != MANIFEST_VERSION:
            raise VersionMismatch(f"unsupported manifest version {d.get('version')}")
        known = {"version", "geometry", "seed", "configs", "split_ratios", "samples"}
        return cls(
            GridGeometry(**d["geometry"]), d["seed"], dict(d["samples"]),
            {k: NoiseSpec(v["r"], v["alpha"]) for k, v in d["configs"].items()},
            d["version"], {k: v for k, v in d.items() if k not in known},
        )

    def validate(self, root) -> None:
        bad = {v for v in self.samples.values()} - {"train", "val", "test"}
        if bad:
            raise ValueError(f"unknown split names {bad}")
        for name in self.samples:
            if not (Path(root) / name / "meta.json").exists():
                raise FileNotFoundError(f"sample {name} listed in manifest is missing")


def write_manifest(manifest: DatasetManifest, root) -> None:
    path = Path(root) / MANIFEST_NAME
    tmp = path.with_suffix(".tmp")
    tmp.write_text(json.dumps(manifest.to_dict(), indent=2) + "\n", encoding="utf-8")
    tmp.replace(path)


def read_manifest(root) -> DatasetManifest:
    return DatasetManifest.from_dict(json.loads((Path(root) / MANIFEST_NAME).read_text("utf-8")))


class Dataset:
    """Lazily loaded dataset directory."""

    def __init__(self, root):
        self.root = Path(root)
        self.manifest = read_manifest(self.root)
        self._cache: dict[str, SamplePair] = {}

    def names(self, split: str | None = None) -> list[str]:
        if split is None:
            return sorted(self.manifest.samples)
        return self.manifest.split(split)

    def load(self, name: str) -> SamplePair:
        if name not in self._cache:
            self._cache[name] = load_sample(self.root / name)
        return self._cache[name]

    def pairs(self, split: str | None = None) -> list[SamplePair]:
        return [self.load(n) for n in self.names(split)]
