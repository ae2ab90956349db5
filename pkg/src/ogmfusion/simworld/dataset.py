"""Two-vehicle sample pair generation."""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from ..fusion import build_label
from ..grid import EvidentialGrid, GridGeometry, Pose2
from .ism import SensorConfig, raycast_ism
from .world import Scenario, Template, build_scenario

SPLIT_RATIOS = (0.8, 0.1, 0.1)
SPLITS = ("train", "val", "test")


@dataclass(frozen=True)
class SamplePair:
    """Input grids with their exact poses and the fused label seen from ``g1``."""

    g1: EvidentialGrid
    g2: EvidentialGrid
    pose1: Pose2
    pose2: Pose2
    label: EvidentialGrid
    scene: int = 0
    perspective: int = 0
    template_id: str = ""

    def __post_init__(self):
        if self.label.geometry != self.g1.geometry:
            raise ValueError("label geometry must equal the first grid's geometry")


def scenario_rng(seed: int, index: int) -> np.random.Generator:
    """Independent stream per scene, so serial and parallel runs agree."""
    return np.random.default_rng([seed, index])


def generate_scene(templates: Sequence[Template], index: int, seed: int,
                   overlap_max_distance: float = 40.0,
                   geometry: GridGeometry | None = None,
                   sensor: SensorConfig | None = None) -> tuple[SamplePair, SamplePair]:
    geometry = geometry or GridGeometry()
    sensor = sensor or SensorConfig()
    rng = scenario_rng(seed, index)
    template = templates[rng.integers(len(templates))]
    scenario: Scenario = build_scenario(template, rng, max_distance=overlap_max_distance,
                                        margin=sensor.max_range, index=index, seed=seed)
    pose1, pose2 = scenario.poses
    g1 = raycast_ism(scenario, pose1, geometry, sensor).quantized()
    g2 = raycast_ism(scenario, pose2, geometry, sensor).quantized()
    label1, label2 = build_label(g1, pose1, g2, pose2)
    return (
        SamplePair(g1, g2, pose1, pose2, label1.quantized(), index, 0, template.id),
        SamplePair(g2, g1, pose2, pose1, label2.quantized(), index, 1, template.id),
    )


def _scene_job(args):
    return generate_scene(*args)


def generate_sample_pairs(templates: Sequence[Template], count: int, overlap_max_distance: float = 40.0,
                          rng_seed: int = 0, geometry: GridGeometry | None = None,
                          sensor: SensorConfig | None = None, workers: int = 1,
                          start: int = 0) -> Iterator[SamplePair]:
    """Yield two sample pairs per scene, in scene order, deterministic in ``rng_seed``."""
    if count < 1:
        raise ValueError("count must be >= 1")
    if not templates:
        raise ValueError("no templates given")
    jobs = [(tuple(templates), i, rng_seed, overlap_max_distance, geometry, sensor)
            for i in range(start, start + count)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            for pair in pool.map(_scene_job, jobs):
                yield from pair
    else:
        for job in jobs:
            yield from _scene_job(job)


def split_scenes(n_scenes: int, seed: int, ratios=SPLIT_RATIOS) -> list[str]:
    """Assign every scene to train/val/test; both perspectives share a split."""
    n_train = int(round(ratios[0] * n_scenes))
    n_val = int(round(ratios[1] * n_scenes))
    n_val = min(n_val, n_scenes - n_train)
    order = np.random.default_rng([seed, 0x5B117]).permutation(n_scenes)
    out = [""] * n_scenes
    for rank, scene in enumerate(order):
        out[scene] = "train" if rank < n_train else "val" if rank < n_train + n_val else "test"
    return out
