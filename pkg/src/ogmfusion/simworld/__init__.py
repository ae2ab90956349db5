from .dataset import SamplePair, generate_sample_pairs, generate_scene, split_scenes
from .ism import SensorConfig, raycast_ism
from .noise import CONFIGS, NoiseSpec, Z98, perturb_pose
from .world import Circle, PlacementFailure, Rect, Scenario, Template, build_scenario

__all__ = [
    "CONFIGS", "Circle", "NoiseSpec", "PlacementFailure", "Rect", "SamplePair", "Scenario",
    "SensorConfig", "Template", "Z98", "build_scenario", "generate_sample_pairs",
    "generate_scene", "perturb_pose", "raycast_ism", "split_scenes",
]
