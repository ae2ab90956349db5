"""Gaussian pose noise parameterized by 98 % confidence half-widths."""
from __future__ import annotations

import math
from dataclasses import dataclass
from statistics import NormalDist

from ..grid import Pose2

# two-sided 98 % interval of a standard normal: +-2.3263
Z98 = NormalDist().inv_cdf(0.99)


@dataclass(frozen=True)
class NoiseSpec:
    r: float = 0.0
    """translational 98 % half-width, meters"""
    alpha: float = 0.0
    """rotational 98 % half-width, degrees"""

    def __post_init__(self):
        if self.r < 0 or self.alpha < 0:
            raise ValueError(f"noise half-widths must be >= 0, got {self}")

    @property
    def sigma_translation(self) -> float:
        return self.r / Z98

    @property
    def sigma_rotation(self) -> float:
        return math.radians(self.alpha) / Z98


CONFIGS = {
    "A": NoiseSpec(0.0, 0.0),
    "B": NoiseSpec(1.0, 10.0),
    "C": NoiseSpec(2.5, 15.0),
    "D": NoiseSpec(5.0, 20.0),
}


def perturb_pose(pose: Pose2, spec: NoiseSpec, rng) -> Pose2:
    """Add independent zero-mean noise to x, y and heading."""
    dx, dy = rng.normal(0.0, spec.sigma_translation, size=2)
    dpsi = rng.normal(0.0, spec.sigma_rotation)
    return Pose2(pose.x + float(dx), pose.y + float(dy), pose.psi + float(dpsi))
