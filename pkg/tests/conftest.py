import numpy as np
import pytest

from ogmfusion.grid import GridGeometry
from ogmfusion.io import load_templates
from ogmfusion.simworld import SensorConfig, generate_sample_pairs


@pytest.fixture(scope="session")
def templates():
    return load_templates()


@pytest.fixture(scope="session")
def scene_pairs(templates):
    """A handful of full-size generated sample pairs (two per scene)."""
    return list(generate_sample_pairs(templates, 6, rng_seed=11))


@pytest.fixture(scope="session")
def small_geometry():
    return GridGeometry(64, 64, 0.32)


@pytest.fixture(scope="session")
def small_pairs(templates, small_geometry):
    """Pairs on a 64x64 grid, cheap enough for network tests."""
    sensor = SensorConfig(n_rays=360, max_range=15.0)
    return list(generate_sample_pairs(templates, 6, overlap_max_distance=12.0, rng_seed=5,
                                      geometry=small_geometry, sensor=sensor))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
