"""From a sample pair to network input: noisy prealignment and augmentation."""
from __future__ import annotations

import math

import numpy as np

from .grid import EvidentialGrid, GridGeometry, Pose2, relative_transform, resample_planes
from .simworld.dataset import SamplePair
from .simworld.noise import NoiseSpec, perturb_pose

MAX_ROTATION_DEG = 20.0


def stack_input(g1_planes, g2_planes) -> np.ndarray:
    """Concatenate two (2, n_x, n_y) mass stacks along the channel axis."""
    return np.concatenate([np.asarray(g1_planes), np.asarray(g2_planes)], axis=0)


def noisy_transform(pair: SamplePair, spec: NoiseSpec, rng) -> Pose2:
    p1 = perturb_pose(pair.pose1, spec, rng)
    p2 = perturb_pose(pair.pose2, spec, rng)
    return relative_transform(p1, p2)


def prealign(pair: SamplePair, spec: NoiseSpec, rng, method: str = "bilinear"):
    """Return ``(net_input, label_planes)``.

    Both poses are perturbed; ``g2`` is pulled into ``g1``'s frame with the
    resulting (noisy) relative transform.  The label is built from exact
    poses and passes through untouched.
    """
    t = noisy_transform(pair, spec, rng)
    g2_aligned = resample_planes(pair.g2.planes(), pair.g2.geometry, t, method)
    return stack_input(pair.g1.planes(), g2_aligned), pair.label.planes()


def aligned_grid(pair: SamplePair, spec: NoiseSpec, rng, method: str = "bilinear") -> EvidentialGrid:
    x, _ = prealign(pair, spec, rng, method)
    return EvidentialGrid(pair.g1.geometry, x[2], x[3])


def _rotate_stack(planes, angle: float, resolution: float):
    # rotation about the grid center
    geometry = GridGeometry(planes.shape[1], planes.shape[2], resolution)
    return resample_planes(planes, geometry, Pose2(0.0, 0.0, angle))


def apply_augmentation(x, label, flip_h: bool, flip_v: bool, angle_deg: float,
                       resolution: float = 0.32):
    """Apply one spatial transform to every input channel and to the label.

    ``flip_h`` mirrors the lateral axis, ``flip_v`` the forward axis (with
    forward pointing up in the rendered image).
    """
    x = np.asarray(x, dtype=np.float64)
    label = np.asarray(label, dtype=np.float64)
    n_in = x.shape[0]
    stack = np.concatenate([x, label], axis=0)
    if flip_h:
        stack = stack[:, :, ::-1]
    if flip_v:
        stack = stack[:, ::-1, :]
    if angle_deg != 0.0:
        stack = _rotate_stack(stack, math.radians(angle_deg), resolution)
    stack = np.ascontiguousarray(stack)
    return stack[:n_in], stack[n_in:]


def sample_augmentation(rng, max_rotation_deg: float = MAX_ROTATION_DEG):
    flip_h = bool(rng.random() < 0.5)
    flip_v = bool(rng.random() < 0.5)
    angle = float(rng.uniform(-max_rotation_deg, max_rotation_deg))
    return flip_h, flip_v, angle


def augment(x, label, rng, resolution: float = 0.32):
    """Random flips (p = 0.5 each) and a rotation uniform in [-20, 20] degrees."""
    return apply_augmentation(x, label, *sample_augmentation(rng), resolution=resolution)


def crop(x, label, center_i: int, center_j: int, size: int):
    h = size // 2
    sl = (slice(None), slice(center_i - h, center_i - h + size), slice(center_j - h, center_j - h + size))
    return x[sl], label[sl]


def training_example(pair: SamplePair, spec: NoiseSpec, rng, crop_size: int | None = 64,
                     augment_data: bool = True):
    """Prealign, augment and crop one pair; returns ``(x, label)`` arrays.

    Augmentation runs on a window 1.5x the crop so the rotated crop never
    reaches the window's padded corners.
    """
    x, label = prealign(pair, spec, rng)
    res = pair.g1.geometry.resolution
    if crop_size is None:
        return augment(x, label, rng, res) if augment_data else (x, label)
    n_x, n_y = x.shape[1:]
    window = min(int(math.ceil(crop_size * 1.5 / 2)) * 2, n_x, n_y)
    half = window // 2
    ci = int(rng.integers(half, n_x - window + half + 1))
    cj = int(rng.integers(half, n_y - window + half + 1))
    x, label = crop(x, label, ci, cj, window)
    if augment_data:
        x, label = augment(x, label, rng, res)
    c = window // 2
    return crop(x, label, c, c, crop_size)
