import math

import numpy as np
import pytest

from ogmfusion.evidence import combine_arrays
from ogmfusion.fusion import fuse_baseline
from ogmfusion.grid import EvidentialGrid, GridGeometry, Pose2, relative_transform, resample, wrap_angle
from ogmfusion.pipeline import (
    apply_augmentation,
    augment,
    noisy_transform,
    prealign,
    sample_augmentation,
    training_example,
)
from ogmfusion.simworld import CONFIGS, SamplePair

from oracles import random_masses

_TINY = GridGeometry(8, 8, 0.32)


def valid_stack(planes, tol=1e-9):
    planes = np.asarray(planes)
    pairs = planes.reshape(-1, 2, *planes.shape[1:])
    return planes.min() >= 0 and (pairs.sum(axis=1)).max() <= 1 + tol


def test_zero_noise_matches_exact_resampling(scene_pairs):
    pair = scene_pairs[0]
    x, label = prealign(pair, CONFIGS["A"], np.random.default_rng(0))
    exact = resample(pair.g2, relative_transform(pair.pose1, pair.pose2))
    assert x.shape == (4,) + pair.g1.geometry.shape
    assert np.array_equal(x[:2], pair.g1.planes())
    assert np.array_equal(x[2:], exact.planes())
    assert np.array_equal(label, pair.label.planes())


def test_zero_noise_prealign_then_dempster_is_baseline(scene_pairs):
    for pair in scene_pairs[:4]:
        x, _ = prealign(pair, CONFIGS["A"], np.random.default_rng(1))
        mf, mo, _ = combine_arrays(*x)
        mf, mo = np.nan_to_num(mf), np.nan_to_num(mo)
        base = fuse_baseline(pair.g1, pair.pose1, pair.g2, pair.pose2).fused
        assert np.abs(mf - base.m_free).max() <= 1e-12
        assert np.abs(mo - base.m_occ).max() <= 1e-12


def test_vacuous_second_grid_gives_zero_channels(scene_pairs):
    p = scene_pairs[0]
    pair = SamplePair(p.g1, EvidentialGrid.vacuous(p.g1.geometry), p.pose1, p.pose2, p.label)
    x, _ = prealign(pair, CONFIGS["D"], np.random.default_rng(3))
    assert not x[2:].any()


def test_label_is_not_perturbed(scene_pairs):
    pair = scene_pairs[1]
    for seed in range(3):
        _, label = prealign(pair, CONFIGS["D"], np.random.default_rng(seed))
        assert np.array_equal(label, pair.label.planes())


def test_alignment_residual_three_sigma():
    # both poses are perturbed, so the relative heading error has std sigma * sqrt(2)
    spec = CONFIGS["D"]
    sigma = spec.sigma_rotation * math.sqrt(2)
    p1, p2 = Pose2(10.0, 4.0, 0.3), Pose2(30.0, -2.0, 0.1)
    exact = relative_transform(p1, p2)
    dpsi = []
    for seed in range(10_000):
        dummy = SamplePair(*(2 * [EvidentialGrid.vacuous(_TINY)]), p1, p2, EvidentialGrid.vacuous(_TINY))
        t = noisy_transform(dummy, spec, np.random.default_rng(seed))
        dpsi.append(wrap_angle(t.psi - exact.psi))
    frac = np.mean(np.abs(dpsi) <= 3 * sigma)
    # 3 sigma covers 99.73 %; allow four binomial standard errors
    assert frac >= 0.9973 - 4 * math.sqrt(0.9973 * 0.0027 / 10_000)


def _random_stack(rng, shape=(40, 40)):
    planes = []
    for _ in range(2):
        planes.extend(random_masses(rng, shape))
    return np.stack(planes)


def test_horizontal_flip_twice_is_identity(rng):
    x = _random_stack(rng)
    label = x[:2].copy()
    once = apply_augmentation(x, label, True, False, 0.0)
    twice = apply_augmentation(*once, True, False, 0.0)
    assert not np.array_equal(once[0], x)
    assert np.array_equal(twice[0], x) and np.array_equal(twice[1], label)


def test_no_transform_is_identity(rng):
    x = _random_stack(rng)
    out_x, out_l = apply_augmentation(x, x[2:], False, False, 0.0)
    assert np.array_equal(out_x, x) and np.array_equal(out_l, x[2:])


@pytest.mark.parametrize("seed", range(8))
def test_input_and_label_share_transform(seed):
    rng = np.random.default_rng(seed)
    label = np.stack(random_masses(rng, (40, 40)))
    x = np.concatenate([label, label])
    ax, al = augment(x, label, rng)
    assert np.array_equal(ax[:2], al) and np.array_equal(ax[2:], al)
    assert valid_stack(ax) and valid_stack(al)


def test_augmentation_parameters_cover_range():
    rng = np.random.default_rng(0)
    draws = [sample_augmentation(rng) for _ in range(4000)]
    h, v, a = map(np.array, zip(*draws))
    assert 0.45 < h.mean() < 0.55 and 0.45 < v.mean() < 0.55
    assert a.min() >= -20 and a.max() <= 20 and a.min() < -19.5 and a.max() > 19.5


def test_vertical_flip_reverses_forward_axis(rng):
    x = _random_stack(rng)
    out, _ = apply_augmentation(x, x[:2], False, True, 0.0)
    assert np.array_equal(out, x[:, ::-1, :])


def test_training_example_shape_and_determinism(scene_pairs):
    pair = scene_pairs[2]
    a = training_example(pair, CONFIGS["C"], np.random.default_rng([5, 1]))
    b = training_example(pair, CONFIGS["C"], np.random.default_rng([5, 1]))
    assert a[0].shape == (4, 64, 64) and a[1].shape == (2, 64, 64)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])
    assert valid_stack(a[0]) and valid_stack(a[1])
    full = training_example(pair, CONFIGS["C"], np.random.default_rng(0), crop_size=None, augment_data=False)
    assert full[0].shape == (4,) + pair.g1.geometry.shape
