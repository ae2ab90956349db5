"""Scoring a dataset split with the baseline or a trained model."""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .fusion import fuse_aligned
from .grid import EvidentialGrid
from .metrics import EvalRecord, evaluate
from .neural.network import NetParams
from .neural.train import predict_grid
from .pipeline import prealign
from .simworld.dataset import SamplePair
from .simworld.noise import NoiseSpec


def noise_rng(seed: int, k: int) -> np.random.Generator:
    """Noise stream for the ``k``-th evaluated sample; shared by every method."""
    return np.random.default_rng([seed, k])


def baseline_predictor(pair: SamplePair, x) -> EvidentialGrid:
    g = pair.g1.geometry
    return fuse_aligned(pair.g1, EvidentialGrid(g, x[2], x[3])).fused


def model_predictor(params: NetParams) -> Callable:
    def predict(pair: SamplePair, x) -> EvidentialGrid:
        return predict_grid(params, x, pair.g1.geometry)
    return predict


def evaluate_pairs(names: Sequence[str], pairs: Sequence[SamplePair], config: str, spec: NoiseSpec,
                   seed: int, predictors: dict[str, Callable]) -> list[EvalRecord]:
    """Score every pair with every predictor on the same noisy prealignment."""
    records = []
    for k, (name, pair) in enumerate(zip(names, pairs)):
        x, _ = prealign(pair, spec, noise_rng(seed, k))
        for method, predict in predictors.items():
            records.append(evaluate(name, config, method, predict(pair, x), pair.label))
    return records
