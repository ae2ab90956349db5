"""Training loop, checkpoints and inference for the evidential fusion net."""
from __future__ import annotations

import csv
import logging
import struct
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from ..evidence import evidence_to_mass_arrays
from ..grid import EvidentialGrid
from ..pipeline import prealign, training_example
from ..simworld.noise import NoiseSpec
from .loss import LossConfig, loss_and_grad
from .network import NetParams, backward_nhwc, forward, forward_nhwc, to_nhwc
from .optim import Adam, PlateauScheduler

log = logging.getLogger(__name__)

CKPT_MAGIC = b"GFNP"
CKPT_VERSION = 1


class EmptyDataset(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.01
    decay: float = 0.5
    patience: int = 10
    max_epochs: int = 30
    batch_size: int = 8
    seed: int = 0
    crop_size: int = 64
    augment: bool = True
    steps_per_epoch: int | None = None
    """default: one pass over the training pairs"""
    val_limit: int | None = None
    widths: tuple = (16, 32, 64)
    dtype: str = "float32"

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        if "widths" in d:
            d["widths"] = tuple(d["widths"])
        return cls(**d)


def batch_loss_step(params: NetParams, xb, yb, cfg: LossConfig):
    """Forward + backward for a channel-first batch; returns ``(loss, grads)``."""
    out, tape = forward_nhwc(params, to_nhwc(xb).astype(params.dtype), keep_cache=True)
    loss, dout = loss_and_grad(out, to_nhwc(yb).astype(out.dtype), cfg)
    return loss, backward_nhwc(params, dout, tape)


def dataset_loss(params: NetParams, pairs, spec: NoiseSpec, loss_cfg: LossConfig, seed: int) -> float:
    """Mean full-grid loss with a fixed noise draw per pair."""
    total = 0.0
    for k, pair in enumerate(pairs):
        x, y = prealign(pair, spec, np.random.default_rng([seed, 0xBA1, k]))
        e = forward_nhwc(params, to_nhwc(x).astype(params.dtype))
        total += loss_and_grad(e, to_nhwc(y).astype(e.dtype), loss_cfg, need_grad=False)[0]
    return total / max(len(pairs), 1)


def train(train_pairs: Sequence, val_pairs: Sequence, cfg: TrainConfig = TrainConfig(),
          loss_cfg: LossConfig = LossConfig(), noise: NoiseSpec = NoiseSpec(),
          params: NetParams | None = None):
    """Adam with plateau decay; returns ``(best_params, log_rows)``."""
    if not train_pairs or not val_pairs:
        raise EmptyDataset("training and validation splits must be non-empty")
    dtype = np.dtype(cfg.dtype)
    if params is None:
        params = NetParams.init(np.random.default_rng([cfg.seed, 0x1417]), cfg.widths, dtype)
    else:
        params = params.astype(dtype)
    opt = Adam(params.arrays(), lr=cfg.lr)
    sched = PlateauScheduler(opt, cfg.decay, cfg.patience)
    val_pairs = list(val_pairs)[: cfg.val_limit] if cfg.val_limit else list(val_pairs)
    steps = cfg.steps_per_epoch or max(1, len(train_pairs) // cfg.batch_size)
    best_val, best = np.inf, params.copy()
    rows = []
    for epoch in range(1, cfg.max_epochs + 1):
        order = np.random.default_rng([cfg.seed, epoch]).permutation(len(train_pairs))
        lr_used = opt.lr
        losses = []
        for step in range(steps):
            xs, ys = [], []
            for b in range(cfg.batch_size):
                slot = (step * cfg.batch_size + b) % len(order)
                rng = np.random.default_rng([cfg.seed, epoch, step, b])
                x, y = training_example(train_pairs[order[slot]], noise, rng, cfg.crop_size, cfg.augment)
                xs.append(x)
                ys.append(y)
            loss, grads = batch_loss_step(params, np.stack(xs), np.stack(ys), loss_cfg)
            opt.step(grads)
            losses.append(loss)
        val = dataset_loss(params, val_pairs, noise, loss_cfg, cfg.seed)
        if val < best_val:
            best_val, best = val, params.copy()
        sched.step(val)
        rows.append({"epoch": epoch, "train_loss": float(np.mean(losses)), "val_loss": val, "lr": lr_used})
        log.info("epoch %d train %.5f val %.5f lr %.5g", epoch, rows[-1]["train_loss"], val, lr_used)
    return best, rows


def overfit(params: NetParams, xs, ys, iterations: int = 500, lr: float = 0.01,
            loss_cfg: LossConfig = LossConfig()):
    """Full-batch Adam on fixed examples; returns ``(params, losses)``.

    ``losses[0]`` is the loss before the first update, ``losses[-1]`` after
    the last one.
    """
    params = params.copy()
    opt = Adam(params.arrays(), lr=lr)
    losses = []
    for _ in range(iterations):
        loss, grads = batch_loss_step(params, xs, ys, loss_cfg)
        losses.append(loss)
        opt.step(grads)
    losses.append(batch_loss_step(params, xs, ys, loss_cfg)[0])
    return params, losses


def predict_grid(params: NetParams, x, geometry) -> EvidentialGrid:
    """Fused evidential grid from a prealigned ``(4, n_x, n_y)`` input."""
    e = forward(params, x).astype(np.float64)
    mf, mo, _ = evidence_to_mass_arrays(e[0], e[1])
    return EvidentialGrid(geometry, mf, mo)


def write_log(rows, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.DictWriter(f, fieldnames=["epoch", "train_loss", "val_loss", "lr"], lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (f"{v:.8g}" if isinstance(v, float) else v) for k, v in r.items()})


# -- checkpoints -------------------------------------------------------------
# b"GFNP" | version u32 | tensor count u32 | per tensor: ndim u32, dims u32[ndim], float32 payload

def save_checkpoint(params: NetParams, path) -> None:
    arrays = params.arrays()
    with open(path, "wb") as f:
        f.write(struct.pack("<4sII", CKPT_MAGIC, CKPT_VERSION, len(arrays)))
        for a in arrays:
            f.write(struct.pack(f"<I{a.ndim}I", a.ndim, *a.shape))
            f.write(np.ascontiguousarray(a, dtype="<f4").tobytes())


def load_checkpoint(path) -> NetParams:
    from ..io import BadMagic, TruncatedFile, VersionMismatch

    data = Path(path).read_bytes()
    if len(data) < 12:
        raise TruncatedFile("checkpoint header truncated")
    magic, version, count = struct.unpack_from("<4sII", data)
    if magic != CKPT_MAGIC:
        raise BadMagic(f"expected {CKPT_MAGIC!r}, got {magic!r}")
    if version != CKPT_VERSION:
        raise VersionMismatch(f"unsupported checkpoint version {version}")
    off = 12
    arrays = []
    try:
        for _ in range(count):
            (ndim,) = struct.unpack_from("<I", data, off)
            shape = struct.unpack_from(f"<{ndim}I", data, off + 4)
            off += 4 + 4 * ndim
            n = int(np.prod(shape))
            if off + 4 * n > len(data):
                raise TruncatedFile("checkpoint payload truncated")
            arrays.append(np.frombuffer(data, "<f4", n, off).reshape(shape).astype(np.float32))
            off += 4 * n
    except struct.error as exc:
        raise TruncatedFile(str(exc)) from exc
    return NetParams.from_arrays(arrays)


def train_config_dict(cfg: TrainConfig) -> dict:
    d = asdict(cfg)
    d["widths"] = list(d["widths"])
    return d
