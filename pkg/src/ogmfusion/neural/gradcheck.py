"""Analytic vs central finite-difference gradients of loss(network(x))."""
from __future__ import annotations

import numpy as np

from .loss import LossConfig, loss_and_grad
from .network import NetParams, backward_nhwc, forward_nhwc, relu_pattern, to_nhwc


def loss_and_param_grads(params: NetParams, x, label, cfg: LossConfig = LossConfig()):
    """``x``: (N, 4, H, W) or (4, H, W); ``label``: matching (.., 2, H, W) masses."""
    xn, yn = to_nhwc(x), to_nhwc(label)
    out, tape = forward_nhwc(params, xn, keep_cache=True)
    loss, dout = loss_and_grad(out, yn.astype(out.dtype), cfg)
    return loss, backward_nhwc(params, dout, tape), tape


def _loss_only(params, xn, yn, cfg):
    out, tape = forward_nhwc(params, xn, keep_cache=True)
    return loss_and_grad(out, yn, cfg, need_grad=False)[0], relu_pattern(tape)


def _same_pattern(a, b) -> bool:
    return all(np.array_equal(a[k], b[k]) for k in a)


def grad_check(params: NetParams, x, label, cfg: LossConfig = LossConfig(), n_samples: int = 200,
               h: float = 1e-4, rng=None, return_details: bool = False):
    """Max relative error over ``n_samples`` randomly chosen parameters.

    A parameter whose +-h perturbation flips any ReLU is skipped (the finite
    difference would straddle a kink) and another one is drawn instead.
    Runs in float64.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    params = params.astype(np.float64)
    xn = to_nhwc(x).astype(np.float64)
    yn = to_nhwc(label).astype(np.float64)
    _, analytic, tape = loss_and_param_grads(params, x, label, cfg)
    base_pattern = relu_pattern(tape)
    arrays = params.arrays()
    sizes = np.array([a.size for a in arrays])
    errors, skipped = [], 0
    max_draws = 50 * n_samples
    draws = 0
    while len(errors) < n_samples and draws < max_draws:
        draws += 1
        k = int(rng.choice(len(arrays), p=sizes / sizes.sum()))
        idx = int(rng.integers(arrays[k].size))
        flat = arrays[k].reshape(-1)
        orig = flat[idx]
        flat[idx] = orig + h
        lp, pat_p = _loss_only(params, xn, yn, cfg)
        flat[idx] = orig - h
        lm, pat_m = _loss_only(params, xn, yn, cfg)
        flat[idx] = orig
        if not (_same_pattern(base_pattern, pat_p) and _same_pattern(base_pattern, pat_m)):
            skipped += 1
            continue
        g_n = (lp - lm) / (2 * h)
        g_a = float(analytic[k].reshape(-1)[idx])
        errors.append(abs(g_a - g_n) / max(abs(g_a), abs(g_n), 1e-8))
    if len(errors) < n_samples:
        raise RuntimeError(f"only {len(errors)} kink-free parameters found ({skipped} skipped)")
    worst = max(errors)
    if return_details:
        return worst, {"checked": len(errors), "skipped": skipped}
    return worst


def loss_grad_check(evidence, label, cfg: LossConfig = LossConfig(), h: float = 1e-6) -> float:
    """Max absolute difference between analytic and numeric d loss / d evidence."""
    e = np.array(evidence, dtype=np.float64)
    y = np.asarray(label, dtype=np.float64)
    _, g = loss_and_grad(e, y, cfg)
    worst = 0.0
    for idx in np.ndindex(e.shape):
        orig = e[idx]
        e[idx] = orig + h
        lp = loss_and_grad(e, y, cfg, need_grad=False)[0]
        e[idx] = orig - h
        lm = loss_and_grad(e, y, cfg, need_grad=False)[0]
        e[idx] = orig
        worst = max(worst, abs((lp - lm) / (2 * h) - g[idx]))
    return worst
