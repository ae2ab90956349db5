"""Small fully convolutional evidential network with a hand-written backward pass.

Tensors are channels-last internally: ``(N, H, W, C)``.  Kernels are stored
as ``(3, 3, C_in, C_out)``.

Layout::

    x  (4) ──conv s2──> a1 (w0) ──conv s2──> a2 (w1) ──conv s2──> a3 (w2)
    a3 ──conv d2──> a4 ──conv d2──> a5                         (w2 -> w2)
    a5 ──up2, conv──> (+a2) a6 ──up2, conv──> (+a1) a7         (w1, w0)
    [up2(a7), x] ──conv──> ReLU evidence (2)

Every conv is followed by a ReLU, the last one included.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

K = 3
IN_CHANNELS = 4
OUT_CHANNELS = 2
DEFAULT_WIDTHS = (16, 32, 64)


class ShapeMismatch(ValueError):
    pass


# (name, stride, dilation) in forward order
LAYERS = (
    ("down1", 2, 1),
    ("down2", 2, 1),
    ("down3", 2, 1),
    ("ctx1", 1, 2),
    ("ctx2", 1, 2),
    ("up1", 1, 1),
    ("up2", 1, 1),
    ("head", 1, 1),
)


def layer_channels(widths=DEFAULT_WIDTHS):
    w0, w1, w2 = widths
    return {
        "down1": (IN_CHANNELS, w0),
        "down2": (w0, w1),
        "down3": (w1, w2),
        "ctx1": (w2, w2),
        "ctx2": (w2, w2),
        "up1": (w2, w1),
        "up2": (w1, w0),
        "head": (w0 + IN_CHANNELS, OUT_CHANNELS),
    }


@dataclass
class NetParams:
    """Ordered kernels and biases; ``arrays`` alternates weight, bias per layer."""

    widths: tuple = DEFAULT_WIDTHS
    weights: dict = field(default_factory=dict)
    biases: dict = field(default_factory=dict)

    @classmethod
    def init(cls, rng, widths=DEFAULT_WIDTHS, dtype=np.float64) -> "NetParams":
        """Kernels uniform in +-sqrt(1/fan_in), biases zero."""
        p = cls(tuple(widths))
        for name, (cin, cout) in layer_channels(widths).items():
            bound = np.sqrt(1.0 / (K * K * cin))
            p.weights[name] = rng.uniform(-bound, bound, size=(K, K, cin, cout)).astype(dtype)
            p.biases[name] = np.zeros(cout, dtype=dtype)
        return p

    @classmethod
    def zeros(cls, widths=DEFAULT_WIDTHS, dtype=np.float64) -> "NetParams":
        p = cls(tuple(widths))
        for name, (cin, cout) in layer_channels(widths).items():
            p.weights[name] = np.zeros((K, K, cin, cout), dtype=dtype)
            p.biases[name] = np.zeros(cout, dtype=dtype)
        return p

    def arrays(self) -> list[np.ndarray]:
        out = []
        for name, _, _ in LAYERS:
            out += [self.weights[name], self.biases[name]]
        return out

    @classmethod
    def from_arrays(cls, arrays, widths=None) -> "NetParams":
        if len(arrays) != 2 * len(LAYERS):
            raise ShapeMismatch(f"expected {2 * len(LAYERS)} tensors, got {len(arrays)}")
        if widths is None:
            widths = (arrays[1].shape[0], arrays[3].shape[0], arrays[5].shape[0])
        p = cls(tuple(int(w) for w in widths))
        for k, (name, _, _) in enumerate(LAYERS):
            p.weights[name] = arrays[2 * k]
            p.biases[name] = arrays[2 * k + 1]
        for name, (cin, cout) in layer_channels(p.widths).items():
            if p.weights[name].shape != (K, K, cin, cout) or p.biases[name].shape != (cout,):
                raise ShapeMismatch(f"layer {name}: bad parameter shapes")
        return p

    def astype(self, dtype) -> "NetParams":
        return NetParams.from_arrays([a.astype(dtype) for a in self.arrays()], self.widths)

    def copy(self) -> "NetParams":
        return self.astype(self.weights["head"].dtype)

    @property
    def dtype(self):
        return self.weights["head"].dtype

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.arrays())


def _tap(xp, kh, kw, dilation, stride, ho, wo):
    r0, c0 = kh * dilation, kw * dilation
    return xp[:, r0:r0 + stride * (ho - 1) + 1:stride, c0:c0 + stride * (wo - 1) + 1:stride, :]


def conv_forward(x, w, b, stride=1, dilation=1):
    """3x3 convolution with 'same'-style padding; returns ``(out, cache)``."""
    n, h, wd, c = x.shape
    pad = dilation * (K - 1) // 2
    ho = (h + 2 * pad - dilation * (K - 1) - 1) // stride + 1
    wo = (wd + 2 * pad - dilation * (K - 1) - 1) // stride + 1
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad), (0, 0)))
    cols = np.stack([_tap(xp, kh, kw, dilation, stride, ho, wo) for kh in range(K) for kw in range(K)], axis=3)
    cols = cols.reshape(n * ho * wo, K * K * c)
    out = cols @ w.reshape(K * K * c, -1) + b
    return out.reshape(n, ho, wo, -1), (cols, x.shape, xp.shape, stride, dilation, ho, wo)


def conv_backward(dout, w, cache):
    cols, xshape, xpshape, stride, dilation, ho, wo = cache
    n, h, wd, c = xshape
    cout = w.shape[-1]
    d2 = dout.reshape(-1, cout)
    dw = (cols.T @ d2).reshape(w.shape)
    db = d2.sum(axis=0)
    dcols = (d2 @ w.reshape(K * K * c, cout).T).reshape(n, ho, wo, K * K, c)
    dxp = np.zeros(xpshape, dtype=dout.dtype)
    for k in range(K * K):
        kh, kw = divmod(k, K)
        _tap(dxp, kh, kw, dilation, stride, ho, wo)[...] += dcols[:, :, :, k, :]
    pad = dilation * (K - 1) // 2
    return dxp[:, pad:pad + h, pad:pad + wd, :], dw, db


def upsample2(x):
    return x.repeat(2, axis=1).repeat(2, axis=2)


def upsample2_backward(d):
    n, h, w, c = d.shape
    return d.reshape(n, h // 2, 2, w // 2, 2, c).sum(axis=(2, 4))


def _check_input(x):
    if x.ndim != 4 or x.shape[3] != IN_CHANNELS:
        raise ShapeMismatch(f"expected (N, H, W, {IN_CHANNELS}) input, got {x.shape}")
    if x.shape[1] % 8 or x.shape[2] % 8:
        raise ShapeMismatch(f"spatial size {x.shape[1:3]} must be divisible by 8")


def forward_nhwc(params: NetParams, x, keep_cache: bool = False):
    """Evidence ``(N, H, W, 2)`` for input ``(N, H, W, 4)``."""
    _check_input(x)
    x = x.astype(params.dtype, copy=False)
    cache = {}
    pre = {}

    def conv(name, inp, stride, dilation):
        z, c = conv_forward(inp, params.weights[name], params.biases[name], stride, dilation)
        if keep_cache:
            cache[name] = c
            pre[name] = z
        return np.maximum(z, 0)

    a1 = conv("down1", x, 2, 1)
    a2 = conv("down2", a1, 2, 1)
    a3 = conv("down3", a2, 2, 1)
    a4 = conv("ctx1", a3, 1, 2)
    a5 = conv("ctx2", a4, 1, 2)
    a6 = conv("up1", upsample2(a5), 1, 1) + a2
    a7 = conv("up2", upsample2(a6), 1, 1) + a1
    out = conv("head", np.concatenate([upsample2(a7), x], axis=3), 1, 1)
    if keep_cache:
        return out, (cache, pre)
    return out


def backward_nhwc(params: NetParams, dout, tape):
    """Gradients of a scalar loss w.r.t. all parameters given ``d loss / d evidence``."""
    cache, pre = tape
    gw, gb = {}, {}

    def back(name, d):
        d = d * (pre[name] > 0)
        dx, gw[name], gb[name] = conv_backward(d, params.weights[name], cache[name])
        return dx

    w0 = params.widths[0]
    d_head_in = back("head", dout)
    d7 = upsample2_backward(d_head_in[..., :w0])
    d1 = d7.copy()
    d6 = upsample2_backward(back("up2", d7))
    d2 = d6.copy()
    d5 = upsample2_backward(back("up1", d6))
    d4 = back("ctx2", d5)
    d3 = back("ctx1", d4)
    d2 = d2 + back("down3", d3)
    d1 = d1 + back("down2", d2)
    back("down1", d1)
    grads = []
    for name, _, _ in LAYERS:
        grads += [gw[name], gb[name]]
    return grads


def relu_pattern(tape):
    """Boolean activation pattern of every ReLU, for kink detection."""
    _, pre = tape
    return {k: v > 0 for k, v in pre.items()}


def to_nhwc(x):
    """(C, H, W) or (N, C, H, W) -> (N, H, W, C)."""
    x = np.asarray(x)
    if x.ndim == 3:
        x = x[None]
    return np.ascontiguousarray(x.transpose(0, 2, 3, 1))


def forward(params: NetParams, x) -> np.ndarray:
    """Evidence map ``(2, n_x, n_y)`` for a single input ``(4, n_x, n_y)``."""
    x = np.asarray(x)
    if x.ndim != 3 or x.shape[0] != IN_CHANNELS:
        raise ShapeMismatch(f"expected ({IN_CHANNELS}, n_x, n_y) input, got {x.shape}")
    out = forward_nhwc(params, to_nhwc(x))
    return out[0].transpose(2, 0, 1)
