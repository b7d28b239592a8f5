"""Differentiable array operations.

Each op computes its forward value with NumPy and registers a closure
implementing the exact backward rule. Convolution is cross-correlation
(no kernel flip); the degradation pipeline flips its kernels itself where
true convolution is required. All ops preserve the input dtype so the
same graph can run in float32 (training) or float64 (gradient checks).
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np
from scipy.special import erf as _erf

from .tensor import ShapeError, Tensor, make_op

# ---------------------------------------------------------------------------
# broadcasting helpers
# ---------------------------------------------------------------------------


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum a gradient down to ``shape`` (inverse of NumPy broadcasting)."""
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# elementwise arithmetic
# ---------------------------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    data = a.data + b.data

    def bw(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return make_op(data, (a, b), bw, "add")


def sub(a: Tensor, b: Tensor) -> Tensor:
    data = a.data - b.data

    def bw(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)

    return make_op(data, (a, b), bw, "sub")


def mul(a: Tensor, b: Tensor) -> Tensor:
    data = a.data * b.data

    def bw(g):
        return _unbroadcast(g * b.data, a.data.shape), _unbroadcast(g * a.data, b.data.shape)

    return make_op(data, (a, b), bw, "mul")


def div(a: Tensor, b: Tensor) -> Tensor:
    data = a.data / b.data

    def bw(g):
        ga = _unbroadcast(g / b.data, a.data.shape)
        gb = _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape)
        return ga, gb

    return make_op(data, (a, b), bw, "div")


def neg(a: Tensor) -> Tensor:
    return make_op(-a.data, (a,), lambda g: (-g,), "neg")


def exp(a: Tensor) -> Tensor:
    data = np.exp(a.data)
    return make_op(data, (a,), lambda g: (g * data,), "exp")


def log(a: Tensor) -> Tensor:
    return make_op(np.log(a.data), (a,), lambda g: (g / a.data,), "log")


def sqrt(a: Tensor) -> Tensor:
    data = np.sqrt(a.data)
    return make_op(data, (a,), lambda g: (g * (0.5 / data),), "sqrt")


def abs_(a: Tensor) -> Tensor:
    return make_op(np.abs(a.data), (a,), lambda g: (g * np.sign(a.data),), "abs")


def clamp_min(a: Tensor, floor: float) -> Tensor:
    data = np.maximum(a.data, floor)
    mask = a.data > floor

    def bw(g):
        return (g * mask.astype(g.dtype),)

    return make_op(data, (a,), bw, "clamp_min")


# ---------------------------------------------------------------------------
# activations
# ---------------------------------------------------------------------------


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return make_op(a.data * mask, (a,), lambda g: (g * mask,), "relu")


def leaky_relu(a: Tensor, slope: float = 0.2) -> Tensor:
    mask = a.data > 0
    scale = np.where(mask, 1.0, slope).astype(a.data.dtype)
    return make_op(a.data * scale, (a,), lambda g: (g * scale,), "leaky_relu")


_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def gelu(a: Tensor) -> Tensor:
    """Exact (erf-based) Gaussian error linear unit."""
    x = a.data
    cdf = 0.5 * (1.0 + _erf(x * _INV_SQRT2))
    data = x * cdf

    def bw(g):
        pdf = np.exp(-0.5 * x * x) * _INV_SQRT_2PI
        return (g * (cdf + x * pdf),)

    return make_op(data.astype(x.dtype), (a,), bw, "gelu")


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    data = np.empty_like(x)
    pos = x >= 0
    data[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    data[~pos] = ex / (1.0 + ex)

    def bw(g):
        return (g * data * (1.0 - data),)

    return make_op(data, (a,), bw, "sigmoid")


def tanh(a: Tensor) -> Tensor:
    data = np.tanh(a.data)
    return make_op(data, (a,), lambda g: (g * (1.0 - data * data),), "tanh")


def softplus(a: Tensor) -> Tensor:
    data = np.logaddexp(0.0, a.data).astype(a.data.dtype)

    def bw(g):
        x = a.data
        s = np.empty_like(x)
        pos = x >= 0
        s[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        ex = np.exp(x[~pos])
        s[~pos] = ex / (1.0 + ex)
        return (g * s,)

    return make_op(data, (a,), bw, "softplus")


# ---------------------------------------------------------------------------
# shape plumbing
# ---------------------------------------------------------------------------


def reshape(a: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    data = a.data.reshape(shape)
    src = a.data.shape
    return make_op(data, (a,), lambda g: (g.reshape(src),), "reshape")


def swap_last2(a: Tensor) -> Tensor:
    if a.ndim < 2:
        raise ShapeError(f"swap_last2 needs ndim >= 2, got {a.ndim}")
    data = np.ascontiguousarray(np.swapaxes(a.data, -1, -2))
    return make_op(data, (a,), lambda g: (np.swapaxes(g, -1, -2),), "swap_last2")


def concat_channels(tensors: Sequence[Tensor]) -> Tensor:
    tensors = list(tensors)
    base = tensors[0].data.shape
    for t in tensors[1:]:
        if t.data.shape[0] != base[0] or t.data.shape[2:] != base[2:]:
            raise ShapeError(
                f"concat_channels: non-channel dims differ ({t.data.shape} vs {base})")
    sizes = [t.data.shape[1] for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=1)
    bounds = np.cumsum([0] + sizes)

    def bw(g):
        return tuple(g[:, bounds[i]:bounds[i + 1]] for i in range(len(sizes)))

    return make_op(data, tensors, bw, "concat_channels")


def slice_channels(a: Tensor, start: int, stop: int) -> Tensor:
    data = np.ascontiguousarray(a.data[:, start:stop])

    def bw(g):
        out = np.zeros_like(a.data)
        out[:, start:stop] = g
        return (out,)

    return make_op(data, (a,), bw, "slice_channels")


def chunk_channels(a: Tensor, chunks: int):
    c = a.data.shape[1]
    if c % chunks != 0:
        raise ShapeError(f"chunk_channels: C={c} not divisible into {chunks} chunks")
    step = c // chunks
    return tuple(slice_channels(a, i * step, (i + 1) * step) for i in range(chunks))


def concat_rows(tensors: Sequence[Tensor]) -> Tensor:
    """Stack 2-D (rows, C) tensors along axis 0."""
    tensors = list(tensors)
    sizes = [t.data.shape[0] for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=0)
    bounds = np.cumsum([0] + sizes)

    def bw(g):
        return tuple(g[bounds[i]:bounds[i + 1]] for i in range(len(sizes)))

    return make_op(data, tensors, bw, "concat_rows")


def take_rows(a: Tensor, idx: np.ndarray) -> Tensor:
    """Gather rows of a 2-D tensor; backward scatter-adds."""
    idx = np.asarray(idx, dtype=np.int64)
    data = a.data[idx]

    def bw(g):
        out = np.zeros_like(a.data)
        np.add.at(out, idx, g)
        return (out,)

    return make_op(data, (a,), bw, "take_rows")


def crop2d(a: Tensor, h: int, w: int) -> Tensor:
    """Keep the top-left h x w spatial window."""
    if h > a.data.shape[2] or w > a.data.shape[3]:
        raise ShapeError(f"crop2d: target {h}x{w} exceeds input {a.data.shape[2:]}")
    data = np.ascontiguousarray(a.data[:, :, :h, :w])

    def bw(g):
        out = np.zeros_like(a.data)
        out[:, :, :h, :w] = g
        return (out,)

    return make_op(data, (a,), bw, "crop2d")


# ---------------------------------------------------------------------------
# reductions
# ---------------------------------------------------------------------------


def sum_all(a: Tensor) -> Tensor:
    data = a.data.sum()

    def bw(g):
        return (np.full(a.data.shape, g, dtype=a.data.dtype),)

    return make_op(np.asarray(data), (a,), bw, "sum")


def mean_all(a: Tensor) -> Tensor:
    n = a.data.size
    data = a.data.mean()

    def bw(g):
        return (np.full(a.data.shape, g / n, dtype=a.data.dtype),)

    return make_op(np.asarray(data), (a,), bw, "mean")


def l1_distance(a: Tensor, b: Tensor) -> Tensor:
    """Mean absolute difference."""
    if a.data.shape != b.data.shape:
        raise ShapeError(f"l1_distance: shapes differ {a.data.shape} vs {b.data.shape}")
    diff = a.data - b.data
    n = diff.size
    data = np.abs(diff).mean()

    def bw(g):
        s = np.sign(diff) * (g / n)
        return s.astype(a.data.dtype), (-s).astype(b.data.dtype)

    return make_op(np.asarray(data), (a, b), bw, "l1_distance")


def global_avg_pool(a: Tensor) -> Tensor:
    """Per-channel spatial mean, keeping 1x1 spatial dims."""
    n, c, h, w = a.data.shape
    data = a.data.mean(axis=(2, 3), keepdims=True)

    def bw(g):
        return (np.broadcast_to(g / (h * w), a.data.shape).astype(a.data.dtype),)

    return make_op(data, (a,), bw, "global_avg_pool")


# ---------------------------------------------------------------------------
# linear algebra
# ---------------------------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError("matmul needs ndim >= 2 on both sides")
    if a.data.shape[-1] != b.data.shape[-2]:
        raise ShapeError(
            f"matmul: inner dims differ ({a.data.shape[-1]} vs {b.data.shape[-2]})")
    data = a.data @ b.data

    def bw(g):
        ga = _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.data.shape)
        gb = _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.data.shape)
        return ga, gb

    return make_op(data, (a, b), bw, "matmul")


def softmax_lastdim(a: Tensor) -> Tensor:
    """Softmax over the last axis, max-shifted for stability."""
    x = a.data
    m = x.max(axis=-1, keepdims=True)
    e = np.exp(x - m)
    data = e / e.sum(axis=-1, keepdims=True)

    def bw(g):
        dot = (g * data).sum(axis=-1, keepdims=True)
        return (data * (g - dot),)

    return make_op(data, (a,), bw, "softmax")


# ---------------------------------------------------------------------------
# normalization
# ---------------------------------------------------------------------------


def layernorm_channels(a: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-6) -> Tensor:
    """Normalize the channel vector at every spatial location.

    Mean and (biased) variance are taken over axis 1 of NCHW input; gamma
    and beta are per-channel affine parameters.
    """
    x = a.data
    if x.ndim != 4:
        raise ShapeError(f"layernorm_channels expects NCHW, got ndim {x.ndim}")
    c = x.shape[1]
    if gamma.data.shape != (c,) or beta.data.shape != (c,):
        raise ShapeError(
            f"layernorm_channels: affine params must have shape ({c},), "
            f"got {gamma.data.shape} and {beta.data.shape}")
    mu = x.mean(axis=1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    gcol = gamma.data.reshape(1, c, 1, 1)
    data = gcol * xhat + beta.data.reshape(1, c, 1, 1)

    def bw(g):
        gh = g * gcol
        m1 = gh.mean(axis=1, keepdims=True)
        m2 = (gh * xhat).mean(axis=1, keepdims=True)
        gx = (gh - m1 - xhat * m2) * inv
        ggamma = (g * xhat).sum(axis=(0, 2, 3))
        gbeta = g.sum(axis=(0, 2, 3))
        return gx.astype(x.dtype), ggamma.astype(x.dtype), gbeta.astype(x.dtype)

    return make_op(data, (a, gamma, beta), bw, "layernorm")


# ---------------------------------------------------------------------------
# padding
# ---------------------------------------------------------------------------


def _fold_reflect(g: np.ndarray, before: int, after: int, axis: int) -> np.ndarray:
    """Fold reflect-padded gradient back onto the source axis."""
    g = np.moveaxis(g, axis, 0)
    n = g.shape[0] - before - after
    core = g[before:before + n].copy()
    if before:
        core[1:before + 1] += g[:before][::-1]
    if after:
        core[n - after - 1:n - 1] += g[n + before:][::-1]
    return np.moveaxis(core, 0, axis)


def pad2d_asym(a: Tensor, top: int, bottom: int, left: int, right: int,
               mode: str = "zero") -> Tensor:
    """Pad the spatial axes of NCHW input by per-side amounts."""
    if not (top or bottom or left or right):
        return a
    if mode not in ("zero", "reflect"):
        raise ValueError(f"unknown padding mode {mode!r}")
    x = a.data
    h, w = x.shape[2], x.shape[3]
    if mode == "reflect" and (max(top, bottom) >= h or max(left, right) >= w):
        raise ShapeError(
            f"reflect pad ({top},{bottom},{left},{right}) needs spatial dims "
            f"larger than the pad, got {x.shape[2:]}")
    widths = ((0, 0), (0, 0), (top, bottom), (left, right))
    data = np.pad(x, widths, mode="reflect" if mode == "reflect" else "constant")

    if mode == "zero":
        def bw(g):
            return (g[:, :, top:top + h, left:left + w],)
    else:
        def bw(g):
            g = _fold_reflect(g, top, bottom, 2)
            g = _fold_reflect(g, left, right, 3)
            return (g,)

    return make_op(data, (a,), bw, "pad2d")


def pad2d(a: Tensor, pad: int, mode: str = "zero") -> Tensor:
    """Pad both spatial axes of NCHW input by ``pad`` on each side."""
    return pad2d_asym(a, pad, pad, pad, pad, mode)


# ---------------------------------------------------------------------------
# convolution
# ---------------------------------------------------------------------------


def _im2col(xp: np.ndarray, kh: int, kw: int, stride: int):
    n, c, hp, wp = xp.shape
    oh = (hp - kh) // stride + 1
    ow = (wp - kw) // stride + 1
    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))
    win = win[:, :, ::stride, ::stride]
    cols = np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(n, oh * ow, c * kh * kw)
    return cols, oh, ow


def _col2im(gcols: np.ndarray, xp_shape, kh: int, kw: int, stride: int, oh: int, ow: int):
    n, c, hp, wp = xp_shape
    g = gcols.reshape(n, oh, ow, c, kh, kw)
    gx = np.zeros(xp_shape, dtype=gcols.dtype)
    for i in range(kh):
        for j in range(kw):
            gx[:, :, i:i + stride * oh:stride, j:j + stride * ow:stride] += \
                g[:, :, :, :, i, j].transpose(0, 3, 1, 2)
    return gx


def _conv2d_raw(a: Tensor, weight: Tensor, bias, stride: int) -> Tensor:
    xp = a.data
    w = weight.data
    o, cin, kh, kw = w.shape
    if xp.shape[1] != cin:
        raise ShapeError(
            f"conv2d: input channels C={xp.shape[1]} do not match weight in-channels {cin}")
    if xp.shape[2] < kh or xp.shape[3] < kw:
        raise ShapeError(
            f"conv2d: kernel {kh}x{kw} does not fit padded input {xp.shape[2]}x{xp.shape[3]}")
    cols, oh, ow = _im2col(xp, kh, kw, stride)
    w2d = w.reshape(o, cin * kh * kw)
    out = cols @ w2d.T
    if bias is not None:
        out = out + bias.data.reshape(1, 1, o)
    data = np.ascontiguousarray(out.transpose(0, 2, 1)).reshape(xp.shape[0], o, oh, ow)

    parents = (a, weight) if bias is None else (a, weight, bias)

    def bw(g):
        g2 = np.ascontiguousarray(g.reshape(g.shape[0], o, oh * ow).transpose(0, 2, 1))
        gw = (g2.reshape(-1, o).T @ cols.reshape(-1, cin * kh * kw)).reshape(w.shape)
        gcols = g2 @ w2d
        gx = _col2im(gcols, xp.shape, kh, kw, stride, oh, ow)
        if bias is None:
            return gx, gw
        gb = g.sum(axis=(0, 2, 3))
        return gx, gw, gb

    return make_op(data, parents, bw, "conv2d")


def conv2d(a: Tensor, weight: Tensor, bias=None, stride: int = 1,
           padding: int = 0, pad_mode: str = "zero") -> Tensor:
    """2-D cross-correlation over NCHW input.

    Output spatial size is floor((H + 2*padding - kh)/stride) + 1.
    """
    if a.ndim != 4 or weight.ndim != 4:
        raise ShapeError(
            f"conv2d expects 4-D input and weight, got {a.ndim}-D and {weight.ndim}-D")
    x = pad2d(a, padding, pad_mode) if padding else a
    return _conv2d_raw(x, weight, bias, stride)


def depthwise_conv2d(a: Tensor, weight: Tensor, padding: int = 1,
                     pad_mode: str = "reflect") -> Tensor:
    """Per-channel 3x3-style convolution (stride 1, shape-preserving).

    ``weight`` has shape (C, 1, kh, kw); channel c of the output depends
    only on channel c of the input.
    """
    c = a.data.shape[1]
    if weight.data.shape[0] != c or weight.data.shape[1] != 1:
        raise ShapeError(
            f"depthwise_conv2d: weight channels {weight.data.shape[0]} "
            f"do not match input channels {c}")
    x = pad2d(a, padding, pad_mode) if padding else a
    xp = x.data
    kh, kw = weight.data.shape[2:]
    oh = xp.shape[2] - kh + 1
    ow = xp.shape[3] - kw + 1
    wk = weight.data[:, 0]  # (C, kh, kw)

    # tap loop over kernel positions: contiguous slice FMAs beat an
    # einsum over 6-D strided windows by a wide margin
    data = np.zeros((xp.shape[0], xp.shape[1], oh, ow), dtype=xp.dtype)
    for i in range(kh):
        for j in range(kw):
            data += wk[None, :, i, j, None, None] * xp[:, :, i:i + oh, j:j + ow]

    def bw(g):
        gw = np.empty_like(wk)
        gx = np.zeros_like(xp)
        for i in range(kh):
            for j in range(kw):
                patch = xp[:, :, i:i + oh, j:j + ow]
                gw[:, i, j] = (g * patch).sum(axis=(0, 2, 3))
                gx[:, :, i:i + oh, j:j + ow] += wk[None, :, i, j, None, None] * g
        return gx, gw[:, None]

    return make_op(data, (x, weight), bw, "depthwise_conv2d")


# ---------------------------------------------------------------------------
# resampling
# ---------------------------------------------------------------------------


def _pixel_shuffle_data(x: np.ndarray, r: int) -> np.ndarray:
    n, c, h, w = x.shape
    co = c // (r * r)
    out = x.reshape(n, co, r, r, h, w).transpose(0, 1, 4, 2, 5, 3)
    return np.ascontiguousarray(out).reshape(n, co, h * r, w * r)


def _pixel_unshuffle_data(x: np.ndarray, r: int) -> np.ndarray:
    n, c, h, w = x.shape
    out = x.reshape(n, c, h // r, r, w // r, r).transpose(0, 1, 3, 5, 2, 4)
    return np.ascontiguousarray(out).reshape(n, c * r * r, h // r, w // r)


def pixel_shuffle(a: Tensor, r: int) -> Tensor:
    """Rearrange (N, C*r^2, H, W) -> (N, C, H*r, W*r)."""
    if r == 1:
        return a
    c = a.data.shape[1]
    if c % (r * r) != 0:
        raise ShapeError(f"pixel_shuffle: channels {c} not divisible by r^2={r * r}")
    data = _pixel_shuffle_data(a.data, r)
    return make_op(data, (a,), lambda g: (_pixel_unshuffle_data(g, r),), "pixel_shuffle")


def pixel_unshuffle(a: Tensor, r: int) -> Tensor:
    """Inverse of :func:`pixel_shuffle`."""
    if r == 1:
        return a
    n, c, h, w = a.data.shape
    if h % r != 0 or w % r != 0:
        raise ShapeError(f"pixel_unshuffle: spatial dims {h}x{w} not divisible by {r}")
    data = _pixel_unshuffle_data(a.data, r)
    return make_op(data, (a,), lambda g: (_pixel_shuffle_data(g, r),), "pixel_unshuffle")


def upsample_nearest(a: Tensor, r: int) -> Tensor:
    if r == 1:
        return a
    n, c, h, w = a.data.shape
    data = a.data.repeat(r, axis=2).repeat(r, axis=3)

    def bw(g):
        return (g.reshape(n, c, h, r, w, r).sum(axis=(3, 5)),)

    return make_op(data, (a,), bw, "upsample_nearest")


# bicubic resampling ---------------------------------------------------------

_CUBIC_A = -0.5
_matrix_cache: dict = {}


def _cubic_kernel(t: np.ndarray) -> np.ndarray:
    at = np.abs(t)
    a = _CUBIC_A
    inner = (a + 2.0) * at ** 3 - (a + 3.0) * at ** 2 + 1.0
    outer = a * at ** 3 - 5.0 * a * at ** 2 + 8.0 * a * at - 4.0 * a
    return np.where(at <= 1.0, inner, np.where(at < 2.0, outer, 0.0))


def resize_matrix(n_in: int, n_out: int, antialias: bool = True) -> np.ndarray:
    """(n_out, n_in) row-stochastic bicubic resampling matrix.

    Half-pixel-center source coordinates; when downscaling with antialias
    the kernel support is stretched by the scale ratio. Out-of-range taps
    clamp to the nearest edge sample, and each row is normalized to sum 1.
    """
    key = (n_in, n_out, bool(antialias))
    cached = _matrix_cache.get(key)
    if cached is not None:
        return cached
    scale = n_out / n_in
    kw = max(1.0, 1.0 / scale) if antialias else 1.0
    support = 2.0 * kw
    x = (np.arange(n_out, dtype=np.float64) + 0.5) / scale - 0.5
    left = np.floor(x - support).astype(np.int64) + 1
    taps = int(math.ceil(support) * 2 + 2)
    idx = left[:, None] + np.arange(taps)[None, :]
    weights = _cubic_kernel((x[:, None] - idx) / kw) / kw
    weights /= weights.sum(axis=1, keepdims=True)
    idx = np.clip(idx, 0, n_in - 1)
    mat = np.zeros((n_out, n_in), dtype=np.float64)
    for i in range(n_out):
        np.add.at(mat[i], idx[i], weights[i])
    _matrix_cache[key] = mat
    return mat


def _resize_mats(h: int, w: int, oh: int, ow: int, antialias: bool, dtype):
    key = (h, w, oh, ow, bool(antialias), np.dtype(dtype).str)
    cached = _matrix_cache.get(key)
    if cached is None:
        cached = (resize_matrix(h, oh, antialias).astype(dtype),
                  resize_matrix(w, ow, antialias).astype(dtype))
        _matrix_cache[key] = cached
    return cached


def _apply_resize(x: np.ndarray, mh: np.ndarray, mw: np.ndarray) -> np.ndarray:
    # rows: (N,C,H,W) -> (N,C,OH,W); cols via matmul on the last axis
    tmp = np.moveaxis(np.tensordot(mh, x, axes=(1, 2)), 0, 2)
    return np.ascontiguousarray(tmp) @ mw.T


def resize_array(x: np.ndarray, oh: int, ow: int, antialias: bool = True) -> np.ndarray:
    """Bicubic resize of an NCHW ndarray (no gradient tracking)."""
    mh, mw = _resize_mats(x.shape[2], x.shape[3], oh, ow, antialias, x.dtype)
    return _apply_resize(x, mh, mw)


def bicubic_resize(a: Tensor, out_h: int, out_w: int, antialias: bool = True) -> Tensor:
    """Differentiable bicubic resize; the sampling weights are fixed."""
    if out_h < 1 or out_w < 1:
        raise ShapeError(f"bicubic_resize: target {out_h}x{out_w} must be >= 1")
    x = a.data
    mh, mw = _resize_mats(x.shape[2], x.shape[3], out_h, out_w, antialias, x.dtype)
    data = _apply_resize(x, mh, mw)

    def bw(g):
        return (_apply_resize(np.ascontiguousarray(g), mh.T.copy(), mw.T.copy()),)

    return make_op(data, (a,), bw, "bicubic_resize")
