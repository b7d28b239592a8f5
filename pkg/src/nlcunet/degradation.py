"""Synthetic degradation: Gaussian blur kernels, antialiased bicubic
downsampling, and additive white Gaussian noise.

The model never sees the sampled kernel; it is returned only so runs can
be reproduced and audited. Blurring uses true convolution (kernel
flipped) with reflect padding, applied as a sum of separable passes from
the kernel's SVD, which is exact to floating point and much faster than
a direct 2-D sweep.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Tuple, Union

import numpy as np

from .config import DegradationSpec, TEST_GRID_RANGES
from .ops import resize_array
from .rng import CounterRng
from .tensor import ShapeError, Tensor


@dataclass
class BlurKernel:
    """Normalized 2-D Gaussian blur kernel plus its generating parameters."""

    values: np.ndarray
    params: dict = field(default_factory=dict)

    @property
    def size(self) -> int:
        return self.values.shape[0]


def gaussian_kernel_iso(sigma: float, size: int = 21) -> BlurKernel:
    """Isotropic Gaussian kernel, normalized to sum 1.

    Args:
        sigma: kernel width, > 0.
        size: odd side length.
    """
    if sigma <= 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    if size % 2 == 0 or size < 1:
        raise ValueError(f"kernel size must be odd and >= 1, got {size}")
    c = (size - 1) / 2.0
    ax = np.arange(size, dtype=np.float64) - c
    g = np.exp(-(ax[:, None] ** 2 + ax[None, :] ** 2) / (2.0 * sigma * sigma))
    g /= g.sum()
    return BlurKernel(values=g, params={"type": "iso", "sigma": float(sigma), "size": size})


def gaussian_kernel_aniso(sigma1: float, sigma2: float, theta: float,
                          size: int = 21) -> BlurKernel:
    """Rotated anisotropic Gaussian kernel, normalized to sum 1.

    Args:
        sigma1, sigma2: principal-axis widths, > 0.
        theta: rotation angle in radians; the kernel is pi-periodic in it.
        size: odd side length.
    """
    if sigma1 <= 0 or sigma2 <= 0:
        raise ValueError(f"widths must be > 0, got ({sigma1}, {sigma2})")
    if size % 2 == 0 or size < 1:
        raise ValueError(f"kernel size must be odd and >= 1, got {size}")
    c = (size - 1) / 2.0
    cos_t, sin_t = np.cos(theta), np.sin(theta)
    rot = np.array([[cos_t, -sin_t], [sin_t, cos_t]], dtype=np.float64)
    cov = rot @ np.diag([sigma1 ** 2, sigma2 ** 2]) @ rot.T
    inv = np.linalg.inv(cov)
    ax = np.arange(size, dtype=np.float64) - c
    xx, yy = np.meshgrid(ax, ax)  # xx varies along columns, yy along rows
    quad = inv[0, 0] * xx ** 2 + (inv[0, 1] + inv[1, 0]) * xx * yy + inv[1, 1] * yy ** 2
    g = np.exp(-0.5 * quad)
    g /= g.sum()
    return BlurKernel(values=g, params={"type": "aniso", "sigma1": float(sigma1),
                                        "sigma2": float(sigma2), "theta": float(theta),
                                        "size": size})


def delta_kernel(size: int = 21) -> BlurKernel:
    g = np.zeros((size, size), dtype=np.float64)
    g[size // 2, size // 2] = 1.0
    return BlurKernel(values=g, params={"type": "delta", "size": size})


def _correlate1d_valid(x: np.ndarray, taps: np.ndarray, axis: int) -> np.ndarray:
    k = len(taps)
    n = x.shape[axis] - k + 1
    sl = [slice(None)] * x.ndim
    sl[axis] = slice(0, n)
    out = taps[0] * x[tuple(sl)]
    for i in range(1, k):
        sl[axis] = slice(i, i + n)
        out += taps[i] * x[tuple(sl)]
    return out


def blur_reflect(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """True convolution of NCHW images with a 2-D kernel, reflect padded.

    The kernel is flipped (convolution, not correlation) and split into
    separable rank-1 passes via SVD; all non-negligible singular
    components are kept, so the result matches a direct 2-D convolution
    to floating-point accuracy.
    """
    k = kernel.shape[0]
    pad = k // 2
    flipped = kernel[::-1, ::-1].astype(img.dtype)
    u, s, vt = np.linalg.svd(flipped)
    keep = s > s[0] * 1e-14 if s[0] > 0 else s > 0
    xp = np.pad(img, ((0, 0), (0, 0), (pad, pad), (pad, pad)), mode="reflect")
    out = np.zeros_like(img)
    for i in np.flatnonzero(keep):
        col = (u[:, i] * s[i]).astype(img.dtype)
        row = vt[i].astype(img.dtype)
        tmp = _correlate1d_valid(xp, col, axis=2)
        out += _correlate1d_valid(tmp, row, axis=3)
    return out


def sample_kernel(spec: DegradationSpec, rng: CounterRng) -> BlurKernel:
    """Draw one blur kernel according to the spec's mode."""
    size = spec.resolved_kernel_size()
    if spec.mode == "identity":
        return delta_kernel(size)
    lo, hi = spec.resolved_width_range()
    if spec.mode == "config1":
        sigma = rng.uniform(low=lo, high=hi)
        return gaussian_kernel_iso(sigma, size)
    sigma1 = rng.uniform(low=lo, high=hi)
    sigma2 = rng.uniform(low=lo, high=hi)
    theta = rng.uniform(low=spec.rotation_range[0], high=spec.rotation_range[1])
    return gaussian_kernel_aniso(sigma1, sigma2, theta, size)


def degrade(hr: Union[Tensor, np.ndarray], spec: DegradationSpec,
            rng: Optional[CounterRng] = None) -> Tuple[Tensor, List[BlurKernel]]:
    """Blur, bicubic-downsample and noise a batch of HR images.

    Args:
        hr: (N, 3, H, W) pixels in [0, 1]; H and W divisible by the scale.
        spec: degradation parameters; its seed drives sampling unless an
            explicit rng is handed in (training derives one per iteration).

    Returns:
        (lr, kernels): the (N, 3, H/s, W/s) result and the kernel drawn
        for each batch item. Identity mode skips blur entirely, making
        the output bit-identical to a plain antialiased bicubic
        downsample. Noise (std noise_sigma/255) is added after
        downsampling and the result is clamped to [0, 1]; with zero noise
        the clamp is skipped so the resize identity stays exact.
    """
    arr = hr.data if isinstance(hr, Tensor) else np.asarray(hr)
    if arr.ndim != 4:
        raise ShapeError(f"degrade expects NCHW input, got ndim {arr.ndim}")
    n, c, h, w = arr.shape
    s = spec.scale
    if h % s or w % s:
        raise ShapeError(f"spatial dims {h}x{w} not divisible by scale {s}")
    rng = rng or CounterRng(spec.seed, "degrade")
    kernels: List[BlurKernel] = []
    if spec.mode == "identity":
        for i in range(n):
            kernels.append(delta_kernel(spec.resolved_kernel_size()))
        blurred = arr
    else:
        blurred = np.empty_like(arr)
        for i in range(n):
            kernel = sample_kernel(spec, rng.spawn(i).spawn("kernel"))
            kernels.append(kernel)
            blurred[i] = blur_reflect(arr[i:i + 1], kernel.values)[0]
    # one batched resize keeps identity mode bit-identical to resize_array
    out = resize_array(blurred, h // s, w // s, antialias=True)
    if spec.noise_sigma > 0:
        for i in range(n):
            noise = rng.spawn(i).spawn("noise").normal(
                size=out[i].shape, std=spec.noise_sigma / 255.0)
            out[i] = np.clip(out[i] + noise.astype(out.dtype), 0.0, 1.0)
    return Tensor(out), kernels


def test_kernel_grid(scale: int, size: int = 21) -> List[BlurKernel]:
    """Eight isotropic kernels with widths evenly spaced (endpoints
    included) over the evaluation range for the given scale."""
    if scale not in TEST_GRID_RANGES:
        raise ValueError(f"no kernel grid for scale {scale}; valid: {sorted(TEST_GRID_RANGES)}")
    lo, hi = TEST_GRID_RANGES[scale]
    return [gaussian_kernel_iso(sigma, size) for sigma in np.linspace(lo, hi, 8)]


def degrade_with_kernel(hr: Union[Tensor, np.ndarray], kernel: BlurKernel, scale: int,
                        noise_sigma: float = 0.0,
                        rng: Optional[CounterRng] = None) -> Tensor:
    """Degrade with one fixed kernel (evaluation-set synthesis)."""
    arr = hr.data if isinstance(hr, Tensor) else np.asarray(hr)
    n, c, h, w = arr.shape
    if h % scale or w % scale:
        raise ShapeError(f"spatial dims {h}x{w} not divisible by scale {scale}")
    img = blur_reflect(arr, kernel.values)
    small = resize_array(img, h // scale, w // scale, antialias=True)
    if noise_sigma > 0:
        rng = rng or CounterRng(0, "fixed-kernel-noise")
        noise = rng.normal(size=small.shape, std=noise_sigma / 255.0)
        small = np.clip(small + noise.astype(small.dtype), 0.0, 1.0)
    return Tensor(small)
