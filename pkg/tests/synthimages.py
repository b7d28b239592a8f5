"""Procedural test images: structured, learnable content without any
dataset download. Used for training smoke tests and toy benchmarks."""

import numpy as np


def _grating(h, w, freq, theta, phase):
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    axis = (xx * np.cos(theta) + yy * np.sin(theta)) / max(h, w)
    return np.sin(2.0 * np.pi * freq * axis + phase)


def _soft_disk(h, w, cy, cx, radius, softness=2.0):
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    d = np.sqrt((yy - cy) ** 2 + (xx - cx) ** 2)
    return 1.0 / (1.0 + np.exp((d - radius) / softness))


def synth_image(seed, h=128, w=128):
    """Structured RGB image in [0,1]: gradients + gratings + soft shapes."""
    rng = np.random.default_rng(seed)
    img = np.zeros((3, h, w), dtype=np.float64)
    # base gradient per channel
    for c in range(3):
        gy, gx = rng.uniform(-1, 1, 2)
        yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
        img[c] = 0.5 + 0.25 * (gy * yy / h + gx * xx / w)
    # oriented gratings with random color weights
    for _ in range(4):
        g = _grating(h, w, rng.uniform(2, 12), rng.uniform(0, np.pi),
                     rng.uniform(0, 2 * np.pi))
        color = rng.uniform(0.05, 0.25, 3)
        img += color[:, None, None] * g
    # a few soft disks
    for _ in range(3):
        d = _soft_disk(h, w, rng.uniform(0, h), rng.uniform(0, w),
                       rng.uniform(h / 10, h / 4))
        color = rng.uniform(-0.3, 0.3, 3)
        img += color[:, None, None] * d
    return np.clip(img, 0.0, 1.0).astype(np.float32)


def synth_image_centered(seed, h=640, w=640, center=512):
    """Image whose learnable structure sits in the centered window; the
    periphery is near-unlearnable high-frequency noise."""
    rng = np.random.default_rng(seed)
    structured = synth_image(seed, h, w).astype(np.float64)
    noise = rng.uniform(0.0, 1.0, (3, h, w))
    # smooth center mask: 1 inside the centered window, 0 well outside
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    half = center / 2.0
    dy = np.abs(yy - (h - 1) / 2.0)
    dx = np.abs(xx - (w - 1) / 2.0)
    edge = np.maximum(dy, dx) - half
    mask = 1.0 / (1.0 + np.exp(edge / 8.0))
    img = structured * mask + noise * (1.0 - mask)
    return np.clip(img, 0.0, 1.0).astype(np.float32)
