"""Y-channel PSNR and SSIM with the border-shave convention."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .data import rgb_to_ycbcr_y

Y_TRANSFORM = "bt601-studio-swing"


def shave_border(img: np.ndarray, border: int) -> np.ndarray:
    """Drop `border` pixels on every spatial edge (last two axes)."""
    if border == 0:
        return img
    if img.shape[-1] <= 2 * border or img.shape[-2] <= 2 * border:
        raise ValueError(f"image {img.shape} too small to shave {border} pixels")
    return img[..., border:-border, border:-border]


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB over [0,1] data.

    Identical inputs return math.inf.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"psnr: shapes differ {a.shape} vs {b.shape}")
    mse = np.mean((a - b) ** 2)
    if mse == 0.0:
        return math.inf
    return float(10.0 * np.log10(1.0 / mse))


def _gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    ax = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(ax ** 2) / (2.0 * sigma * sigma))
    g /= g.sum()
    return g


def _filter_valid(img: np.ndarray, taps: np.ndarray) -> np.ndarray:
    # separable 'valid' correlation with a symmetric window
    def pass1d(x, axis):
        k = len(taps)
        n = x.shape[axis] - k + 1
        sl = [slice(None)] * x.ndim
        sl[axis] = slice(0, n)
        out = taps[0] * x[tuple(sl)]
        for i in range(1, k):
            sl[axis] = slice(i, i + n)
            out += taps[i] * x[tuple(sl)]
        return out

    return pass1d(pass1d(img, 0), 1)


def ssim(a: np.ndarray, b: np.ndarray, k1: float = 0.01, k2: float = 0.03,
         window_size: int = 11, sigma: float = 1.5) -> float:
    """Single-scale SSIM over [0,1] grayscale images.

    Gaussian 11x11 window (sigma 1.5), dynamic range 1.0, averaged over
    valid window positions only.
    """
    a = np.asarray(a, dtype=np.float64).squeeze()
    b = np.asarray(b, dtype=np.float64).squeeze()
    if a.shape != b.shape:
        raise ValueError(f"ssim: shapes differ {a.shape} vs {b.shape}")
    if a.ndim != 2:
        raise ValueError(f"ssim expects a single-channel image, got shape {a.shape}")
    if min(a.shape) < window_size:
        raise ValueError(f"image {a.shape} smaller than the {window_size}x{window_size} window")
    taps = _gaussian_window(window_size, sigma)
    c1 = k1 * k1
    c2 = k2 * k2
    mu_a = _filter_valid(a, taps)
    mu_b = _filter_valid(b, taps)
    var_a = _filter_valid(a * a, taps) - mu_a ** 2
    var_b = _filter_valid(b * b, taps) - mu_b ** 2
    cov = _filter_valid(a * b, taps) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def y_psnr(sr_rgb: np.ndarray, hr_rgb: np.ndarray, border: int = 0) -> float:
    """PSNR on the luma plane after shaving `border` pixels."""
    ya = shave_border(rgb_to_ycbcr_y(sr_rgb), border)
    yb = shave_border(rgb_to_ycbcr_y(hr_rgb), border)
    return psnr(ya, yb)


def y_ssim(sr_rgb: np.ndarray, hr_rgb: np.ndarray, border: int = 0) -> float:
    ya = shave_border(rgb_to_ycbcr_y(sr_rgb), border)
    yb = shave_border(rgb_to_ycbcr_y(hr_rgb), border)
    return ssim(ya, yb)


@dataclass
class MetricReport:
    """Per-image and aggregate Y-channel quality numbers."""

    scale: int
    border_shave: int
    y_transform: str = Y_TRANSFORM
    names: List[str] = field(default_factory=list)
    psnr_values: List[float] = field(default_factory=list)
    ssim_values: List[float] = field(default_factory=list)
    kernel_widths: List[Optional[float]] = field(default_factory=list)

    def add(self, name: str, psnr_db: float, ssim_score: float,
            kernel_width: Optional[float] = None):
        self.names.append(name)
        self.psnr_values.append(psnr_db)
        self.ssim_values.append(ssim_score)
        self.kernel_widths.append(kernel_width)

    @property
    def mean_psnr(self) -> float:
        return float(np.mean(self.psnr_values)) if self.psnr_values else math.nan

    @property
    def mean_ssim(self) -> float:
        return float(np.mean(self.ssim_values)) if self.ssim_values else math.nan

    def by_kernel_width(self) -> dict:
        groups: dict = {}
        for width, p, s in zip(self.kernel_widths, self.psnr_values, self.ssim_values):
            if width is None:
                continue
            groups.setdefault(width, []).append((p, s))
        return {
            width: {"psnr": float(np.mean([p for p, _ in vals])),
                    "ssim": float(np.mean([s for _, s in vals])),
                    "count": len(vals)}
            for width, vals in sorted(groups.items())
        }

    @staticmethod
    def _encode(x: float):
        return "inf" if math.isinf(x) else x

    def to_json(self) -> str:
        payload = {
            "convention": {"border_shave": self.border_shave, "y_transform": self.y_transform,
                           "scale": self.scale},
            "images": [
                {"name": n, "psnr": self._encode(p), "ssim": s,
                 **({"kernel_width": kw} if kw is not None else {})}
                for n, p, s, kw in zip(self.names, self.psnr_values, self.ssim_values,
                                       self.kernel_widths)
            ],
            "mean_psnr": self._encode(self.mean_psnr),
            "mean_ssim": self.mean_ssim,
        }
        grouped = self.by_kernel_width()
        if grouped:
            payload["by_kernel_width"] = grouped
        return json.dumps(payload, indent=2) + "\n"

    def to_table(self) -> str:
        def fmt(p):
            return "inf" if math.isinf(p) else f"{p:.3f}"

        lines = [
            f"Y-channel metrics (scale x{self.scale}, border shave {self.border_shave}, "
            f"{self.y_transform})",
            f"{'image':<32} {'PSNR':>8} {'SSIM':>8}",
        ]
        for n, p, s in zip(self.names, self.psnr_values, self.ssim_values):
            lines.append(f"{n:<32} {fmt(p):>8} {s:>8.4f}")
        lines.append(f"{'mean':<32} {fmt(self.mean_psnr):>8} {self.mean_ssim:>8.4f}")
        return "\n".join(lines) + "\n"
