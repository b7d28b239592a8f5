"""Image I/O, the center-then-random crop strategy, and color transforms."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from PIL import Image

from .config import CropPolicy, DegradationSpec
from .degradation import degrade
from .rng import CounterRng
from .tensor import Tensor

logger = logging.getLogger(__name__)


@dataclass
class ImageRecord:
    path: Optional[str]
    pixels: np.ndarray  # (3, H, W) float32 in [0, 1]

    @property
    def height(self) -> int:
        return self.pixels.shape[1]

    @property
    def width(self) -> int:
        return self.pixels.shape[2]


def load_image(path) -> ImageRecord:
    """Decode an 8-bit PNG (or other PIL-readable file) to [0,1] floats.

    The mapping is exactly v/255, so encode/decode round-trips of
    quantized tensors are bit-exact.
    """
    with Image.open(path) as im:
        rgb = im.convert("RGB")
        arr = np.asarray(rgb, dtype=np.float32) / np.float32(255.0)
    return ImageRecord(path=str(path), pixels=np.ascontiguousarray(arr.transpose(2, 0, 1)))


def quantize(pixels: np.ndarray) -> np.ndarray:
    """Clamp to [0,1] and round to 8-bit levels (still float CHW)."""
    return np.rint(np.clip(pixels, 0.0, 1.0) * 255.0).astype(np.float32) / np.float32(255.0)


def save_image(path, pixels: np.ndarray):
    """Write a (3, H, W) float array in [0,1] as an 8-bit PNG."""
    arr = np.rint(np.clip(pixels, 0.0, 1.0) * 255.0).astype(np.uint8)
    Image.fromarray(arr.transpose(1, 2, 0), mode="RGB").save(path, format="PNG")


def write_manifest(path, image_paths: List[str]):
    Path(path).write_text(json.dumps([str(p) for p in image_paths], indent=2) + "\n")


def read_manifest(path) -> List[str]:
    payload = json.loads(Path(path).read_text())
    if not isinstance(payload, list) or not all(isinstance(p, str) for p in payload):
        raise ValueError(f"{path}: manifest must be a JSON list of paths")
    return payload


def center_window(height: int, width: int, size: int) -> Tuple[int, int, int, int]:
    """(top, left, win_h, win_w) of the centered window; each side shrinks
    to the image side when the image is smaller than the window. Odd
    leftovers go to the floor offset."""
    win_h = min(size, height)
    win_w = min(size, width)
    return (height - win_h) // 2, (width - win_w) // 2, win_h, win_w


def sample_patch(img: ImageRecord, policy: CropPolicy, rng: CounterRng,
                 patch: Optional[int] = None) -> np.ndarray:
    """Random square crop per the policy; seeded and reproducible.

    In center_then_random mode the patch lies entirely inside the
    centered window; random_only crops anywhere in the image.
    """
    ps = policy.patch_size if patch is None else patch
    h, w = img.height, img.width
    if h < ps or w < ps:
        raise ValueError(
            f"image {img.path or '<array>'} is {h}x{w}, smaller than patch {ps}")
    if policy.mode == "center_then_random":
        top, left, win_h, win_w = center_window(h, w, policy.center_size)
        if win_h < ps or win_w < ps:
            logger.warning("center window %dx%d too small for patch %d; "
                           "falling back to full-image crop", win_h, win_w, ps)
            top, left, win_h, win_w = 0, 0, h, w
    else:
        top, left, win_h, win_w = 0, 0, h, w
    dy = rng.integers(win_h - ps + 1)
    dx = rng.integers(win_w - ps + 1)
    y, x = top + dy, left + dx
    return img.pixels[:, y:y + ps, x:x + ps].copy()


def sample_hr_patch(img: ImageRecord, policy: CropPolicy, scale: int,
                    rng: CounterRng) -> np.ndarray:
    """HR crop of side patch_size*scale, so the degraded input is exactly
    patch_size square."""
    return sample_patch(img, policy, rng, patch=policy.patch_size * scale)


def make_training_pair(hr_patch: np.ndarray, spec: DegradationSpec,
                       rng: Optional[CounterRng] = None) -> Tuple[Tensor, Tensor]:
    """Degrade one HR patch into its LR input; returns (lr, hr) tensors."""
    hr = np.asarray(hr_patch, dtype=np.float32)[None]
    lr, _ = degrade(hr, spec, rng)
    return Tensor(lr.data[0][None]), Tensor(hr)


def assemble_batch(images: Sequence[ImageRecord], policy: CropPolicy, spec: DegradationSpec,
                   batch_size: int, rng: CounterRng) -> Tuple[Tensor, Tensor]:
    """Sample a seeded training batch: pick images, crop HR patches,
    degrade them jointly."""
    picks = rng.spawn("pick").integers(len(images), size=batch_size)
    patches = [sample_hr_patch(images[int(picks[i])], policy, spec.scale,
                               rng.spawn("crop", i))
               for i in range(batch_size)]
    hr = np.stack(patches).astype(np.float32)
    lr, _ = degrade(hr, spec, rng.spawn("degrade"))
    return lr, Tensor(hr)


# BT.601 studio-swing luma coefficients (input and output in [0, 1])
_Y_COEF = np.array([65.481, 128.553, 24.966], dtype=np.float64) / 255.0
_Y_OFFSET = 16.0 / 255.0


def rgb_to_ycbcr_y(img: Union[np.ndarray, Tensor]) -> np.ndarray:
    """Luma plane of the studio-swing YCbCr transform.

    Accepts (3, H, W) or (N, 3, H, W); returns (1, H, W) or (N, 1, H, W).
    """
    arr = img.data if isinstance(img, Tensor) else np.asarray(img)
    if arr.ndim == 3:
        y = np.tensordot(_Y_COEF.astype(arr.dtype), arr, axes=(0, 0)) + arr.dtype.type(_Y_OFFSET)
        return y[None]
    if arr.ndim == 4:
        y = np.einsum("c,nchw->nhw", _Y_COEF.astype(arr.dtype), arr) + arr.dtype.type(_Y_OFFSET)
        return y[:, None]
    raise ValueError(f"expected 3-D or 4-D RGB array, got ndim {arr.ndim}")
