"""Desk-scale blind single-image super-resolution.

Library layout:

- ``tensor`` / ``ops``: NumPy-backed reverse-mode autodiff engine
- ``blocks``: channel attention, gated depth-wise FFN, dense and
  LSH-bucketed non-local attention, and the combined two-branch block
- ``model``: the U-shaped generator, spectral-norm discriminator,
  checkpoint format
- ``degradation``: Gaussian-kernel blur + antialiased bicubic
  downsampling + noise
- ``data``: PNG I/O, center-then-random cropping, luma transform
- ``training``: Adam, LR schedule, loss combination, both stages
- ``metrics``: Y-channel PSNR/SSIM
- ``cli``: the ``nlcunet`` command
"""

from .config import (CropPolicy, DegradationSpec, ModelConfig, RunConfig,
                     SparseAttentionConfig, TrainConfig)
from .model import NLCUnet, UnetDiscriminator, build_discriminator, build_generator
from .tensor import GradientTape, Tensor, backward, no_grad

__all__ = [
    "CropPolicy",
    "DegradationSpec",
    "GradientTape",
    "ModelConfig",
    "NLCUnet",
    "RunConfig",
    "SparseAttentionConfig",
    "Tensor",
    "TrainConfig",
    "UnetDiscriminator",
    "backward",
    "build_discriminator",
    "build_generator",
    "no_grad",
]

__version__ = "0.1.0"
