"""Generator and discriminator assembly plus checkpoint persistence."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import ops
from .blocks import NLCBlock
from .config import ModelConfig
from .layers import Conv2d, Module, SNConv2d
from .rng import CounterRng
from .tensor import ShapeError, Tensor


def _tail_stages(scale: int) -> list:
    if scale == 2:
        return [2]
    if scale == 3:
        return [3]
    if scale == 4:
        return [2, 2]
    raise ShapeError(f"unsupported scale {scale}")


class NLCUnet(Module):
    """Restoration generator: a U-shaped stack of NLC blocks with a
    pixel-shuffle tail and an optional bicubic skip, so the network only
    has to learn a residual over plain upsampling.

    ``use_unet=False`` swaps the pyramid for a flat stack of blocks at
    the base width (the single-scale ablation variant). The final RGB
    convolution is zero-initialized: with the skip enabled, a fresh model
    is exactly the bicubic upsampler.
    """

    def __init__(self, cfg: ModelConfig, init: Optional[CounterRng] = None):
        cfg.validate()
        init = init or CounterRng(0, "model-init")
        self.cfg = cfg
        c0 = cfg.base_channels
        block_kw = dict(attention=cfg.attention, sparse_cfg=cfg.sparse,
                        use_layernorm=cfg.use_layernorm, use_gdfn=cfg.use_gdfn,
                        dw_activation=cfg.dw_activation, ca_reduction=cfg.ca_reduction,
                        gdfn_expansion=cfg.gdfn_expansion)

        self.stem = Conv2d(3, c0, 3, init)
        if cfg.use_unet:
            widths = [c0 * (2 ** i) for i in range(cfg.unet_levels)]
            self.enc_blocks = [
                [NLCBlock(widths[lvl], init, **block_kw) for _ in range(cfg.blocks_per_level)]
                for lvl in range(cfg.unet_levels - 1)
            ]
            self.down = [Conv2d(widths[lvl], widths[lvl + 1], 3, init, stride=2)
                         for lvl in range(cfg.unet_levels - 1)]
            self.bottleneck = [NLCBlock(widths[-1], init, **block_kw)
                               for _ in range(cfg.blocks_per_level)]
            self.up = [Conv2d(widths[lvl + 1], widths[lvl] * 4, 1, init)
                       for lvl in range(cfg.unet_levels - 1)]
            self.skip_fuse = [Conv2d(widths[lvl] * 2, widths[lvl], 1, init)
                              for lvl in range(cfg.unet_levels - 1)]
            self.dec_blocks = [
                [NLCBlock(widths[lvl], init, **block_kw) for _ in range(cfg.blocks_per_level)]
                for lvl in range(cfg.unet_levels - 1)
            ]
        else:
            depth = cfg.blocks_per_level * cfg.unet_levels
            self.flat_blocks = [NLCBlock(c0, init, **block_kw) for _ in range(depth)]

        self.tail = [Conv2d(c0, c0 * (r * r), 3, init) for r in _tail_stages(cfg.scale)]
        self.to_rgb = Conv2d(c0, 3, 3, init, zero_init=True)

    def forward(self, lr: Tensor) -> Tensor:
        if lr.ndim != 4 or lr.shape[1] != 3:
            raise ShapeError(f"generator expects (N,3,H,W) input, got {lr.shape}")
        cfg = self.cfg
        n, _, h, w = lr.shape
        multiple = 2 ** (cfg.unet_levels - 1) if cfg.use_unet else 1
        pad_h = (-h) % multiple
        pad_w = (-w) % multiple
        x = ops.pad2d_asym(lr, 0, pad_h, 0, pad_w, mode="reflect") if (pad_h or pad_w) else lr

        f = self.stem(x)
        if cfg.use_unet:
            skips = []
            for lvl in range(cfg.unet_levels - 1):
                for block in self.enc_blocks[lvl]:
                    f = block(f)
                skips.append(f)
                f = self.down[lvl](f)
            for block in self.bottleneck:
                f = block(f)
            for lvl in reversed(range(cfg.unet_levels - 1)):
                f = ops.pixel_shuffle(self.up[lvl](f), 2)
                f = self.skip_fuse[lvl](ops.concat_channels([f, skips[lvl]]))
                for block in self.dec_blocks[lvl]:
                    f = block(f)
        else:
            for block in self.flat_blocks:
                f = block(f)

        for conv, r in zip(self.tail, _tail_stages(cfg.scale)):
            f = ops.pixel_shuffle(conv(f), r)
        out = self.to_rgb(f)
        if pad_h or pad_w:
            out = ops.crop2d(out, h * cfg.scale, w * cfg.scale)
        if cfg.use_bicubic_skip:
            out = ops.add(out, ops.bicubic_resize(lr, h * cfg.scale, w * cfg.scale))
        return out


class UnetDiscriminator(Module):
    """Per-pixel realness critic: 3-level U-Net, spectral norm on every
    convolution, leaky-relu slope 0.2, additive skips.
    """

    def __init__(self, init: Optional[CounterRng] = None, base_channels: int = 64):
        init = init or CounterRng(0, "disc-init")
        b = base_channels
        self.conv0 = SNConv2d(3, b, 3, init)
        self.down1 = SNConv2d(b, b * 2, 3, init, stride=2)
        self.down2 = SNConv2d(b * 2, b * 4, 3, init, stride=2)
        self.down3 = SNConv2d(b * 4, b * 8, 3, init, stride=2)
        self.up3 = SNConv2d(b * 8, b * 4, 3, init)
        self.up2 = SNConv2d(b * 4, b * 2, 3, init)
        self.up1 = SNConv2d(b * 2, b, 3, init)
        self.head1 = SNConv2d(b, b, 3, init)
        self.head2 = SNConv2d(b, 1, 3, init)

    def forward(self, img: Tensor) -> Tensor:
        n, _, h, w = img.shape
        pad_h = (-h) % 8
        pad_w = (-w) % 8
        x = ops.pad2d_asym(img, 0, pad_h, 0, pad_w, mode="reflect") if (pad_h or pad_w) else img

        act = lambda t: ops.leaky_relu(t, 0.2)
        x0 = act(self.conv0(x))
        x1 = act(self.down1(x0))
        x2 = act(self.down2(x1))
        x3 = act(self.down3(x2))
        y = ops.add(act(self.up3(ops.upsample_nearest(x3, 2))), x2)
        y = ops.add(act(self.up2(ops.upsample_nearest(y, 2))), x1)
        y = ops.add(act(self.up1(ops.upsample_nearest(y, 2))), x0)
        logits = self.head2(act(self.head1(y)))
        if pad_h or pad_w:
            logits = ops.crop2d(logits, h, w)
        return logits


def build_generator(cfg: ModelConfig, seed: int = 0) -> NLCUnet:
    return NLCUnet(cfg, CounterRng(seed, "model-init"))


def build_discriminator(seed: int = 0, base_channels: int = 64) -> UnetDiscriminator:
    return UnetDiscriminator(CounterRng(seed, "disc-init"), base_channels)


# ---------------------------------------------------------------------------
# checkpoint format
# ---------------------------------------------------------------------------
#
#   magic "NLCU" | version u32 | iteration u64
#   | n_params u32 | entries... | n_opt u32 | entries...
#   entry: name_len u32 | name utf-8 | rank u32 | dims u64[rank]
#          | payload little-endian float32
#
# Values round-trip bit-exactly; optimizer moments use the same encoding.

MAGIC = b"NLCU"
FORMAT_VERSION = 1


class CheckpointError(RuntimeError):
    """Malformed or truncated checkpoint file."""


@dataclass
class Checkpoint:
    version: int
    iteration: int
    params: dict
    optimizer: dict


def _write_entries(fh, entries: dict):
    fh.write(struct.pack("<I", len(entries)))
    for name, arr in entries.items():
        arr = np.ascontiguousarray(arr, dtype="<f4")
        encoded = name.encode("utf-8")
        fh.write(struct.pack("<I", len(encoded)))
        fh.write(encoded)
        fh.write(struct.pack("<I", arr.ndim))
        fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        fh.write(arr.tobytes())


def _read_exact(fh, n: int) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise CheckpointError(f"truncated checkpoint: wanted {n} bytes, got {len(buf)}")
    return buf


def _read_entries(fh) -> dict:
    (count,) = struct.unpack("<I", _read_exact(fh, 4))
    out = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<I", _read_exact(fh, 4))
        name = _read_exact(fh, name_len).decode("utf-8")
        (rank,) = struct.unpack("<I", _read_exact(fh, 4))
        dims = struct.unpack(f"<{rank}Q", _read_exact(fh, 8 * rank)) if rank else ()
        size = int(np.prod(dims)) if dims else 1
        payload = _read_exact(fh, 4 * size)
        out[name] = np.frombuffer(payload, dtype="<f4").reshape(dims).copy()
    return out


def save_checkpoint(path, module: Module, iteration: int, optimizer_state: Optional[dict] = None):
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        fh.write(struct.pack("<Q", iteration))
        _write_entries(fh, module.state_dict())
        _write_entries(fh, optimizer_state or {})


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    with open(path, "rb") as fh:
        magic = _read_exact(fh, 4)
        if magic != MAGIC:
            raise CheckpointError(f"{path}: bad magic {magic!r}")
        (version,) = struct.unpack("<I", _read_exact(fh, 4))
        if version != FORMAT_VERSION:
            raise CheckpointError(f"{path}: unsupported format version {version}")
        (iteration,) = struct.unpack("<Q", _read_exact(fh, 8))
        params = _read_entries(fh)
        optimizer = _read_entries(fh)
    return Checkpoint(version=version, iteration=iteration, params=params, optimizer=optimizer)
