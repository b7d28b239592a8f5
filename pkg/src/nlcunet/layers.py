"""Parameter containers and basic learnable layers."""

from __future__ import annotations

import math
from typing import Iterator, Optional, Tuple

import numpy as np

from . import ops
from .rng import CounterRng
from .tensor import Tensor, grad_enabled


class Module:
    """Base class giving named-parameter traversal over attributes.

    Attributes that are Tensors, Modules, or lists/tuples of Modules are
    walked in insertion order, which fixes a deterministic naming scheme
    for checkpoints. Tensors with ``requires_grad`` are trainable
    parameters; plain Tensors (e.g. power-iteration vectors) are buffers
    that persist in checkpoints but receive no gradients.
    """

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    @staticmethod
    def _walk(value, full: str):
        if isinstance(value, Tensor):
            yield full, value
        elif isinstance(value, Module):
            yield from value.named_state(f"{full}.")
        elif isinstance(value, (list, tuple)):
            for i, item in enumerate(value):
                yield from Module._walk(item, f"{full}.{i}")

    def named_state(self, prefix: str = "") -> Iterator[Tuple[str, Tensor]]:
        for name, value in vars(self).items():
            yield from self._walk(value, f"{prefix}{name}")

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Tensor]]:
        for name, tensor in self.named_state(prefix):
            if tensor.requires_grad:
                yield name, tensor

    def parameters(self) -> list:
        return [t for _, t in self.named_parameters()]

    def param_count(self) -> int:
        return sum(t.data.size for _, t in self.named_parameters())

    def zero_grad(self):
        for t in self.parameters():
            t.grad = None

    def astype(self, dtype) -> "Module":
        for _, t in self.named_state():
            t.data = t.data.astype(dtype)
        return self

    def state_dict(self) -> dict:
        return {name: t.data.copy() for name, t in self.named_state()}

    def load_state_dict(self, state: dict):
        own = dict(self.named_state())
        missing = set(own) - set(state)
        extra = set(state) - set(own)
        if missing or extra:
            raise KeyError(
                f"state mismatch: missing={sorted(missing)} unexpected={sorted(extra)}")
        for name, tensor in own.items():
            arr = np.asarray(state[name])
            if arr.shape != tensor.data.shape:
                raise ValueError(
                    f"{name}: shape {arr.shape} does not match {tensor.data.shape}")
            tensor.data = arr.astype(tensor.data.dtype).copy()


class Identity(Module):
    def forward(self, x: Tensor) -> Tensor:
        return x


def param(shape, init: CounterRng, std: Optional[float] = None, fill: Optional[float] = None) -> Tensor:
    """Trainable tensor: He-style normal by default, or constant fill."""
    if fill is not None:
        data = np.full(shape, fill, dtype=np.float32)
    else:
        if std is None:
            fan_in = int(np.prod(shape[1:])) if len(shape) > 1 else int(shape[0])
            std = math.sqrt(2.0 / max(fan_in, 1))
        data = init.normal(size=shape, std=std).astype(np.float32)
    return Tensor(data, requires_grad=True)


class Conv2d(Module):
    def __init__(self, in_ch: int, out_ch: int, kernel: int, init: CounterRng,
                 stride: int = 1, padding: Optional[int] = None,
                 pad_mode: str = "reflect", bias: bool = True,
                 zero_init: bool = False):
        self.stride = stride
        self.padding = kernel // 2 if padding is None else padding
        self.pad_mode = pad_mode
        if zero_init:
            self.weight = param((out_ch, in_ch, kernel, kernel), init, fill=0.0)
        else:
            self.weight = param((out_ch, in_ch, kernel, kernel), init)
        self.bias = param((out_ch,), init, fill=0.0) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return ops.conv2d(x, self.weight, self.bias, stride=self.stride,
                          padding=self.padding, pad_mode=self.pad_mode)


class DepthwiseConv2d(Module):
    def __init__(self, channels: int, kernel: int, init: CounterRng,
                 pad_mode: str = "reflect"):
        self.padding = kernel // 2
        self.pad_mode = pad_mode
        self.weight = param((channels, 1, kernel, kernel), init,
                            std=math.sqrt(2.0 / (kernel * kernel)))

    def forward(self, x: Tensor) -> Tensor:
        return ops.depthwise_conv2d(x, self.weight, padding=self.padding,
                                    pad_mode=self.pad_mode)


class LayerNormChannels(Module):
    def __init__(self, channels: int, eps: float = 1e-6):
        self.eps = eps
        self.gamma = Tensor(np.ones(channels, dtype=np.float32), requires_grad=True)
        self.beta = Tensor(np.zeros(channels, dtype=np.float32), requires_grad=True)

    def forward(self, x: Tensor) -> Tensor:
        return ops.layernorm_channels(x, self.gamma, self.beta, self.eps)


def spectral_normalize(weight: Tensor, u: Tensor, power_iters: int = 1,
                       update: bool = True, eps: float = 1e-12) -> Tensor:
    """Divide ``weight`` by its power-iteration spectral-norm estimate.

    ``u`` is the persistent left singular vector estimate, refreshed in
    place (outside the gradient graph) when ``update`` is set. The
    division itself is differentiable, so gradients see the normalized
    weight exactly as the forward pass does. A zero weight floors the
    estimate at ``eps`` and maps to zeros.
    """
    o = weight.data.shape[0]
    w2d = weight.data.reshape(o, -1)
    uv = u.data
    v = None
    for _ in range(max(power_iters, 1)):
        v = w2d.T @ uv
        v = v / (np.linalg.norm(v) + eps)
        uv = w2d @ v
        uv = uv / (np.linalg.norm(uv) + eps)
    if update:
        u.data = uv.astype(u.data.dtype)

    flat = ops.reshape(weight, (o, -1))
    vt = Tensor(v.reshape(-1, 1).astype(weight.data.dtype))
    ut = Tensor(uv.reshape(1, o).astype(weight.data.dtype))
    sigma = ops.matmul(ut, ops.matmul(flat, vt))
    sigma = ops.clamp_min(sigma, eps)
    sigma = ops.reshape(sigma, (1,) * weight.data.ndim)
    return ops.div(weight, sigma)


class SNConv2d(Module):
    """Convolution whose weight is spectrally normalized at use time."""

    def __init__(self, in_ch: int, out_ch: int, kernel: int, init: CounterRng,
                 stride: int = 1, pad_mode: str = "zero", bias: bool = True):
        self.stride = stride
        self.padding = kernel // 2
        self.pad_mode = pad_mode
        self.weight = param((out_ch, in_ch, kernel, kernel), init)
        self.bias = param((out_ch,), init, fill=0.0) if bias else None
        u0 = init.normal(size=(out_ch,))
        u0 = u0 / (np.linalg.norm(u0) + 1e-12)
        self.u = Tensor(u0.astype(np.float32))

    def forward(self, x: Tensor) -> Tensor:
        w = spectral_normalize(self.weight, self.u, update=grad_enabled())
        return ops.conv2d(x, w, self.bias, stride=self.stride,
                          padding=self.padding, pad_mode=self.pad_mode)
