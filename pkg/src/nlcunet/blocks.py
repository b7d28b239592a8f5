"""Building blocks: channel attention, gated depth-wise FFN, dense and
LSH-bucketed non-local attention, and the two-branch block combining them.

All blocks are shape-preserving residual maps over NCHW feature tensors
and pure functions of (input, parameters).
"""

from __future__ import annotations

import math
from typing import Optional

import numpy as np

from . import ops
from .config import SparseAttentionConfig
from .layers import Conv2d, DepthwiseConv2d, Identity, LayerNormChannels, Module, param
from .rng import CounterRng
from .tensor import ShapeError, Tensor

DENSE_TOKEN_LIMIT = 4096


class ChannelAttention(Module):
    """Squeeze-excite gate: each channel is scaled by one value in (0,1)."""

    def __init__(self, channels: int, init: CounterRng, reduction: int = 16):
        hidden = max(1, channels // reduction)
        self.w_reduce = param((hidden, channels, 1, 1), init, std=math.sqrt(2.0 / channels))
        self.w_expand = param((channels, hidden, 1, 1), init, std=math.sqrt(2.0 / hidden))

    def forward(self, x: Tensor) -> Tensor:
        s = ops.global_avg_pool(x)
        s = ops.relu(ops.conv2d(s, self.w_reduce))
        s = ops.sigmoid(ops.conv2d(s, self.w_expand))
        return ops.mul(x, s)


class GatedDConvFFN(Module):
    """Gated depth-wise-conv feed-forward block (residual).

    x + Wp( gelu(DW(X1)) * DW(X2) ) with [X1, X2] = chunk(We . LN(x)).
    Acts as a learned nonlinearity; zero output projection makes it the
    identity.
    """

    def __init__(self, channels: int, init: CounterRng, expansion: float = 2.0):
        hidden = int(round(expansion * channels))
        self.ln = LayerNormChannels(channels)
        self.w_expand = param((2 * hidden, channels, 1, 1), init, std=math.sqrt(2.0 / channels))
        self.dw_gate = DepthwiseConv2d(hidden, 3, init)
        self.dw_value = DepthwiseConv2d(hidden, 3, init)
        self.w_project = param((channels, hidden, 1, 1), init, std=math.sqrt(2.0 / hidden))

    def forward(self, x: Tensor) -> Tensor:
        h = ops.conv2d(self.ln(x), self.w_expand)
        x1, x2 = ops.chunk_channels(h, 2)
        gated = ops.mul(ops.gelu(self.dw_gate(x1)), self.dw_value(x2))
        return ops.add(x, ops.conv2d(gated, self.w_project))


class NonLocalAttention(Module):
    """Dense attention over all spatial positions (residual).

    Every output location becomes a convex combination of value vectors;
    quadratic in token count, so inputs are capped at
    ``DENSE_TOKEN_LIMIT`` tokens.
    """

    def __init__(self, channels: int, init: CounterRng):
        self.channels = channels
        std = 1.0 / math.sqrt(channels)
        self.wq = param((channels, channels), init, std=std)
        self.wk = param((channels, channels), init, std=std)
        self.wv = param((channels, channels), init, std=std)
        self.wout = param((channels, channels), init, std=std)

    def _tokens(self, x: Tensor):
        n, c, h, w = x.shape
        flat = ops.reshape(x, (n, c, h * w))
        return ops.swap_last2(flat)  # (N, HW, C)

    def _untokens(self, tokens: Tensor, shape):
        n, c, h, w = shape
        return ops.reshape(ops.swap_last2(tokens), (n, c, h, w))

    def attention_matrix(self, x: Tensor) -> np.ndarray:
        """(N, HW, HW) softmax weights; rows are convex combinations."""
        t = self._tokens(x)
        q = ops.matmul(t, self.wq)
        k = ops.matmul(t, self.wk)
        scores = ops.mul(ops.matmul(q, ops.swap_last2(k)),
                         Tensor(np.asarray(1.0 / math.sqrt(self.channels), dtype=x.dtype)))
        return ops.softmax_lastdim(scores).data

    def forward(self, x: Tensor) -> Tensor:
        n, c, h, w = x.shape
        if h * w > DENSE_TOKEN_LIMIT:
            raise ShapeError(
                f"dense non-local attention over {h * w} tokens exceeds the "
                f"{DENSE_TOKEN_LIMIT}-token limit; use the sparse variant")
        t = self._tokens(x)
        q = ops.matmul(t, self.wq)
        k = ops.matmul(t, self.wk)
        v = ops.matmul(t, self.wv)
        scores = ops.mul(ops.matmul(q, ops.swap_last2(k)),
                         Tensor(np.asarray(1.0 / math.sqrt(c), dtype=x.dtype)))
        att = ops.softmax_lastdim(scores)
        ctx = ops.matmul(att, v)
        out = ops.matmul(ctx, self.wout)
        return ops.add(x, self._untokens(out, x.shape))


class SparseNonLocalAttention(NonLocalAttention):
    """Non-local attention restricted to LSH buckets of similar tokens.

    Tokens are bucketed by the argmax of ``bucket_count`` random unit
    projections of the unit-normalized query; dense attention runs inside
    each bucket only. With one bucket this degenerates exactly to
    :class:`NonLocalAttention`. Multiple hash rounds average their
    contexts.
    """

    def __init__(self, channels: int, init: CounterRng,
                 cfg: Optional[SparseAttentionConfig] = None):
        super().__init__(channels, init)
        self.cfg = cfg or SparseAttentionConfig()

    def projections(self, round_idx: int, dtype=np.float64) -> np.ndarray:
        """Unit projection vectors for one hash round (seed-determined)."""
        rng = CounterRng(self.cfg.rng_seed, "lsh-round", round_idx)
        p = rng.normal(size=(self.cfg.bucket_count, self.channels))
        p /= np.linalg.norm(p, axis=1, keepdims=True) + 1e-12
        return p.astype(dtype)

    def bucket_assignments(self, q: np.ndarray, round_idx: int) -> np.ndarray:
        """Bucket id per token for query array of shape (N, T, C)."""
        if self.cfg.bucket_count == 1:
            return np.zeros(q.shape[:2], dtype=np.int64)
        norm = np.linalg.norm(q, axis=-1, keepdims=True) + 1e-12
        qn = q / norm
        scores = qn @ self.projections(round_idx, q.dtype).T
        return scores.argmax(axis=-1).astype(np.int64)

    def forward(self, x: Tensor, stats: Optional[dict] = None) -> Tensor:
        n, c, h, w = x.shape
        t = self._tokens(x)
        q = ops.matmul(t, self.wq)
        k = ops.matmul(t, self.wk)
        v = ops.matmul(t, self.wv)
        scale = Tensor(np.asarray(1.0 / math.sqrt(c), dtype=x.dtype))
        tokens = h * w

        qf = ops.reshape(q, (n * tokens, c))
        kf = ops.reshape(k, (n * tokens, c))
        vf = ops.reshape(v, (n * tokens, c))

        round_ctx = []
        for rnd in range(self.cfg.num_hash_rounds):
            buckets = self.bucket_assignments(q.data, rnd)  # (N, T)
            # fold the batch index in so buckets never span batch items
            global_ids = (np.arange(n)[:, None] * self.cfg.bucket_count + buckets).reshape(-1)
            order = np.argsort(global_ids, kind="stable")
            bounds = np.flatnonzero(np.diff(global_ids[order])) + 1
            groups = np.split(order, bounds)
            pieces = []
            for idx in groups:
                qb = ops.take_rows(qf, idx)
                kb = ops.take_rows(kf, idx)
                vb = ops.take_rows(vf, idx)
                att = ops.softmax_lastdim(ops.mul(ops.matmul(qb, ops.swap_last2(kb)), scale))
                pieces.append(ops.matmul(att, vb))
                if stats is not None:
                    stats["attended_pairs"] = stats.get("attended_pairs", 0) + len(idx) ** 2
            merged = ops.concat_rows(pieces)
            inverse = np.argsort(order, kind="stable")
            round_ctx.append(ops.take_rows(merged, inverse))

        ctx = round_ctx[0]
        for extra in round_ctx[1:]:
            ctx = ops.add(ctx, extra)
        if len(round_ctx) > 1:
            ctx = ops.mul(ctx, Tensor(np.asarray(1.0 / len(round_ctx), dtype=x.dtype)))

        out = ops.matmul(ops.reshape(ctx, (n, tokens, c)), self.wout)
        return ops.add(x, self._untokens(out, x.shape))


class NLCBlock(Module):
    """Two-branch block: non-local attention alongside stacked depth-wise
    convolutions, fused 1x1, gated by channel attention, residual, then an
    optional gated FFN.
    """

    def __init__(self, channels: int, init: CounterRng, attention: str = "sparse",
                 sparse_cfg: Optional[SparseAttentionConfig] = None,
                 use_layernorm: bool = True, use_gdfn: bool = True,
                 dw_activation: str = "none", ca_reduction: int = 16,
                 gdfn_expansion: float = 2.0):
        self.ln = LayerNormChannels(channels) if use_layernorm else Identity()
        if attention == "sparse":
            self.attn = SparseNonLocalAttention(channels, init, sparse_cfg)
        elif attention == "dense":
            self.attn = NonLocalAttention(channels, init)
        else:
            raise ValueError(f"unknown attention variant {attention!r}")
        self.dw1 = DepthwiseConv2d(channels, 3, init)
        self.dw2 = DepthwiseConv2d(channels, 3, init)
        self.dw_activation = dw_activation
        self.fuse = Conv2d(2 * channels, channels, 1, init, bias=False)
        self.ca = ChannelAttention(channels, init, reduction=ca_reduction)
        self.ffn = GatedDConvFFN(channels, init, gdfn_expansion) if use_gdfn else None

    def forward(self, x: Tensor) -> Tensor:
        z = self.ln(x)
        branch_a = self.attn(z)
        mid = self.dw1(z)
        if self.dw_activation == "gelu":
            mid = ops.gelu(mid)
        branch_b = self.dw2(mid)
        fused = self.fuse(ops.concat_channels([branch_a, branch_b]))
        y = ops.add(self.ca(fused), x)
        if self.ffn is not None:
            y = self.ffn(y)
        return y
