"""Attention primitives and transformer layers.

All layers are pre-norm residual blocks. Scores are scaled by the inverse
square root of the actual per-head key width, whatever the input width of
the projection was.
"""

from __future__ import annotations

import math

from . import autodiff as ad
from .autodiff import ShapeError, Tensor
from .nn import Linear, LayerNorm, Mlp, Module


def attention_weights(q: Tensor, k: Tensor) -> Tensor:
    """Row-stochastic attention matrix for (B, h, N, dk) queries and keys."""
    dk = q.shape[-1]
    scores = ad.scale(ad.matmul(q, ad.swap_last_two(k)), 1.0 / math.sqrt(dk))
    return ad.softmax(scores, axis=-1)


def scaled_dot_attention(q: Tensor, k: Tensor, v: Tensor) -> Tensor:
    """softmax(q kT / sqrt(dk)) v over the last two axes."""
    if q.shape[-1] != k.shape[-1]:
        raise ShapeError(f"query width {q.shape} != key width {k.shape}")
    if k.shape[-2] != v.shape[-2]:
        raise ShapeError(f"key count {k.shape} != value count {v.shape}")
    return ad.matmul(attention_weights(q, k), v)


def split_heads(x: Tensor, heads: int) -> Tensor:
    """(B, N, D) -> (B, h, N, D/h)."""
    b, n, d = x.shape
    if d % heads:
        raise ShapeError(f"width {d} not divisible into {heads} heads")
    return ad.transpose(ad.reshape(x, (b, n, heads, d // heads)), (0, 2, 1, 3))


def merge_heads(x: Tensor) -> Tensor:
    """(B, h, N, dk) -> (B, N, h*dk)."""
    b, h, n, dk = x.shape
    return ad.reshape(ad.transpose(x, (0, 2, 1, 3)), (b, n, h * dk))


class MultiHeadAttention(Module):
    """Projected multi-head attention with an output projection."""

    def __init__(self, d_model: int, heads: int, rng):
        super().__init__()
        if d_model % heads:
            raise ShapeError(f"d_model {d_model} not divisible by heads {heads}")
        self.heads = heads
        self.wq = Linear(d_model, d_model, rng)
        self.wk = Linear(d_model, d_model, rng)
        self.wv = Linear(d_model, d_model, rng)
        self.wo = Linear(d_model, d_model, rng)

    def forward(self, q_src: Tensor, kv_src: Tensor) -> Tensor:
        q = split_heads(self.wq(q_src), self.heads)
        k = split_heads(self.wk(kv_src), self.heads)
        v = split_heads(self.wv(kv_src), self.heads)
        return self.wo(merge_heads(scaled_dot_attention(q, k, v)))


class TransformerLayer(Module):
    """Standard encoder block: x + MHA(LN(x)), then x + MLP(LN(x))."""

    def __init__(self, d_model: int, heads: int, ffn_ratio: int, rng):
        super().__init__()
        self.norm1 = LayerNorm(d_model)
        self.attn = MultiHeadAttention(d_model, heads, rng)
        self.norm2 = LayerNorm(d_model)
        self.mlp = Mlp(d_model, d_model * ffn_ratio, rng)

    def forward(self, x: Tensor) -> Tensor:
        h = self.norm1(x)
        x = ad.add(x, self.attn(h, h))
        x = ad.add(x, self.mlp(self.norm2(x)))
        return x


class InteractiveLayer(Module):
    """Cross-stream attention block in the bare q/k/v form (no output projection).

    Queries come from stream x, keys and values from stream y; the result
    feeds x's residual path. One module instance serves both directions,
    so the two streams share every parameter.
    """

    def __init__(self, d_model: int, heads: int, ffn_ratio: int, rng):
        super().__init__()
        if d_model % heads:
            raise ShapeError(f"d_model {d_model} not divisible by heads {heads}")
        self.heads = heads
        self.norm1 = LayerNorm(d_model)
        self.wq = Linear(d_model, d_model, rng)
        self.wk = Linear(d_model, d_model, rng)
        self.wv = Linear(d_model, d_model, rng)
        self.norm2 = LayerNorm(d_model)
        self.mlp = Mlp(d_model, d_model * ffn_ratio, rng)

    def forward(self, x: Tensor, y: Tensor) -> Tensor:
        nx = self.norm1(x)
        ny = self.norm1(y)
        q = split_heads(self.wq(nx), self.heads)
        k = split_heads(self.wk(ny), self.heads)
        v = split_heads(self.wv(ny), self.heads)
        h = ad.add(x, merge_heads(scaled_dot_attention(q, k, v)))
        return ad.add(h, self.mlp(self.norm2(h)))


class TokenTransformer(Module):
    """Width-reducing transformer used between soft splits.

    The input width d_in exceeds the working width d_out, so the residual
    for the attention half rides on the value projection rather than the
    raw input. Feed-forward expansion stays at ratio 1 to keep this stage
    cheap relative to the backbone.
    """

    def __init__(self, d_in: int, d_out: int, rng, heads: int = 1, ffn_ratio: int = 1):
        super().__init__()
        self.heads = heads
        self.d_out = d_out
        self.norm1 = LayerNorm(d_in)
        self.qkv = Linear(d_in, 3 * d_out, rng)
        self.proj = Linear(d_out, d_out, rng)
        self.norm2 = LayerNorm(d_out)
        self.mlp = Mlp(d_out, d_out * ffn_ratio, rng)

    def forward(self, x: Tensor) -> Tensor:
        b, n, _ = x.shape
        qkv = self.qkv(self.norm1(x))
        q = split_heads(ad.take_slice(qkv, (slice(None), slice(None), slice(0, self.d_out))), self.heads)
        k = split_heads(
            ad.take_slice(qkv, (slice(None), slice(None), slice(self.d_out, 2 * self.d_out))),
            self.heads,
        )
        v = split_heads(
            ad.take_slice(qkv, (slice(None), slice(None), slice(2 * self.d_out, 3 * self.d_out))),
            self.heads,
        )
        attended = merge_heads(scaled_dot_attention(q, k, v))
        y = ad.add(merge_heads(v), self.proj(attended))
        return ad.add(y, self.mlp(self.norm2(y)))
