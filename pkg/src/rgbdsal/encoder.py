"""Siamese tokens-to-token transformer encoder.

One weight set serves both modalities: RGB rows and depth rows travel
through the same stack as a single batch, rows 0..B-1 holding RGB and
rows B..2B-1 holding the replicated depth map. Progressive soft splits
(7/4/2 then twice 3/2/1) shrink the grid to S/16 while widening tokens,
a linear projection lifts them to the backbone width, and a class token
prepended to every row doubles as the depth-quality readout on depth rows.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from . import autodiff as ad
from .attention import TokenTransformer, TransformerLayer
from .autodiff import ShapeError, Tensor
from .config import RunConfig
from .nn import LayerNorm, Linear, Module, ModuleList, Parameter


def tokens_to_map(tokens: Tensor, grid: int) -> Tensor:
    """(B, grid*grid, C) tokens -> (B, C, grid, grid) feature map."""
    b, n, c = tokens.shape
    if n != grid * grid:
        raise ShapeError(f"token count {n} does not fill a {grid}x{grid} grid")
    return ad.transpose(ad.reshape(tokens, (b, grid, grid, c)), (0, 3, 1, 2))


@dataclasses.dataclass
class EncoderOutput:
    tokens: Tensor        # (2B, N+1, D), class token at index 0, post-norm
    side_quarter: Tensor  # (2B, c, S/4, S/4) early feature map
    side_eighth: Tensor   # (2B, c, S/8, S/8) mid feature map
    grid: int             # top-level token grid side (S/16)


class SiameseEncoder(Module):
    def __init__(self, cfg: RunConfig, rng):
        super().__init__()
        s, c, d = cfg.image_size, cfg.t2t_dim, cfg.embed_dim
        self.image_size = s
        self.grid = s // 16
        self.t2t_dim = c
        self.embed_dim = d
        n_top = self.grid * self.grid

        self.stage1 = TokenTransformer(
            7 * 7 * cfg.in_channels, c, rng, cfg.t2t_heads, cfg.t2t_ffn_ratio
        )
        self.stage2 = TokenTransformer(9 * c, c, rng, cfg.t2t_heads, cfg.t2t_ffn_ratio)
        self.project = Linear(9 * c, d, rng)

        self.cls_token = Parameter(np.zeros((1, 1, d)))
        self.pos_embed = Parameter(np.zeros((1, n_top + 1, d)))
        self.blocks = ModuleList(
            [TransformerLayer(d, cfg.heads, cfg.ffn_ratio, rng) for _ in range(cfg.depth)]
        )
        self.norm = LayerNorm(d)
        self.class_head = Linear(d, 1, rng)

    def forward(self, x: Tensor) -> EncoderOutput:
        b2, ch, h, w = x.shape
        if h != self.image_size or w != self.image_size:
            raise ShapeError(f"input {h}x{w} does not match configured size {self.image_size}")
        g4, g8 = self.image_size // 4, self.image_size // 8

        t = ad.unfold(x, kernel=7, stride=4, padding=2)
        t = self.stage1(t)
        side_quarter = tokens_to_map(t, g4)

        t = ad.unfold(side_quarter, kernel=3, stride=2, padding=1)
        t = self.stage2(t)
        side_eighth = tokens_to_map(t, g8)

        t = ad.unfold(side_eighth, kernel=3, stride=2, padding=1)
        t = self.project(t)

        cls = ad.expand(self.cls_token, 0, b2)
        t = ad.concat([cls, t], axis=1)
        t = ad.add(t, self.pos_embed)
        for block in self.blocks:
            t = block(t)
        t = self.norm(t)
        return EncoderOutput(t, side_quarter, side_eighth, self.grid)

    def class_logits(self, tokens: Tensor) -> Tensor:
        """(rows, N+1, D) -> (rows, 1) logit from each row's class token."""
        cls = ad.take_slice(tokens, (slice(None), slice(0, 1), slice(None)))
        return ad.reshape(self.class_head(cls), (tokens.shape[0], 1))


class RoughSaliencyHead(Module):
    """Per-token linear scorer refolded to the grid and resized to a map.

    Tokens must arrive without the class token; has_cls=True strips it
    first and complains if there is nothing to strip.
    """

    def __init__(self, dim: int, rng):
        super().__init__()
        self.score = Linear(dim, 1, rng)

    def forward(self, tokens: Tensor, grid: int, out_size: int, has_cls: bool = False) -> Tensor:
        b, n, _ = tokens.shape
        if has_cls:
            if n == grid * grid:
                raise ShapeError(
                    "has_cls is set but the token count already matches the grid"
                )
            tokens = ad.take_slice(tokens, (slice(None), slice(1, None), slice(None)))
            n -= 1
        if n != grid * grid:
            raise ShapeError(f"token count {n} does not fill a {grid}x{grid} grid")
        logits = tokens_to_map(self.score(tokens), grid)
        return ad.sigmoid(ad.upsample_bilinear(logits, out_size, out_size))
