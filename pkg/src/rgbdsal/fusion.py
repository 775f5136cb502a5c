"""Cross-modality token fusion with a self-fusion fallback.

CROSS mode lets each modality attend into the other through a stack of
shared cross-stream layers, merges the two streams by addition, then
refines with plain transformer layers. Because the cross-stream layers
share all parameters between directions and the merge is commutative,
swapping the two inputs leaves the output bitwise unchanged.

SELF mode feeds the RGB stream in twice, so unreliable depth never
touches the fused representation; it reuses the identical weights.
"""

from __future__ import annotations

import enum

from . import autodiff as ad
from .attention import InteractiveLayer, TransformerLayer
from .autodiff import Tensor
from .config import RunConfig
from .nn import Linear, Module, ModuleList


class FusionMode(enum.Enum):
    CROSS = "cross"
    SELF = "self"


class CrossModalityFusion(Module):
    def __init__(self, cfg: RunConfig, rng):
        super().__init__()
        self.project = Linear(cfg.embed_dim, cfg.cmf_dim, rng)
        self.interactive = ModuleList(
            [
                InteractiveLayer(cfg.cmf_dim, cfg.cmf_heads, cfg.cmf_ffn_ratio, rng)
                for _ in range(cfg.cmf_interactive_layers)
            ]
        )
        self.tail = ModuleList(
            [
                TransformerLayer(cfg.cmf_dim, cfg.cmf_heads, cfg.cmf_ffn_ratio, rng)
                for _ in range(cfg.cmf_tail_layers)
            ]
        )

    def forward(self, rgb_tokens: Tensor, depth_tokens: Tensor,
                mode: FusionMode = FusionMode.CROSS) -> Tensor:
        if mode is FusionMode.SELF:
            depth_tokens = rgb_tokens
        a = self.project(rgb_tokens)
        b = self.project(depth_tokens)
        for layer in self.interactive:
            a, b = layer(a, b), layer(b, a)
        fused = ad.add(a, b)
        for layer in self.tail:
            fused = layer(fused)
        return fused
