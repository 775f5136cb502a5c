"""Full network: Siamese encoder, cross-modality fusion, decoder, heads.

Inference can gate fusion per image: when the depth-quality probability
falls below a threshold and the two rough modality maps disagree badly,
the fused stream is rebuilt from RGB alone (SELF mode) so junk depth
cannot poison the prediction. Training always runs CROSS, the gate is a
test-time device.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .config import RunConfig
from .decoder import SaliencyDecoder
from .encoder import RoughSaliencyHead, SiameseEncoder
from .fusion import CrossModalityFusion, FusionMode
from .losses import mean_absolute_error, quality_gate
from .nn import Module, make_rng


@dataclasses.dataclass
class ModelOutput:
    final: Tensor       # (B,1,S,S)
    side1: Tensor       # (B,1,S,S) deepest decoder stage
    side2: Tensor       # (B,1,S,S)
    side3: Tensor       # (B,1,S,S)
    t_rgb: Tensor       # (B,1,S,S) rough map from RGB tokens
    t_depth: Tensor     # (B,1,S,S) rough map from depth tokens
    t_fused: Tensor     # (B,1,S,S) rough map from fused tokens
    class_prob: Tensor  # (B,1) depth-quality probability
    modes: tuple        # FusionMode actually used per row

    def maps(self) -> dict:
        return {
            "t_rgb": self.t_rgb,
            "t_depth": self.t_depth,
            "t_fused": self.t_fused,
            "side1": self.side1,
            "side2": self.side2,
            "side3": self.side3,
            "final": self.final,
        }


class SaliencyModel(Module):
    def __init__(self, cfg: RunConfig, rng=None):
        super().__init__()
        self.cfg = cfg
        rng = rng if rng is not None else make_rng(cfg.seed)
        self.encoder = SiameseEncoder(cfg, rng)
        self.fusion = CrossModalityFusion(cfg, rng)
        self.rough_head = RoughSaliencyHead(cfg.embed_dim, rng)
        self.rough_fused_head = RoughSaliencyHead(cfg.cmf_dim, rng)
        self.decoder = SaliencyDecoder(cfg, rng)

    def forward(self, rgb: Tensor, depth: Tensor, mode=FusionMode.CROSS) -> ModelOutput:
        """Run the network; mode None gates per row from depth quality."""
        b = rgb.shape[0]
        s = self.cfg.image_size
        x = ad.concat([rgb, depth], axis=0)
        enc = self.encoder(x)
        grid = enc.grid

        body = (slice(None), slice(1, None), slice(None))
        rgb_tok = ad.take_slice(enc.tokens, (slice(0, b),) + body[1:])
        dep_tok = ad.take_slice(enc.tokens, (slice(b, 2 * b),) + body[1:])

        t_rgb = self.rough_head(rgb_tok, grid, s)
        t_depth = self.rough_head(dep_tok, grid, s)
        depth_rows = ad.take_slice(enc.tokens, (slice(b, 2 * b),))
        class_prob = ad.sigmoid(self.encoder.class_logits(depth_rows))

        modes = self._resolve_modes(mode, b, class_prob, t_rgb, t_depth)
        fused = self._fuse(rgb_tok, dep_tok, modes)

        t_fused = self.rough_fused_head(fused, grid, s)
        side_quarter = ad.take_slice(enc.side_quarter, (slice(0, b),))
        side_eighth = ad.take_slice(enc.side_eighth, (slice(0, b),))
        dec = self.decoder(fused, side_quarter, side_eighth, grid)

        return ModelOutput(
            dec.final, dec.side1, dec.side2, dec.side3,
            t_rgb, t_depth, t_fused, class_prob, tuple(modes),
        )

    def _resolve_modes(self, mode, b, class_prob, t_rgb, t_depth):
        if mode is not None:
            return [mode] * b
        modes = []
        for i in range(b):
            err = mean_absolute_error(t_rgb.data[i, 0], t_depth.data[i, 0])
            modes.append(
                quality_gate(
                    float(class_prob.data[i, 0]),
                    err,
                    self.cfg.gate_prob_threshold,
                    self.cfg.gate_mae_threshold,
                )
            )
        return modes

    def _fuse(self, rgb_tok, dep_tok, modes):
        kinds = set(modes)
        if kinds == {FusionMode.CROSS}:
            return self.fusion(rgb_tok, dep_tok, FusionMode.CROSS)
        if kinds == {FusionMode.SELF}:
            return self.fusion(rgb_tok, dep_tok, FusionMode.SELF)
        cross = self.fusion(rgb_tok, dep_tok, FusionMode.CROSS)
        self_ = self.fusion(rgb_tok, dep_tok, FusionMode.SELF)
        rows = []
        for i, m in enumerate(modes):
            src = cross if m is FusionMode.CROSS else self_
            rows.append(ad.take_slice(src, (slice(i, i + 1),)))
        return ad.concat(rows, axis=0)


def build_model(cfg: RunConfig) -> SaliencyModel:
    return SaliencyModel(cfg, make_rng(cfg.seed))
