"""Convolutional decoder with two token-stage skips and adaptive map fusion.

The fused tokens refold to a S/16 map and climb back to S/2 through
three upsample-and-convolve blocks; the two tokenization side maps join
at matching scales through 1x1 projections. A spatial attention step then
mixes the three decoded scales into the final full-resolution map. The
attention step can be switched off, in which case the deepest decoded
map alone drives the prediction (ablation path).
"""

from __future__ import annotations

import dataclasses

from . import autodiff as ad
from .autodiff import Tensor
from .config import RunConfig
from .encoder import tokens_to_map
from .nn import BatchNorm2d, Conv2d, Module


class ConvBlock(Module):
    """Upsample x2, then two 3x3 conv + BN + ReLU stages."""

    def __init__(self, c_in: int, c_out: int, rng):
        super().__init__()
        self.conv1 = Conv2d(c_in, c_out, 3, rng, padding=1)
        self.bn1 = BatchNorm2d(c_out)
        self.conv2 = Conv2d(c_out, c_out, 3, rng, padding=1)
        self.bn2 = BatchNorm2d(c_out)

    def forward(self, x: Tensor) -> Tensor:
        _, _, h, w = x.shape
        x = ad.upsample_bilinear(x, 2 * h, 2 * w)
        x = ad.relu(self.bn1(self.conv1(x)))
        x = ad.relu(self.bn2(self.conv2(x)))
        return x


class AdaptiveFusion(Module):
    """Spatial attention over the concatenated multi-scale maps.

    nu   = sigmoid(conv1x1([channel-max; channel-mean]))
    theta = relu(bn(conv3x3(stack)))
    eta  = relu(bn(conv3x3(nu * theta)))
    """

    def __init__(self, c_in: int, c_out: int, rng):
        super().__init__()
        self.nu_conv = Conv2d(2, 1, 1, rng)
        self.theta_conv = Conv2d(c_in, c_out, 3, rng, padding=1)
        self.theta_bn = BatchNorm2d(c_out)
        self.eta_conv = Conv2d(c_out, c_out, 3, rng, padding=1)
        self.eta_bn = BatchNorm2d(c_out)

    def spatial_weight(self, stack: Tensor) -> Tensor:
        mx = ad.max_along(stack, axis=1, keepdims=True)
        av = ad.mean(stack, axis=1, keepdims=True)
        return ad.sigmoid(self.nu_conv(ad.concat([mx, av], axis=1)))

    def forward(self, stack: Tensor) -> Tensor:
        nu = self.spatial_weight(stack)
        theta = ad.relu(self.theta_bn(self.theta_conv(stack)))
        gated = ad.mul(ad.expand(nu, 1, theta.shape[1]), theta)
        return ad.relu(self.eta_bn(self.eta_conv(gated)))


@dataclasses.dataclass
class DecoderOutput:
    final: Tensor        # (B, 1, S, S) fused prediction
    side1: Tensor        # (B, 1, S, S) from the deepest decoded map (S/8)
    side2: Tensor        # (B, 1, S, S) from the middle decoded map (S/4)
    side3: Tensor        # (B, 1, S, S) from the shallowest decoded map (S/2)


class SaliencyDecoder(Module):
    def __init__(self, cfg: RunConfig, rng):
        super().__init__()
        dd, c = cfg.decoder_dim, cfg.t2t_dim
        self.image_size = cfg.image_size
        self.adaptive = cfg.adaptive_fusion
        self.block1 = ConvBlock(cfg.cmf_dim, dd, rng)
        self.block2 = ConvBlock(dd, dd, rng)
        self.block3 = ConvBlock(dd, dd, rng)
        self.skip_eighth = Conv2d(c, dd, 1, rng)
        self.skip_quarter = Conv2d(c, dd, 1, rng)
        self.fusion = AdaptiveFusion(3 * dd, dd, rng)
        self.head1 = Conv2d(dd, 1, 3, rng, padding=1)
        self.head2 = Conv2d(dd, 1, 3, rng, padding=1)
        self.head3 = Conv2d(dd, 1, 3, rng, padding=1)
        self.head_final = Conv2d(dd, 1, 3, rng, padding=1)

    def _to_full(self, logits: Tensor) -> Tensor:
        return ad.sigmoid(
            ad.upsample_bilinear(logits, self.image_size, self.image_size)
        )

    def forward(self, fused_tokens: Tensor, side_quarter: Tensor,
                side_eighth: Tensor, grid: int) -> DecoderOutput:
        s = self.image_size
        base = tokens_to_map(fused_tokens, grid)        # (B, cmf, S/16, S/16)

        d1 = self.block1(base)                          # S/8
        d1 = ad.add(d1, self.skip_eighth(side_eighth))
        d2 = self.block2(d1)                            # S/4
        d2 = ad.add(d2, self.skip_quarter(side_quarter))
        d3 = self.block3(d2)                            # S/2

        side1 = self._to_full(self.head1(d1))
        side2 = self._to_full(self.head2(d2))
        side3 = self._to_full(self.head3(d3))

        if self.adaptive:
            half = s // 2
            stack = ad.concat(
                [
                    ad.upsample_bilinear(d1, half, half),
                    ad.upsample_bilinear(d2, half, half),
                    d3,
                ],
                axis=1,
            )
            final = self._to_full(self.head_final(self.fusion(stack)))
        else:
            final = self._to_full(self.head_final(d3))
        return DecoderOutput(final, side1, side2, side3)
