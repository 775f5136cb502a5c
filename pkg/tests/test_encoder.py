"""Encoder: token geometry, Siamese batch behavior, heads."""

import numpy as np
import pytest

import rgbdsal.autodiff as ad
from rgbdsal.autodiff import ShapeError, Tensor
from rgbdsal.config import RunConfig, desk_config
from rgbdsal.encoder import RoughSaliencyHead, SiameseEncoder, tokens_to_map
from rgbdsal.nn import make_rng


def test_tokens_to_map_layout():
    t = np.arange(2 * 4 * 3, dtype=np.float64).reshape(1, 8, 3)
    with pytest.raises(ShapeError):
        tokens_to_map(Tensor(t), 3)
    t = np.arange(4 * 3, dtype=np.float64).reshape(1, 4, 3)
    m = tokens_to_map(Tensor(t), 2)
    assert m.data.shape == (1, 3, 2, 2)
    # token i lands at (i // grid, i % grid), channels split out
    assert np.array_equal(m.data[0, :, 0, 1], t[0, 1])
    assert np.array_equal(m.data[0, :, 1, 0], t[0, 2])


def test_stage_shapes_at_paper_width():
    cfg = RunConfig(image_size=64).validate()  # full widths, small image
    enc = SiameseEncoder(cfg, make_rng(0))
    x = Tensor(np.random.default_rng(0).standard_normal((4, 3, 64, 64)))
    out = enc(x)
    assert out.tokens.data.shape == (4, 17, 384)
    body = out.tokens.data[:, 1:, :]
    assert body.shape == (4, 16, 384)
    assert out.side_quarter.data.shape == (4, 64, 16, 16)
    assert out.side_eighth.data.shape == (4, 64, 8, 8)
    cls = out.tokens.data[:, 0, :]
    assert cls.shape == (4, 384)
    assert out.grid == 4


def test_class_token_and_positions_start_at_zero():
    enc = SiameseEncoder(desk_config(), make_rng(0))
    assert not enc.cls_token.data.any()
    assert not enc.pos_embed.data.any()


def test_batch_split_equivalence(rng):
    cfg = desk_config()
    enc = SiameseEncoder(cfg, make_rng(3))
    a = rng.standard_normal((2, 3, 64, 64))
    b = rng.standard_normal((2, 3, 64, 64))
    joint = enc(Tensor(np.concatenate([a, b], axis=0)))
    part_a = enc(Tensor(a))
    part_b = enc(Tensor(b))
    for field in ("tokens", "side_quarter", "side_eighth"):
        whole = getattr(joint, field).data
        merged = np.concatenate(
            [getattr(part_a, field).data, getattr(part_b, field).data], axis=0
        )
        assert np.max(np.abs(whole - merged)) < 1e-10, field


def test_rejects_wrong_input_size(rng):
    enc = SiameseEncoder(desk_config(), make_rng(0))
    with pytest.raises(ShapeError):
        enc(Tensor(rng.standard_normal((2, 3, 48, 48))))


def test_class_logit_probabilities(rng):
    cfg = desk_config()
    enc = SiameseEncoder(cfg, make_rng(1))
    x = Tensor(rng.standard_normal((2, 3, 64, 64)))
    out = enc(x)
    enc.class_head.weight.data[...] = 0.0
    enc.class_head.bias.data[...] = 0.0
    prob = ad.sigmoid(enc.class_logits(out.tokens))
    assert np.allclose(prob.data, 0.5, atol=1e-15)
    enc.class_head.bias.data[...] = 3.0
    prob = ad.sigmoid(enc.class_logits(out.tokens))
    assert np.allclose(prob.data, 0.9526, atol=1e-4)


# ---------------------------------------------------------------------------
# rough saliency head


def test_rough_head_zero_weights_give_half(rng):
    head = RoughSaliencyHead(8, make_rng(0))
    head.score.weight.data[...] = 0.0
    head.score.bias.data[...] = 0.0
    tokens = Tensor(rng.standard_normal((2, 16, 8)))
    out = head(tokens, 4, 64)
    assert out.data.shape == (2, 1, 64, 64)
    assert np.all(out.data == 0.5)


def test_rough_head_impulse_locality(rng):
    head = RoughSaliencyHead(4, make_rng(0))
    tokens = np.zeros((1, 16, 4))
    tokens[0, 5] = 10.0  # token 5 sits at grid cell (1, 1) of 4x4
    head.score.weight.data[...] = 1.0
    head.score.bias.data[...] = 0.0
    out = head(Tensor(tokens), 4, 64)
    peak = np.unravel_index(np.argmax(out.data[0, 0]), (64, 64))
    # cell (1,1) covers rows/cols 16..31 at a 16x upsampling
    assert 16 <= peak[0] < 32 and 16 <= peak[1] < 32


def test_rough_head_strips_class_token(rng):
    head = RoughSaliencyHead(4, make_rng(0))
    tokens = Tensor(rng.standard_normal((1, 17, 4)))
    out = head(tokens, 4, 32, has_cls=True)
    assert out.data.shape == (1, 1, 32, 32)


def test_rough_head_cls_flag_mismatch(rng):
    head = RoughSaliencyHead(4, make_rng(0))
    with pytest.raises(ShapeError):
        head(Tensor(rng.standard_normal((1, 16, 4))), 4, 32, has_cls=True)
    with pytest.raises(ShapeError):
        head(Tensor(rng.standard_normal((1, 17, 4))), 4, 32, has_cls=False)
