"""Attention math against loop oracles, degenerate cases, and gradients."""

import numpy as np
import pytest

import rgbdsal.autodiff as ad
from rgbdsal import attention as attn
from rgbdsal import gradcheck
from rgbdsal.autodiff import Tensor
from rgbdsal.nn import make_rng


def loop_attention(q, k, v):
    """Per-query softmax attention, written as plain loops."""
    b, h, n, dk = q.shape
    dv = v.shape[-1]
    out = np.zeros((b, h, n, dv))
    for bi in range(b):
        for hi in range(h):
            for i in range(n):
                logits = np.array(
                    [np.dot(q[bi, hi, i], k[bi, hi, j]) / np.sqrt(dk) for j in range(n)]
                )
                w = np.exp(logits - logits.max())
                w /= w.sum()
                for j in range(n):
                    out[bi, hi, i] += w[j] * v[bi, hi, j]
    return out


def test_single_key_returns_value(rng):
    q = rng.standard_normal((1, 1, 1, 4))
    k = rng.standard_normal((1, 1, 1, 4))
    v = rng.standard_normal((1, 1, 1, 6))
    out = attn.scaled_dot_attention(Tensor(q), Tensor(k), Tensor(v))
    assert np.max(np.abs(out.data - v)) < 1e-12


def test_equal_logits_average_values(rng):
    q = np.zeros((1, 1, 2, 4))
    k = rng.standard_normal((1, 1, 3, 4))
    v = rng.standard_normal((1, 1, 3, 6))
    out = attn.scaled_dot_attention(Tensor(q), Tensor(k), Tensor(v))
    assert np.max(np.abs(out.data - v.mean(axis=2, keepdims=True))) < 1e-12


def test_attention_against_loop_oracle(rng):
    q = rng.standard_normal((1, 1, 3, 2))
    k = rng.standard_normal((1, 1, 3, 2))
    v = rng.standard_normal((1, 1, 3, 5))
    out = attn.scaled_dot_attention(Tensor(q), Tensor(k), Tensor(v))
    assert np.max(np.abs(out.data - loop_attention(q, k, v))) < 1e-12


def test_attention_rows_sum_to_one(rng):
    q = rng.standard_normal((2, 3, 5, 4)) * 3
    k = rng.standard_normal((2, 3, 5, 4)) * 3
    w = attn.attention_weights(Tensor(q), Tensor(k))
    assert np.max(np.abs(w.data.sum(axis=-1) - 1.0)) < 1e-12


def test_attention_grad(rng):
    q = rng.standard_normal((1, 2, 3, 4))
    k = rng.standard_normal((1, 2, 3, 4))
    v = rng.standard_normal((1, 2, 3, 4))
    r = rng.standard_normal((1, 2, 3, 4))
    err = gradcheck.check(
        lambda t: gradcheck.weighted(attn.scaled_dot_attention(t[0], t[1], t[2]), r),
        [q, k, v],
    )
    assert err < 1e-6


# ---------------------------------------------------------------------------
# multi-head module


def test_single_head_composes_from_projections(rng):
    m = attn.MultiHeadAttention(6, 1, make_rng(0))
    x = Tensor(rng.standard_normal((2, 4, 6)))
    out = m(x, x)
    q = ad.matmul(x, m.wq.weight) + m.wq.bias
    k = ad.matmul(x, m.wk.weight) + m.wk.bias
    v = ad.matmul(x, m.wv.weight) + m.wv.bias
    ref = loop_attention(
        q.data[:, None], k.data[:, None], v.data[:, None]
    )[:, 0]
    ref = ref @ m.wo.weight.data + m.wo.bias.data
    assert np.max(np.abs(out.data - ref)) < 1e-12


def test_zero_output_projection_kills_output(rng):
    m = attn.MultiHeadAttention(8, 2, make_rng(0))
    m.wo.weight.data[...] = 0.0
    m.wo.bias.data[...] = 0.0
    x = Tensor(rng.standard_normal((1, 5, 8)))
    assert np.array_equal(m(x, x).data, np.zeros((1, 5, 8)))


def test_key_value_permutation_invariance(rng):
    m = attn.MultiHeadAttention(8, 2, make_rng(0))
    q_src = Tensor(rng.standard_normal((1, 4, 8)))
    kv = rng.standard_normal((1, 6, 8))
    perm = rng.permutation(6)
    out1 = m(q_src, Tensor(kv))
    out2 = m(q_src, Tensor(kv[:, perm]))
    assert np.max(np.abs(out1.data - out2.data)) < 1e-10


def test_head_split_merge_roundtrip(rng):
    x = rng.standard_normal((2, 5, 8))
    back = attn.merge_heads(attn.split_heads(Tensor(x), 4))
    assert np.array_equal(back.data, x)


# ---------------------------------------------------------------------------
# transformer layer


def test_zero_weight_layer_is_identity(rng):
    layer = attn.TransformerLayer(8, 2, 2, make_rng(0))
    for _, p in layer.named_parameters():
        p.data[...] = 0.0
    x = rng.standard_normal((2, 5, 8))
    out = layer(Tensor(x))
    assert np.array_equal(out.data, x)


def test_layer_preserves_shape(rng):
    layer = attn.TransformerLayer(8, 2, 3, make_rng(1))
    out = layer(Tensor(rng.standard_normal((2, 5, 8))))
    assert out.data.shape == (2, 5, 8)


def test_layer_parameter_gradients(rng):
    layer = attn.TransformerLayer(6, 2, 2, make_rng(2))
    x = Tensor(rng.standard_normal((1, 3, 6)))
    r = rng.standard_normal((1, 3, 6))

    def run():
        return gradcheck.weighted(layer(x), r)

    err = gradcheck.check_params(run, layer.parameters())
    assert err < 1e-4


def test_layer_input_gradient(rng):
    layer = attn.TransformerLayer(6, 2, 2, make_rng(3))
    x = rng.standard_normal((1, 3, 6))
    r = rng.standard_normal((1, 3, 6))
    err = gradcheck.check(lambda t: gradcheck.weighted(layer(t[0]), r), [x])
    assert err < 1e-4


# ---------------------------------------------------------------------------
# cross-stream (interactive) layer


def test_interactive_on_identical_streams_matches_self_attention(rng):
    layer = attn.InteractiveLayer(6, 1, 4, make_rng(4))
    x = Tensor(rng.standard_normal((2, 5, 6)))
    out = layer(x, x)

    nx = ad.layer_norm(x, layer.norm1.gain, layer.norm1.shift)
    q = attn.split_heads(layer.wq(nx), 1)
    k = attn.split_heads(layer.wk(nx), 1)
    v = attn.split_heads(layer.wv(nx), 1)
    h = ad.add(x, attn.merge_heads(attn.scaled_dot_attention(q, k, v)))
    ref = ad.add(h, layer.mlp(layer.norm2(h)))
    assert np.max(np.abs(out.data - ref.data)) < 1e-12


def test_interactive_against_loop_oracle(rng):
    layer = attn.InteractiveLayer(4, 1, 2, make_rng(5))
    x = rng.standard_normal((1, 3, 4))
    y = rng.standard_normal((1, 3, 4))
    out = layer(Tensor(x), Tensor(y))

    def ln(a, g, b):
        mu = a.mean(-1, keepdims=True)
        var = ((a - mu) ** 2).mean(-1, keepdims=True)
        return (a - mu) / np.sqrt(var + 1e-5) * g + b

    nx = ln(x, layer.norm1.gain.data, layer.norm1.shift.data)
    ny = ln(y, layer.norm1.gain.data, layer.norm1.shift.data)
    q = nx @ layer.wq.weight.data + layer.wq.bias.data
    k = ny @ layer.wk.weight.data + layer.wk.bias.data
    v = ny @ layer.wv.weight.data + layer.wv.bias.data
    att = loop_attention(q[:, None], k[:, None], v[:, None])[:, 0]
    h = x + att
    nh = ln(h, layer.norm2.gain.data, layer.norm2.shift.data)

    def gelu_np(t):
        from scipy.special import erf

        return t * 0.5 * (1 + erf(t / np.sqrt(2)))

    mlp = gelu_np(nh @ layer.mlp.fc1.weight.data + layer.mlp.fc1.bias.data)
    mlp = mlp @ layer.mlp.fc2.weight.data + layer.mlp.fc2.bias.data
    ref = h + mlp
    assert np.max(np.abs(out.data - ref)) < 1e-10


def test_interactive_has_no_output_projection():
    layer = attn.InteractiveLayer(6, 1, 4, make_rng(6))
    names = [n for n, _ in layer.named_parameters()]
    assert not any("wo" in n for n in names)


def test_interactive_param_gradients(rng):
    layer = attn.InteractiveLayer(4, 1, 2, make_rng(7))
    x = Tensor(rng.standard_normal((1, 3, 4)))
    y = Tensor(rng.standard_normal((1, 3, 4)))
    r = rng.standard_normal((1, 3, 4))
    err = gradcheck.check_params(
        lambda: gradcheck.weighted(layer(x, y), r), layer.parameters()
    )
    assert err < 1e-4


# ---------------------------------------------------------------------------
# width-reducing token transformer


def test_token_transformer_shape(rng):
    tt = attn.TokenTransformer(18, 8, make_rng(8))
    out = tt(Tensor(rng.standard_normal((2, 9, 18))))
    assert out.data.shape == (2, 9, 8)


def test_token_transformer_residual_rides_on_values(rng):
    tt = attn.TokenTransformer(10, 4, make_rng(9))
    # zero the post-attention projection and the mlp: output reduces to v
    tt.proj.weight.data[...] = 0.0
    tt.proj.bias.data[...] = 0.0
    tt.mlp.fc2.weight.data[...] = 0.0
    tt.mlp.fc2.bias.data[...] = 0.0
    x = Tensor(rng.standard_normal((1, 5, 10)))
    out = tt(x)
    nx = ad.layer_norm(x, tt.norm1.gain, tt.norm1.shift)
    qkv = tt.qkv(nx)
    v = qkv.data[..., 8:12]
    assert np.max(np.abs(out.data - v)) < 1e-12


def test_token_transformer_param_gradients(rng):
    tt = attn.TokenTransformer(8, 4, make_rng(10))
    x = Tensor(rng.standard_normal((1, 4, 8)))
    r = rng.standard_normal((1, 4, 4))
    err = gradcheck.check_params(
        lambda: gradcheck.weighted(tt(x), r), tt.parameters()
    )
    assert err < 1e-4
