"""Tensor-core behavior: forward values, shape contracts, gradients."""

import numpy as np
import pytest

import rgbdsal.autodiff as ad
from rgbdsal.autodiff import NumericError, ShapeError, Tensor
from rgbdsal import gradcheck


# ---------------------------------------------------------------------------
# matmul


def test_matmul_identity():
    out = ad.matmul(Tensor(np.eye(2)), Tensor([[5.0, 6.0], [7.0, 8.0]]))
    assert np.array_equal(out.data, [[5.0, 6.0], [7.0, 8.0]])


def test_matmul_dot():
    out = ad.matmul(Tensor([[1.0, 2.0]]), Tensor([[3.0], [4.0]]))
    assert np.array_equal(out.data, [[11.0]])


def test_matmul_grad(rng):
    a, b = rng.standard_normal((3, 4)), rng.standard_normal((4, 2))
    r = rng.standard_normal((3, 2))
    err = gradcheck.check(
        lambda t: gradcheck.weighted(ad.matmul(t[0], t[1]), r), [a, b]
    )
    assert err < 1e-6


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(ShapeError) as e:
        ad.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((4, 2))))
    assert "(2, 3)" in str(e.value) and "(4, 2)" in str(e.value)


# ---------------------------------------------------------------------------
# softmax


def test_softmax_uniform():
    out = ad.softmax(Tensor([0.0, 0.0, 0.0]))
    assert np.allclose(out.data, [1 / 3] * 3, atol=1e-15)


def test_softmax_shift_stability():
    out = ad.softmax(Tensor([1000.0, 0.0]))
    assert abs(out.data[0] - 1.0) < 1e-12
    assert abs(out.data[1] - 0.0) < 1e-12


def test_softmax_grad(rng):
    x = rng.standard_normal(5)
    r = rng.standard_normal(5)
    err = gradcheck.check(lambda t: gradcheck.weighted(ad.softmax(t[0]), r), [x])
    assert err < 1e-6


def test_softmax_rejects_nonfinite():
    with pytest.raises(NumericError):
        ad.softmax(Tensor([np.inf, 0.0]))


# ---------------------------------------------------------------------------
# layer_norm


def test_layer_norm_constant_row_returns_shift():
    x = Tensor(np.full((2, 8), 3.7))
    gain = Tensor(np.full(8, 1.9))
    shift = Tensor(np.arange(8.0))
    out = ad.layer_norm(x, gain, shift)
    # zero variance, so the normalized value is 0 and only the shift remains
    assert np.allclose(out.data, np.arange(8.0)[None, :], atol=1e-2)


def test_layer_norm_batch_independence(rng):
    x = rng.standard_normal((3, 4, 8))
    gain, shift = np.ones(8), np.zeros(8)
    base = ad.layer_norm(Tensor(x), Tensor(gain), Tensor(shift)).data
    x2 = x.copy()
    x2[2] = rng.standard_normal((4, 8)) * 10
    pert = ad.layer_norm(Tensor(x2), Tensor(gain), Tensor(shift)).data
    assert np.array_equal(base[:2], pert[:2])


def test_layer_norm_grad(rng):
    x = rng.standard_normal((2, 3, 8))
    gain = rng.uniform(0.5, 1.5, 8)
    shift = rng.standard_normal(8) * 0.1
    r = rng.standard_normal((2, 3, 8))
    err = gradcheck.check(
        lambda t: gradcheck.weighted(ad.layer_norm(t[0], t[1], t[2]), r),
        [x, gain, shift],
    )
    assert err < 1e-5


# ---------------------------------------------------------------------------
# batch_norm


def test_batch_norm_eval_identity(rng):
    x = rng.standard_normal((2, 3, 4, 4))
    out = ad.batch_norm(
        Tensor(x), Tensor(np.ones(3)), Tensor(np.zeros(3)),
        np.zeros(3), np.ones(3), training=False,
    )
    assert np.allclose(out.data, x, atol=1e-4)


def test_batch_norm_train_two_constant_maps():
    x = np.stack([np.zeros((1, 4, 4)), np.full((1, 4, 4), 2.0)])
    rmean, rvar = np.zeros(1), np.ones(1)
    out = ad.batch_norm(
        Tensor(x), Tensor(np.ones(1)), Tensor(np.zeros(1)),
        rmean, rvar, training=True, momentum=1.0,
    )
    assert np.allclose(out.data[0], -1.0, atol=1e-4)
    assert np.allclose(out.data[1], 1.0, atol=1e-4)
    # momentum 1 replaces the running statistics with the batch statistics
    assert np.allclose(rmean, 1.0, atol=1e-12)
    assert np.allclose(rvar, 1.0, atol=1e-12)


def test_batch_norm_train_grad(rng):
    x = rng.standard_normal((4, 3, 8, 8))
    gamma = rng.uniform(0.5, 1.5, 3)
    beta = rng.standard_normal(3) * 0.1
    r = rng.standard_normal((4, 3, 8, 8))
    err = gradcheck.check(
        lambda t: gradcheck.weighted(
            ad.batch_norm(t[0], t[1], t[2], np.zeros(3), np.ones(3), True), r
        ),
        [x, gamma, beta],
    )
    assert err < 1e-5


def test_batch_norm_batch_of_one_warns(rng):
    x = rng.standard_normal((1, 2, 3, 3))
    with pytest.warns(UserWarning):
        ad.batch_norm(
            Tensor(x), Tensor(np.ones(2)), Tensor(np.zeros(2)),
            np.zeros(2), np.ones(2), training=True,
        )


# ---------------------------------------------------------------------------
# conv2d


def test_conv2d_one_by_one_identity(rng):
    x = rng.standard_normal((1, 1, 4, 4))
    w = np.ones((1, 1, 1, 1))
    out = ad.conv2d(Tensor(x), Tensor(w))
    assert np.array_equal(out.data, x)


def test_conv2d_box_blur_of_impulse():
    x = np.zeros((1, 1, 3, 3))
    x[0, 0, 1, 1] = 1.0
    w = np.ones((1, 1, 3, 3))
    out = ad.conv2d(Tensor(x), Tensor(w), stride=1, padding=1)
    assert np.array_equal(out.data, np.ones((1, 1, 3, 3)))


def test_conv2d_output_size_formula(rng):
    x = rng.standard_normal((1, 1, 5, 5))
    w = rng.standard_normal((1, 1, 3, 3))
    out = ad.conv2d(Tensor(x), Tensor(w), stride=2, padding=0)
    assert out.data.shape == (1, 1, 2, 2)
    out = ad.conv2d(Tensor(x), Tensor(w), stride=2, padding=1)
    assert out.data.shape == (1, 1, 3, 3)


def test_conv2d_grad(rng):
    x = rng.standard_normal((1, 2, 5, 5))
    w = rng.standard_normal((3, 2, 3, 3)) * 0.3
    b = rng.standard_normal(3) * 0.1
    r = rng.standard_normal((1, 3, 5, 5))
    err = gradcheck.check(
        lambda t: gradcheck.weighted(ad.conv2d(t[0], t[1], t[2], 1, 1), r), [x, w, b]
    )
    assert err < 1e-5


def test_conv2d_channel_mismatch():
    with pytest.raises(ShapeError):
        ad.conv2d(Tensor(np.zeros((1, 3, 4, 4))), Tensor(np.zeros((2, 2, 3, 3))))


# ---------------------------------------------------------------------------
# unfold


def test_unfold_whole_map_token():
    x = np.arange(4.0).reshape(1, 1, 2, 2)
    out = ad.unfold(Tensor(x), kernel=2, stride=2, padding=0)
    assert out.data.shape == (1, 1, 4)
    assert np.array_equal(out.data[0, 0], [0.0, 1.0, 2.0, 3.0])


def test_unfold_quadrants():
    x = np.arange(16.0).reshape(1, 1, 4, 4)
    out = ad.unfold(Tensor(x), kernel=2, stride=2, padding=0)
    assert out.data.shape == (1, 1 * 4, 4)
    assert np.array_equal(out.data[0, 0], [0.0, 1.0, 4.0, 5.0])
    assert np.array_equal(out.data[0, 1], [2.0, 3.0, 6.0, 7.0])
    assert np.array_equal(out.data[0, 2], [8.0, 9.0, 12.0, 13.0])
    assert np.array_equal(out.data[0, 3], [10.0, 11.0, 14.0, 15.0])


def test_unfold_overlapping_against_index_oracle(rng):
    x = rng.standard_normal((2, 3, 8, 8))
    k, s, p = 3, 2, 1
    out = ad.unfold(Tensor(x), k, s, p).data
    assert out.shape == (2, 16, 27)
    xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
    for b in range(2):
        for oy in range(4):
            for ox in range(4):
                token = []
                for ky in range(k):
                    for kx in range(k):
                        for c in range(3):
                            token.append(xp[b, c, oy * s + ky, ox * s + kx])
                assert np.array_equal(out[b, oy * 4 + ox], np.array(token))


def test_unfold_channel_order_within_cell():
    x = np.zeros((1, 2, 2, 2))
    x[0, 0] = 1.0
    x[0, 1] = 2.0
    out = ad.unfold(Tensor(x), kernel=2, stride=2, padding=0)
    assert np.array_equal(out.data[0, 0], [1.0, 2.0] * 4)


# ---------------------------------------------------------------------------
# elementwise


def test_sigmoid_at_zero():
    assert ad.sigmoid(Tensor(0.0)).item() == 0.5


def test_relu_values():
    assert ad.relu(Tensor(-3.0)).item() == 0.0
    assert ad.relu(Tensor(3.0)).item() == 3.0


def test_elementwise_grads(rng):
    x = rng.standard_normal((2, 3)) + 0.1
    r = rng.standard_normal((2, 3))
    for fn in (ad.sigmoid, ad.gelu, ad.exp):
        err = gradcheck.check(lambda t, f=fn: gradcheck.weighted(f(t[0]), r), [x])
        assert err < 1e-6, fn.__name__


def test_clamp_gradient_is_inclusive_at_bounds():
    x = Tensor(np.array([-2.0, -1.0, 0.0, 1.0, 2.0]), requires_grad=True)
    out = ad.sum_along(ad.clamp(x, -1.0, 1.0))
    out.backward()
    assert np.array_equal(x.grad, [0.0, 1.0, 1.0, 1.0, 0.0])


# ---------------------------------------------------------------------------
# upsample


def test_upsample_preserves_constant():
    x = np.full((1, 2, 3, 3), 0.7)
    out = ad.upsample_bilinear(Tensor(x), 7, 9)
    assert np.allclose(out.data, 0.7, atol=1e-12)


def test_upsample_single_pixel():
    x = np.full((1, 1, 1, 1), 2.5)
    out = ad.upsample_bilinear(Tensor(x), 4, 4)
    assert np.allclose(out.data, 2.5, atol=1e-15)


def test_upsample_2x2_to_4x4_against_direct_formula(rng):
    x = rng.standard_normal((1, 1, 2, 2))
    out = ad.upsample_bilinear(Tensor(x), 4, 4).data
    # half-pixel source coordinates for a factor-2 resize
    w1 = np.array([[1.0, 0.0], [0.75, 0.25], [0.25, 0.75], [0.0, 1.0]])
    expect = np.einsum("oi,pj,ij->op", w1, w1, x[0, 0])
    assert np.max(np.abs(out[0, 0] - expect)) < 1e-12


def test_upsample_rejects_downscale():
    with pytest.raises(ShapeError):
        ad.upsample_bilinear(Tensor(np.zeros((1, 1, 4, 4))), 2, 2)


# ---------------------------------------------------------------------------
# structure ops


def test_expand_requires_unit_axis(rng):
    x = rng.standard_normal((2, 2, 3))
    with pytest.raises(ShapeError):
        ad.expand(Tensor(x), 1, 4)


def test_broadcast_restricted_to_leading_axes(rng):
    a = Tensor(rng.standard_normal((2, 3, 4)))
    with pytest.raises(ShapeError):
        ad.add(a, Tensor(rng.standard_normal((2, 1, 4))))
    with pytest.raises(ShapeError):
        ad.add(a, Tensor(rng.standard_normal((2, 3, 1))))
    # missing leading axes and size-1 leading prefixes are fine
    ad.add(a, Tensor(rng.standard_normal((4,))))
    ad.add(a, Tensor(rng.standard_normal((1, 3, 4))))
    ad.add(a, Tensor(rng.standard_normal((1, 1, 4))))


def test_concat_split_roundtrip_grads(rng):
    a = Tensor(rng.standard_normal((2, 3)), requires_grad=True)
    b = Tensor(rng.standard_normal((2, 5)), requires_grad=True)
    joined = ad.concat([a, b], axis=1)
    back = ad.take_slice(joined, (slice(None), slice(0, 3)))
    ad.sum_along(back).backward()
    assert np.array_equal(a.grad, np.ones((2, 3)))
    assert b.grad is None or not b.grad.any()


def test_max_along_ties_route_to_first():
    x = Tensor(np.array([[1.0, 3.0, 3.0]]), requires_grad=True)
    ad.sum_along(ad.max_along(x, axis=1)).backward()
    assert np.array_equal(x.grad, [[0.0, 1.0, 0.0]])


def test_grad_accumulates_across_reuse(rng):
    x = Tensor(np.array(2.0), requires_grad=True)
    y = ad.add(ad.mul(x, x), ad.scale(x, 3.0))  # x^2 + 3x
    y.backward()
    assert abs(x.grad - 7.0) < 1e-12


def test_backward_is_deterministic(rng):
    x = rng.standard_normal((4, 6))

    def run():
        t = Tensor(x.copy(), requires_grad=True)
        h = ad.relu(ad.matmul(t, Tensor(x.T.copy())))
        ad.mean(ad.mul(h, h)).backward()
        return t.grad.copy()

    g1, g2 = run(), run()
    assert np.array_equal(g1, g2)


def test_no_grad_blocks_graph(rng):
    x = Tensor(rng.standard_normal((2, 2)), requires_grad=True)
    with ad.no_grad():
        y = ad.mul(x, x)
    assert not y.requires_grad and y._backward is None


# ---------------------------------------------------------------------------
# whole-suite battery: every differentiable op, 20 random probes each


def test_op_battery_twenty_probes():
    worst = gradcheck.op_battery(probes=20)
    bad = {k: v for k, v in worst.items() if v >= 1e-4}
    assert not bad, f"ops over tolerance: {bad}"
