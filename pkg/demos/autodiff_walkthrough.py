"""Tour of the reverse-mode tensor library underneath the network.

Builds a few small expressions, runs backward, and checks every gradient
against central finite differences. Nothing here is specific to saliency;
this is the machinery everything else stands on.
"""

import numpy as np

from rgbdsal import autodiff as ad
from rgbdsal.autodiff import Tensor, no_grad
from rgbdsal.gradcheck import check, numeric_grad, rel_error
from rgbdsal.nn import Parameter


def section(title):
    print()
    print(title)
    print("-" * len(title))


def main():
    rng = np.random.default_rng(0)

    section("A scalar chain, differentiated by hand vs by tape")
    # y = sum(sigmoid(w * x + b)) for a single weight and bias
    x = Tensor(np.array([[0.5, -1.0, 2.0]]))
    w = Parameter(np.array([[1.2]]))
    b = Parameter(np.array([[0.1]]))
    y = ad.sum_along(ad.sigmoid(ad.add(ad.mul(w, x.data), b)))
    y.backward()
    s = 1.0 / (1.0 + np.exp(-(w.data * x.data + b.data)))
    dw_hand = np.sum(s * (1 - s) * x.data)
    db_hand = np.sum(s * (1 - s))
    print(f"dL/dw  tape {w.grad[0, 0]:+.10f}   hand {dw_hand:+.10f}")
    print(f"dL/db  tape {b.grad[0, 0]:+.10f}   hand {db_hand:+.10f}")

    section("Broadcast rules: leading axes only")
    # A (1,4) bias broadcasts over a (3,4) activation; the backward pass
    # sums the incoming gradient over the broadcast axis.
    h = Parameter(rng.normal(size=(3, 4)))
    bias = Parameter(rng.normal(size=(1, 4)))
    out = ad.sum_along(ad.mul(ad.add(h, bias), ad.add(h, bias)))
    out.backward()
    print(f"bias.grad shape {bias.grad.shape} (summed back over the batch axis)")
    try:
        ad.add(Tensor(np.zeros((3, 4))), Tensor(np.zeros((3, 1))))
    except Exception as e:
        print(f"trailing-axis broadcast is rejected: {type(e).__name__}: {e}")

    section("Finite-difference check of a composite block")
    # layer_norm -> gelu -> matmul -> softmax, reduced with a fixed random
    # weighting. A plain mean would be a degenerate probe: softmax rows sum
    # to 1, so the mean is constant and both gradients are zero.
    w2 = rng.normal(size=(4, 4))
    probe_w = rng.normal(size=(2, 3, 4))

    def build(leaves):
        t, gain, beta = leaves
        h1 = ad.gelu(ad.layer_norm(t, gain, beta))
        return ad.mean(ad.mul(ad.softmax(ad.matmul(h1, Tensor(w2))), Tensor(probe_w)))

    arrays = [rng.normal(size=(2, 3, 4)), np.ones(4), np.zeros(4)]
    err = check(build, arrays)
    print(f"max relative error across all three inputs: {err:.3e}")

    section("Bilinear upsampling is linear, so its check is exact-ish")
    x4 = rng.uniform(0.2, 0.8, size=(1, 1, 4, 4))

    def build_up(leaves):
        return ad.mean(ad.upsample_bilinear(leaves[0], 16, 16))

    err = check(build_up, [x4])
    print(f"upsample 4x4 -> 16x16 gradient error: {err:.3e}")

    section("numeric_grad directly, for one op")
    f = lambda a: float(np.sum(np.tanh(a)))
    g_num = numeric_grad(f, [x4])[0]
    g_ana = (1 - np.tanh(x4) ** 2)
    print(f"tanh probe rel error: {rel_error(g_ana, g_num):.3e}")

    section("no_grad skips tape construction")
    with no_grad():
        z = ad.matmul(Tensor(rng.normal(size=(8, 8))), Tensor(rng.normal(size=(8, 8))))
    print(f"requires_grad inside no_grad: {z.requires_grad}")


if __name__ == "__main__":
    main()
