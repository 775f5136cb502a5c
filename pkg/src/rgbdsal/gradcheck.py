"""Finite-difference verification of reverse-mode gradients.

Central differences with step h=1e-5 in 64-bit. Errors are reported as
|analytic - numeric| / max(1, |analytic|, |numeric|) per element, so the
measure is relative for large gradients and absolute near zero, where a
pure ratio would amplify rounding noise.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

DEFAULT_H = 1e-5


def numeric_grad(f, arrays, h: float = DEFAULT_H):
    """Central-difference gradient of scalar f w.r.t. each array in arrays."""
    grads = []
    for k, a in enumerate(arrays):
        g = np.zeros_like(a)
        flat = a.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            hi = f(arrays)
            flat[i] = orig - h
            lo = f(arrays)
            flat[i] = orig
            gflat[i] = (hi - lo) / (2.0 * h)
        grads.append(g)
    return grads


def rel_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    denom = np.maximum(1.0, np.maximum(np.abs(analytic), np.abs(numeric)))
    return float(np.max(np.abs(analytic - numeric) / denom)) if analytic.size else 0.0


def check(build, arrays, h: float = DEFAULT_H) -> float:
    """Max rel-err between autodiff and numeric grads.

    build: callable taking a list of Tensors, returning a scalar Tensor.
    arrays: list of numpy arrays used as differentiable leaf values.
    """
    arrays = [np.asarray(a, dtype=np.float64) for a in arrays]
    leaves = [Tensor(a.copy(), requires_grad=True) for a in arrays]
    out = build(leaves)
    if out.data.shape != ():
        out = ad.mean(out)
    out.backward()
    analytic = [
        leaf.grad if leaf.grad is not None else np.zeros_like(leaf.data) for leaf in leaves
    ]

    def scalar(vals):
        tensors = [Tensor(v) for v in vals]
        y = build(tensors)
        if y.data.shape != ():
            y = ad.mean(y)
        return float(y.data)

    numeric = numeric_grad(scalar, arrays, h)
    return max(rel_error(a, n) for a, n in zip(analytic, numeric))


def check_params(run, params, h: float = DEFAULT_H, entries=None, rng=None) -> float:
    """FD check against parameter gradients.

    run() rebuilds the graph from current parameter values and returns a
    scalar Tensor. entries caps how many coordinates are probed per
    parameter (sampled with rng); None probes all of them.
    """
    params = list(params)
    for p in params:
        p.grad = None
    run().backward()
    worst = 0.0
    for p in params:
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        flat = p.data.reshape(-1)
        gflat = g.reshape(-1)
        if entries is None:
            idxs = range(flat.size)
        else:
            take = min(entries, flat.size)
            idxs = sorted(int(i) for i in rng.choice(flat.size, size=take, replace=False))
        for i in idxs:
            orig = flat[i]
            with ad.no_grad():
                flat[i] = orig + h
                hi = float(run().data)
                flat[i] = orig - h
                lo = float(run().data)
            flat[i] = orig
            numeric = (hi - lo) / (2.0 * h)
            denom = max(1.0, abs(gflat[i]), abs(numeric))
            worst = max(worst, abs(gflat[i] - numeric) / denom)
    return worst


def weighted(y: Tensor, w: np.ndarray) -> Tensor:
    """Fixed-weight scalar readout; keeps row-stochastic outputs informative."""
    return ad.sum_along(ad.mul(y, Tensor(w)))


def _away_from(rng, shape, margin=0.1, lo=0.2, hi=1.0):
    """Values with |x| in [lo, hi]; keeps kinks (relu, abs) out of FD reach."""
    mag = rng.uniform(lo, hi, size=shape)
    sign = np.where(rng.uniform(size=shape) < 0.5, -1.0, 1.0)
    return mag * sign


def _probe_specs(rng):
    """One (name, build, arrays) triple per differentiable operation."""
    w = lambda shape: rng.standard_normal(shape)
    specs = []

    a, b = w((2, 3, 4)), w((2, 3, 4))
    r = w((2, 3, 4))
    specs.append(("add", lambda t: weighted(ad.add(t[0], t[1]), r), [a, b]))
    specs.append(("sub", lambda t: weighted(ad.sub(t[0], t[1]), r), [a.copy(), b.copy()]))
    specs.append(("mul", lambda t: weighted(ad.mul(t[0], t[1]), r), [a.copy(), b.copy()]))
    bias = w((4,))
    specs.append(("add_bias", lambda t: weighted(ad.add(t[0], t[1]), r), [a.copy(), bias]))
    specs.append(("scale", lambda t: weighted(ad.scale(t[0], 1.7), r), [a.copy()]))

    m1, m2 = w((3, 4)), w((4, 2))
    rm = w((3, 2))
    specs.append(("matmul", lambda t: weighted(ad.matmul(t[0], t[1]), rm), [m1, m2]))
    bm1, bm2 = w((2, 3, 4)), w((2, 4, 2))
    rbm = w((2, 3, 2))
    specs.append(
        ("matmul_batched", lambda t: weighted(ad.matmul(t[0], t[1]), rbm), [bm1, bm2])
    )

    xk = _away_from(rng, (2, 3, 4))
    specs.append(("relu", lambda t: weighted(ad.relu(t[0]), r), [xk]))
    specs.append(("abs", lambda t: weighted(ad.abs_(t[0]), r), [xk.copy()]))
    specs.append(("gelu", lambda t: weighted(ad.gelu(t[0]), r), [a.copy()]))
    specs.append(("sigmoid", lambda t: weighted(ad.sigmoid(t[0]), r), [a.copy()]))
    specs.append(("exp", lambda t: weighted(ad.exp(t[0]), r), [a.copy()]))
    xp = rng.uniform(0.5, 2.0, size=(2, 3, 4))
    specs.append(("log", lambda t: weighted(ad.log(t[0]), r), [xp]))
    xc = _away_from(rng, (2, 3, 4), lo=0.2, hi=1.4)
    xc = np.where(np.abs(np.abs(xc) - 0.8) < 0.05, xc * 0.5, xc)
    specs.append(("clamp", lambda t: weighted(ad.clamp(t[0], -0.8, 0.8), r), [xc]))

    s = w((2, 5))
    rs = w((2, 5))
    specs.append(("softmax", lambda t: weighted(ad.softmax(t[0], -1), rs), [s]))

    xl, gl, bl = w((2, 3, 8)), rng.uniform(0.5, 1.5, (8,)), w((8,)) * 0.1
    rl = w((2, 3, 8))
    specs.append(
        ("layer_norm", lambda t: weighted(ad.layer_norm(t[0], t[1], t[2]), rl), [xl, gl, bl])
    )

    xb = w((2, 2, 3, 3))
    gb, bb = rng.uniform(0.5, 1.5, (2,)), w((2,)) * 0.1
    rb = w((2, 2, 3, 3))
    rmean, rvar = np.zeros(2), np.ones(2)

    def bn_train(t):
        return weighted(
            ad.batch_norm(t[0], t[1], t[2], rmean.copy(), rvar.copy(), True), rb
        )

    def bn_eval(t):
        return weighted(
            ad.batch_norm(t[0], t[1], t[2], rmean2, rvar2, False), rb
        )

    rmean2, rvar2 = w((2,)) * 0.1, rng.uniform(0.5, 1.5, (2,))
    specs.append(("batch_norm_train", bn_train, [xb, gb, bb]))
    specs.append(("batch_norm_eval", bn_eval, [xb.copy(), gb.copy(), bb.copy()]))

    xcv, wcv, bcv = w((1, 2, 5, 5)), w((3, 2, 3, 3)) * 0.3, w((3,)) * 0.1
    rcv = w((1, 3, 5, 5))
    specs.append(
        ("conv2d", lambda t: weighted(ad.conv2d(t[0], t[1], t[2], 1, 1), rcv), [xcv, wcv, bcv])
    )
    rcv2 = w((1, 3, 2, 2))
    specs.append(
        (
            "conv2d_strided",
            lambda t: weighted(ad.conv2d(t[0], t[1], t[2], 2, 0), rcv2),
            [xcv.copy(), wcv.copy(), bcv.copy()],
        )
    )

    xu = w((1, 2, 4, 4))
    ru = w((1, 4, 18))
    specs.append(("unfold", lambda t: weighted(ad.unfold(t[0], 3, 2, 1), ru), [xu]))

    xup = w((1, 2, 3, 3))
    rup = w((1, 2, 6, 6))
    specs.append(
        ("upsample_bilinear", lambda t: weighted(ad.upsample_bilinear(t[0], 6, 6), rup), [xup])
    )
    rup2 = w((1, 2, 5, 7))
    specs.append(
        (
            "upsample_fractional",
            lambda t: weighted(ad.upsample_bilinear(t[0], 5, 7), rup2),
            [xup.copy()],
        )
    )

    x3 = w((2, 3, 4))
    specs.append(("mean_all", lambda t: ad.mean(t[0]), [x3]))
    r31 = w((2, 4))
    specs.append(
        ("sum_axis", lambda t: weighted(ad.sum_along(t[0], axis=1), r31), [x3.copy()])
    )
    rmk = w((2, 3, 1))
    specs.append(
        ("mean_axis_keep", lambda t: weighted(ad.mean(t[0], axis=2, keepdims=True), rmk), [x3.copy()])
    )
    xm = w((2, 3, 4))
    # unique argmax margin, so FD never crosses a tie
    xm[..., 0] += 3.0
    rmx = w((2, 3))
    specs.append(("max_along", lambda t: weighted(ad.max_along(t[0], axis=2), rmx), [xm]))

    c1, c2 = w((2, 3)), w((2, 4))
    rc = w((2, 7))
    specs.append(("concat", lambda t: weighted(ad.concat([t[0], t[1]], axis=1), rc), [c1, c2]))

    xs = w((3, 4, 5))
    key = (slice(1, 3), slice(None), slice(0, 4))
    rsl = w((2, 4, 4))
    specs.append(("take_slice", lambda t: weighted(ad.take_slice(t[0], key), rsl), [xs]))

    xe = w((2, 1, 3))
    re = w((2, 4, 3))
    specs.append(("expand", lambda t: weighted(ad.expand(t[0], 1, 4), re), [xe]))

    rt = w((4, 2, 3))
    specs.append(
        ("transpose", lambda t: weighted(ad.transpose(t[0], (2, 0, 1)), rt), [x3.copy()])
    )
    rr = w((6, 4))
    specs.append(("reshape", lambda t: weighted(ad.reshape(t[0], (6, 4)), rr), [x3.copy()]))

    return specs


def op_battery(probes: int = 20, h: float = DEFAULT_H, seed: int = 7):
    """Run `probes` random finite-difference probes per op.

    Returns {op name: max rel-err across probes}.
    """
    worst: dict = {}
    for p in range(probes):
        rng = np.random.Generator(np.random.PCG64(seed * 1000 + p))
        for name, build, arrays in _probe_specs(rng):
            err = check(build, arrays, h=h)
            if err > worst.get(name, 0.0):
                worst[name] = err
    return worst


def end_to_end_probe(h: float = DEFAULT_H, entries: int = 2, param_count: int = 5,
                     seed: int = 11):
    """FD check through the whole network and training objective.

    A tiny configuration keeps each forward cheap; `param_count`
    parameters are sampled across the model and `entries` coordinates are
    probed in each. Returns the max rel-err seen.
    """
    from .config import desk_config
    from .fusion import FusionMode
    from .losses import compute_losses
    from .model import build_model
    from .training import synthetic_samples, _batch_tensors

    cfg = desk_config(
        image_size=32, t2t_dim=8, embed_dim=16, heads=2, depth=1,
        cmf_dim=16, cmf_interactive_layers=1, cmf_tail_layers=1,
        decoder_dim=8, batch_size=2, seed=seed,
    )
    model = build_model(cfg)
    model.train()
    samples = synthetic_samples(2, cfg.image_size, seed=seed)

    def run():
        rgb, depth, gt, labels = _batch_tensors(samples, range(len(samples)))
        out = model(rgb, depth, FusionMode.CROSS)
        return compute_losses(out, gt, labels=labels).total_tensor

    rng = np.random.Generator(np.random.PCG64(seed))
    params = list(model.parameters())
    picks = sorted(int(i) for i in rng.choice(len(params), size=min(param_count, len(params)), replace=False))
    return check_params(run, [params[i] for i in picks], h=h, entries=entries, rng=rng)
