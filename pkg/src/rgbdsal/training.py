"""Optimizer, schedule, training loop, and synthetic fixture data.

The loop is deliberately plain: epoch shuffling from a seeded generator,
full-precision Adam, stepped learning-rate decay, per-step records. With
fixed seeds two runs produce bit-identical parameters.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from . import autodiff as ad
from .autodiff import NumericError, Tensor
from .config import RunConfig
from .fusion import FusionMode
from .losses import compute_losses
from .nn import make_rng


class Adam(object):
    def __init__(self, params, lr: float, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self):
        self.t += 1
        b1t = 1.0 - self.b1 ** self.t
        b2t = 1.0 - self.b2 ** self.t
        for i, p in enumerate(self.params):
            if p.grad is None:
                continue
            g = p.grad
            self.m[i] = self.b1 * self.m[i] + (1.0 - self.b1) * g
            self.v[i] = self.b2 * self.v[i] + (1.0 - self.b2) * (g * g)
            mhat = self.m[i] / b1t
            vhat = self.v[i] / b2t
            p.data = p.data - self.lr * mhat / (np.sqrt(vhat) + self.eps)

    def zero_grad(self):
        for p in self.params:
            p.grad = None


def learning_rate(cfg: RunConfig, epoch: int) -> float:
    """Stepped decay: multiply by the factor at each configured epoch."""
    lr = cfg.lr
    for boundary in cfg.lr_decay_epochs:
        if epoch >= boundary:
            lr *= cfg.lr_decay_factor
    return lr


@dataclasses.dataclass
class StepRecord:
    epoch: int
    step: int
    lr: float
    loss: float
    terms: dict
    classification: float


def _batch_tensors(samples, idxs):
    rgb = Tensor(np.stack([samples[i]["rgb"] for i in idxs]))
    depth = Tensor(np.stack([samples[i]["depth"] for i in idxs]))
    gt = np.stack([samples[i]["gt"] for i in idxs])
    labels = None
    if all("label" in samples[i] for i in idxs):
        labels = np.array([[float(samples[i]["label"])] for i in idxs])
    return rgb, depth, gt, labels


def train(model, samples, cfg: RunConfig, max_steps: int = None, log=None):
    """Optimize the model on preloaded samples; returns the step history.

    samples: list of dicts with keys rgb (3,S,S), depth (3,S,S), gt
    (1,S,S) and optionally label (0/1 depth quality). max_steps cuts the
    run short regardless of the configured epoch count.
    """
    if not samples:
        raise ValueError("empty training set")
    if not cfg.classification:
        samples = [{k: v for k, v in s.items() if k != "label"} for s in samples]
    history = []
    opt = Adam(model.parameters(), cfg.lr)
    order_rng = make_rng(cfg.seed + 1)
    model.train()
    step = 0
    for epoch in range(cfg.epochs):
        opt.lr = learning_rate(cfg, epoch)
        order = order_rng.permutation(len(samples))
        for start in range(0, len(samples), cfg.batch_size):
            idxs = order[start : start + cfg.batch_size]
            rgb, depth, gt, labels = _batch_tensors(samples, idxs)
            out = model(rgb, depth, FusionMode.CROSS)
            report = compute_losses(out, gt, labels=labels)
            if not math.isfinite(report.total):
                bad = {k: v for k, v in report.terms.items() if not math.isfinite(v)}
                raise NumericError(
                    f"non-finite loss at epoch {epoch} step {step}: "
                    f"total={report.total}, offending terms={bad or report.terms}"
                )
            opt.zero_grad()
            report.total_tensor.backward()
            opt.step()
            record = StepRecord(
                epoch, step, opt.lr, report.total, dict(report.terms),
                report.classification,
            )
            history.append(record)
            if log:
                log(record)
            step += 1
            if max_steps is not None and step >= max_steps:
                return history
    return history


def epoch_mean_losses(history):
    """Average loss per epoch, ordered by epoch index."""
    byepoch = {}
    for rec in history:
        byepoch.setdefault(rec.epoch, []).append(rec.loss)
    return [math.fsum(v) / len(v) for _, v in sorted(byepoch.items())]


# ---------------------------------------------------------------------------
# synthetic fixtures


def synthetic_arrays(n: int, size: int, seed: int = 0, good_depth: bool = True):
    """Blob-shaped RGB-D pairs whose color strongly encodes the target.

    Returns a list of raw dicts: rgb (H,W,3) in [0,1], depth (H,W) raw,
    gt (H,W) in {0,1}. Depth either mirrors the blob (good) or is noise
    (bad), which drives the depth-quality labels both ways.
    """
    rng = make_rng(seed)
    out = []
    yy, xx = np.mgrid[0:size, 0:size]
    for k in range(n):
        cy = size * (0.38 + 0.24 * rng.uniform())
        cx = size * (0.38 + 0.24 * rng.uniform())
        ry = size * (0.12 + 0.06 * rng.uniform())
        rx = size * (0.12 + 0.06 * rng.uniform())
        blob = (((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2) <= 1.0
        gt = blob.astype(np.float64)
        rgb = np.empty((size, size, 3))
        rgb[..., 0] = 0.85 * gt + 0.08
        rgb[..., 1] = 0.10 + 0.75 * (1.0 - gt)
        rgb[..., 2] = 0.5 * gt + 0.25
        rgb += rng.normal(0.0, 0.005, rgb.shape)
        rgb = np.clip(rgb, 0.0, 1.0)
        if good_depth:
            depth = 400.0 + 800.0 * gt + rng.normal(0.0, 1.0, gt.shape)
        else:
            depth = rng.uniform(300.0, 1500.0, gt.shape)
        out.append({"id": f"pair{k:03d}", "rgb": rgb, "depth": depth, "gt": gt})
    return out


def synthetic_samples(n: int, size: int, seed: int = 0, good_depth: bool = True):
    """Preprocessed synthetic training samples with quality labels."""
    from .data import (
        normalize_depth,
        preprocess_depth,
        preprocess_gt,
        preprocess_rgb,
        resize_plane,
    )
    from .losses import depth_quality_label

    samples = []
    for raw in synthetic_arrays(n, size, seed, good_depth):
        gt = preprocess_gt(raw["gt"], size)
        depth_plane = normalize_depth(resize_plane(raw["depth"], size, size))
        err, label = depth_quality_label(depth_plane, gt[0])
        samples.append(
            {
                "id": raw["id"],
                "rgb": preprocess_rgb(raw["rgb"], size),
                "depth": preprocess_depth(raw["depth"], size),
                "gt": gt,
                "label": label,
                "depth_mae": err,
            }
        )
    return samples
