"""Training objective: per-map cross-entropy, depth-quality terms, gating.

Seven predicted maps are each scored against the ground truth with
mean-reduced binary cross-entropy and summed under per-map weights (all
1 by default). A depth-quality classification term is added when labels
are available. Everything reduces through the autodiff graph, so one
backward() covers the whole objective.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .fusion import FusionMode

CE_EPS = 1e-7

MAP_NAMES = ("t_rgb", "t_depth", "t_fused", "side1", "side2", "side3", "final")


def binary_cross_entropy(pred: Tensor, target, eps: float = CE_EPS) -> Tensor:
    """Mean BCE on probabilities, clamped away from the log singularities."""
    t = target if isinstance(target, Tensor) else Tensor(np.asarray(target, dtype=np.float64))
    if t.data.shape != pred.data.shape:
        raise ad.ShapeError(f"target shape {t.data.shape} != prediction shape {pred.data.shape}")
    p = ad.clamp(pred, eps, 1.0 - eps)
    pos = ad.mul(t, ad.log(p))
    neg = ad.mul(ad.scale(ad.sub(t, 1.0), -1.0), ad.log(ad.sub(Tensor(1.0), p)))
    return ad.scale(ad.mean(ad.add(pos, neg)), -1.0)


def mean_absolute_error(a: np.ndarray, b: np.ndarray) -> float:
    """Exactly rounded mean |a-b| (order-independent by construction)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ad.ShapeError(f"mae: shapes differ {a.shape} vs {b.shape}")
    diff = np.abs(a - b).reshape(-1)
    return math.fsum(diff) / diff.size


@dataclasses.dataclass
class LossReport:
    terms: dict            # map name -> float value
    weights: dict          # map name -> applied weight
    classification: float  # depth-quality term value (0.0 when disabled)
    total: float
    total_tensor: Tensor   # differentiable total


def compute_losses(output, gt, labels=None, weights=None, eps: float = CE_EPS) -> LossReport:
    """Score a ModelOutput against ground truth.

    gt: (B,1,S,S) binary array. labels: (B,) or (B,1) quality targets in
    {0,1}, or None to drop the classification term. weights: optional
    {map name: float} overriding the default 1.0 each.
    """
    gt = np.asarray(gt, dtype=np.float64)
    w = {name: 1.0 for name in MAP_NAMES}
    if weights:
        unknown = set(weights) - set(MAP_NAMES)
        if unknown:
            raise ValueError(f"unknown loss weights: {sorted(unknown)}")
        w.update(weights)

    maps = output.maps()
    terms = {}
    total = None
    target = Tensor(gt)
    for name in MAP_NAMES:
        term = binary_cross_entropy(maps[name], target, eps)
        terms[name] = float(term.data)
        piece = ad.scale(term, w[name]) if w[name] != 1.0 else term
        total = piece if total is None else ad.add(total, piece)

    class_value = 0.0
    if labels is not None:
        lab = np.asarray(labels, dtype=np.float64).reshape(output.class_prob.shape)
        class_term = binary_cross_entropy(output.class_prob, lab, eps)
        class_value = float(class_term.data)
        total = ad.add(total, class_term)

    return LossReport(terms, w, class_value, float(total.data), total)


def quality_label_from_mae(mae: float, threshold: float = 0.020) -> int:
    """1 = depth agrees with the annotation, 0 = depth is unreliable."""
    return 0 if mae > threshold else 1


def depth_quality_label(depth_map: np.ndarray, reference: np.ndarray, threshold: float = 0.020):
    """Label a depth-driven map by how far it strays from a reference map.

    The reference is whatever the caller trusts: a fused prediction when
    labeling with a baseline model, or the annotation itself for synthetic
    fixtures. Returns (mae, label).
    """
    err = mean_absolute_error(depth_map, reference)
    return err, quality_label_from_mae(err, threshold)


def quality_gate(class_prob: float, rough_mae: float,
                 prob_threshold: float = 0.5, mae_threshold: float = 0.015) -> FusionMode:
    """Pick the fusion path from depth quality evidence.

    Depth is bypassed only when the classifier distrusts it AND the two
    rough modality maps visibly disagree; otherwise cross fusion runs.
    """
    if class_prob < prob_threshold and rough_mae > mae_threshold:
        return FusionMode.SELF
    return FusionMode.CROSS
