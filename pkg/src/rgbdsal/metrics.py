"""Saliency evaluation: PR curves, F/S/E measures, MAE.

Conventions, fixed here so oracles and CLI agree:
  - Maps are floats in [0, 1]; ground truth is strictly {0, 1}.
  - 256 thresholds k/255, k = 0..255; binarization is pred >= t.
  - Empty prediction at a threshold: precision 1. Empty ground truth:
    recall 1. F is 0 whenever its denominator vanishes.
  - Empty ground truth degrades S and E to 1 - mean(prediction), so an
    empty prediction scores 1 and an all-ones prediction scores 0;
    all-ones ground truth mirrors to mean(prediction). Such images are
    skipped when aggregating F over a dataset.
  - Scalar reductions that feed accept/reject decisions (MAE, E-measure
    means, dataset averages) run through math.fsum, whose result does not
    depend on summation order.
  - Standard deviations inside S use the n-1 normalization; regions with
    fewer than two pixels get deviation 0.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from .losses import mean_absolute_error

THRESHOLDS = np.arange(256, dtype=np.float64) / 255.0
BETA2 = 0.3
_EPS = 1e-8


def _check_pair(pred: np.ndarray, gt: np.ndarray):
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ValueError(f"prediction {pred.shape} and ground truth {gt.shape} differ")
    if pred.min() < 0 or pred.max() > 1:
        raise ValueError("prediction values leave [0, 1]")
    if not np.all((gt == 0) | (gt == 1)):
        raise ValueError("ground truth must be binary")
    return pred, gt


def pr_curves(pred: np.ndarray, gt: np.ndarray):
    """Precision and recall per threshold, both shaped (256,)."""
    pred, gt = _check_pair(pred, gt)
    pos = gt == 1
    n_pos = int(np.count_nonzero(pos))
    precision = np.empty(256)
    recall = np.empty(256)
    for k, t in enumerate(THRESHOLDS):
        b = pred >= t
        tp = int(np.count_nonzero(b & pos))
        marked = int(np.count_nonzero(b))
        precision[k] = 1.0 if marked == 0 else tp / marked
        recall[k] = 1.0 if n_pos == 0 else tp / n_pos
    return precision, recall


def f_measure(precision, recall, beta2: float = BETA2):
    """Weighted harmonic mean; 0 where the denominator vanishes."""
    p = np.asarray(precision, dtype=np.float64)
    r = np.asarray(recall, dtype=np.float64)
    denom = beta2 * p + r
    with np.errstate(invalid="ignore", divide="ignore"):
        f = np.where(denom > 0, (1.0 + beta2) * p * r / denom, 0.0)
    return f


def max_f_measure(pred: np.ndarray, gt: np.ndarray) -> float:
    p, r = pr_curves(pred, gt)
    return float(np.max(f_measure(p, r)))


def mae(pred: np.ndarray, gt: np.ndarray) -> float:
    pred, gt = _check_pair(pred, gt)
    return mean_absolute_error(pred, gt)


# ---------------------------------------------------------------------------
# structure measure


def _std(x: np.ndarray) -> float:
    return float(np.std(x, ddof=1)) if x.size > 1 else 0.0


def _object_score(values: np.ndarray) -> float:
    if values.size == 0:
        return 0.0
    x = float(values.mean())
    return 2.0 * x / (x * x + 1.0 + _std(values) + _EPS)


def _s_object(pred: np.ndarray, gt: np.ndarray) -> float:
    mu = float(gt.mean())
    fg = _object_score(pred[gt == 1])
    bg = _object_score((1.0 - pred)[gt == 0])
    return mu * fg + (1.0 - mu) * bg


def _block_ssim(x: np.ndarray, y: np.ndarray) -> float:
    n = x.size
    if n == 0:
        return 1.0
    mx, my = float(x.mean()), float(y.mean())
    if n > 1:
        vx = float(((x - mx) ** 2).sum() / (n - 1))
        vy = float(((y - my) ** 2).sum() / (n - 1))
        cxy = float(((x - mx) * (y - my)).sum() / (n - 1))
    else:
        vx = vy = cxy = 0.0
    alpha = 4.0 * mx * my * cxy
    beta = (mx * mx + my * my) * (vx + vy)
    if alpha != 0.0:
        return alpha / (beta + _EPS)
    if beta == 0.0:
        return 1.0
    return 0.0


def _s_region(pred: np.ndarray, gt: np.ndarray) -> float:
    h, w = gt.shape
    ys, xs = np.where(gt == 1)
    cy = min(max(int(round(float(ys.mean()))) + 1, 1), h - 1) if h > 1 else 1
    cx = min(max(int(round(float(xs.mean()))) + 1, 1), w - 1) if w > 1 else 1
    total = h * w
    score = 0.0
    for rs, cs in ((slice(0, cy), slice(0, cx)), (slice(0, cy), slice(cx, w)),
                   (slice(cy, h), slice(0, cx)), (slice(cy, h), slice(cx, w))):
        gb = gt[rs, cs]
        pb = pred[rs, cs]
        score += (gb.size / total) * _block_ssim(pb, gb)
    return score


def s_measure(pred: np.ndarray, gt: np.ndarray, gamma: float = 0.5) -> float:
    """Structural agreement: object term and centroid-split region term."""
    pred, gt = _check_pair(pred, gt)
    mu = float(gt.mean())
    if mu == 0.0:
        return 1.0 - float(pred.mean())
    if mu == 1.0:
        return float(pred.mean())
    score = gamma * _s_object(pred, gt) + (1.0 - gamma) * _s_region(pred, gt)
    return max(0.0, score)


# ---------------------------------------------------------------------------
# enhanced alignment measure


def _e_at_threshold(binary: np.ndarray, gt: np.ndarray) -> float:
    n = gt.size
    mu_g = float(gt.mean())
    if mu_g == 0.0:
        return 1.0 - math.fsum(binary.astype(np.float64).reshape(-1)) / n
    if mu_g == 1.0:
        return math.fsum(binary.astype(np.float64).reshape(-1)) / n
    phi_g = gt - mu_g
    b = binary.astype(np.float64)
    phi_p = b - b.mean()
    xi = 2.0 * phi_g * phi_p / (phi_g * phi_g + phi_p * phi_p + _EPS)
    enhanced = (xi + 1.0) ** 2 / 4.0
    return math.fsum(enhanced.reshape(-1)) / n


def e_measure(pred: np.ndarray, gt: np.ndarray) -> float:
    """Max over thresholds of the enhanced-alignment score."""
    pred, gt = _check_pair(pred, gt)
    best = -1.0
    for t in THRESHOLDS:
        e = _e_at_threshold(pred >= t, gt)
        if e > best:
            best = e
    return best


# ---------------------------------------------------------------------------
# aggregation


@dataclasses.dataclass
class ImageMetrics:
    s: float
    e: float
    max_f: float   # nan when ground truth is empty
    mae: float
    precision: np.ndarray
    recall: np.ndarray


@dataclasses.dataclass
class DatasetMetrics:
    s: float
    e: float
    max_f: float
    mae: float
    precision: np.ndarray  # per-threshold average over scored images
    recall: np.ndarray
    images: int
    skipped_f: int         # empty-GT images excluded from the F statistics


def evaluate_image(pred: np.ndarray, gt: np.ndarray) -> ImageMetrics:
    pred, gt = _check_pair(pred, gt)
    p, r = pr_curves(pred, gt)
    empty = not bool(np.any(gt == 1))
    mf = float("nan") if empty else float(np.max(f_measure(p, r)))
    return ImageMetrics(
        s_measure(pred, gt), e_measure(pred, gt), mf, mae(pred, gt), p, r
    )


def evaluate_dataset(pairs) -> DatasetMetrics:
    """pairs: iterable of (prediction, ground truth) arrays."""
    per_s, per_e, per_mae = [], [], []
    p_rows, r_rows = [], []
    skipped = 0
    for pred, gt in pairs:
        m = evaluate_image(pred, gt)
        per_s.append(m.s)
        per_e.append(m.e)
        per_mae.append(m.mae)
        if math.isnan(m.max_f):
            skipped += 1
        else:
            p_rows.append(m.precision)
            r_rows.append(m.recall)
    n = len(per_s)
    if n == 0:
        raise ValueError("no image pairs to evaluate")
    if p_rows:
        p_avg = np.array([math.fsum(row[k] for row in p_rows) / len(p_rows) for k in range(256)])
        r_avg = np.array([math.fsum(row[k] for row in r_rows) / len(r_rows) for k in range(256)])
        best_f = float(np.max(f_measure(p_avg, r_avg)))
    else:
        p_avg = np.full(256, float("nan"))
        r_avg = np.full(256, float("nan"))
        best_f = float("nan")
    return DatasetMetrics(
        math.fsum(per_s) / n,
        math.fsum(per_e) / n,
        best_f,
        math.fsum(per_mae) / n,
        p_avg,
        r_avg,
        n,
        skipped,
    )
