"""The four saliency scores, exercised on predictions of known quality.

A square target is scored against a perfect prediction, a softened one,
a shifted one, an inverted one, and two constants. MAE falls as maps
agree; max-F, S and E rise. The constant maps are the classic traps:
all-zero earns a respectable S because region structure is half the
score, and the E-measure punishes it hardest.
"""

import numpy as np

from rgbdsal.metrics import (
    evaluate_dataset,
    evaluate_image,
    f_measure,
    pr_curves,
)


def soften(gt, k=7):
    """Crude box blur, just to make edges uncertain."""
    pad = k // 2
    padded = np.pad(gt, pad, mode="edge")
    out = np.zeros_like(gt)
    h, w = gt.shape
    for dy in range(k):
        for dx in range(k):
            out += padded[dy:dy + h, dx:dx + w]
    return out / (k * k)


def main():
    gt = np.zeros((64, 64))
    gt[20:44, 24:52] = 1.0

    shifted = np.zeros_like(gt)
    shifted[26:50, 30:58] = 1.0

    candidates = [
        ("perfect", gt.copy()),
        ("softened edges", soften(gt)),
        ("shifted 6px", soften(shifted)),
        ("inverted", 1.0 - gt),
        ("all 0.5", np.full_like(gt, 0.5)),
        ("all zero", np.zeros_like(gt)),
    ]

    print(f"{'prediction':>15}  {'MAE':>7}  {'max-F':>7}  {'S':>7}  {'E':>7}")
    rows = []
    for name, pred in candidates:
        m = evaluate_image(pred, gt)
        rows.append((pred, gt))
        print(f"{name:>15}  {m.mae:7.4f}  {m.max_f:7.4f}  {m.s:7.4f}  {m.e:7.4f}")

    print()
    print("PR curve of the softened prediction at a few of the 256 thresholds")
    p, r = pr_curves(soften(gt), gt)
    f = f_measure(p, r)
    print(f"{'threshold':>9}  {'precision':>9}  {'recall':>7}  {'F':>7}")
    for k in (0, 64, 128, 192, 255):
        print(f"{k / 255:>9.3f}  {p[k]:>9.4f}  {r[k]:>7.4f}  {f[k]:>7.4f}")
    print(f"max-F picks the best threshold: {float(np.max(f)):.4f} at t={np.argmax(f) / 255:.3f}")

    print()
    agg = evaluate_dataset(rows)
    print(f"Dataset aggregate over all six: MAE {agg.mae:.4f}, max-F {agg.max_f:.4f}, "
          f"S {agg.s:.4f}, E {agg.e:.4f}")
    print("(dataset max-F maximizes F over thresholds of the averaged PR curves)")


if __name__ == "__main__":
    main()
