"""Cross-modality fusion, its self-attention fallback, and the gate.

Three facts carry the whole depth-quality story:

  1. CROSS(x, x) == SELF(x) bitwise, because both directions of the
     interactive exchange collapse to the same attention when the two
     streams are the same tensor.
  2. CROSS(a, b) == CROSS(b, a) bitwise, because the interactive layers
     share one parameter set and the merge is an addition.
  3. At inference the gate picks SELF only when the classifier distrusts
     the depth map AND the two rough maps disagree; everything else runs
     the full exchange.
"""

import numpy as np

from rgbdsal.autodiff import Tensor, no_grad
from rgbdsal.config import desk_config
from rgbdsal.fusion import CrossModalityFusion, FusionMode
from rgbdsal.losses import quality_gate, quality_label_from_mae
from rgbdsal.nn import make_rng


def main():
    cfg = desk_config(seed=6)
    cmf = CrossModalityFusion(cfg, make_rng(cfg.seed))
    cmf.eval()

    rng = np.random.default_rng(2)
    a = Tensor(rng.normal(size=(1, 16, cfg.embed_dim)))
    b = Tensor(rng.normal(size=(1, 16, cfg.embed_dim)))

    with no_grad():
        cross = cmf(a, b, FusionMode.CROSS)
        swapped = cmf(b, a, FusionMode.CROSS)
        self_a = cmf(a, a, FusionMode.CROSS)
        fallback = cmf(a, b, FusionMode.SELF)

    print("Fusion output shape:", cross.data.shape)
    print(f"CROSS(a,b) == CROSS(b,a) bitwise: {np.array_equal(cross.data, swapped.data)}")
    print(f"CROSS(a,a) == SELF(a,b)  bitwise: {np.array_equal(self_a.data, fallback.data)}")
    print("(SELF ignores the second stream entirely; only the RGB tokens attend to themselves)")

    print()
    print("Gate truth table (prob threshold 0.5, rough-map MAE threshold 0.015)")
    print(f"{'class prob':>10}  {'rough MAE':>9}  mode")
    for prob in (0.40, 0.60):
        for err in (0.014, 0.016):
            mode = quality_gate(prob, err)
            print(f"{prob:>10.2f}  {err:>9.3f}  {mode.name}")
    print("Only the distrusted-and-disagreeing corner falls back to SELF;")
    print("a poor depth map that still agrees with RGB does no harm in CROSS.")

    print()
    print("Label rule used to train that classifier (threshold 0.020 on the")
    print("MAE between the depth rough map and the fused rough map):")
    for err in (0.001, 0.019, 0.021, 0.400):
        print(f"  mae {err:.3f} -> label {quality_label_from_mae(err)}")


if __name__ == "__main__":
    main()
