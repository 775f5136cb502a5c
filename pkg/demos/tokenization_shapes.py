"""Walk the tokens-to-token ladder and the shared two-stream encoder.

The encoder never patches the image once; it folds it three times with
overlapping windows, runs a small transformer between folds, and only then
prepends a class token and applies the deep backbone. RGB and depth ride
through the same weights as stacked batch rows.
"""

import numpy as np

from rgbdsal.autodiff import Tensor, no_grad
from rgbdsal.config import RunConfig, desk_config
from rgbdsal.encoder import SiameseEncoder
from rgbdsal.nn import make_rng


def ladder(size):
    """Spatial side after each soft split: k7 s4 p2, then k3 s2 p1 twice."""
    s1 = (size + 2 * 2 - 7) // 4 + 1
    s2 = (s1 + 2 * 1 - 3) // 2 + 1
    s3 = (s2 + 2 * 1 - 3) // 2 + 1
    return s1, s2, s3


def show_ladder(cfg: RunConfig):
    s = cfg.image_size
    s1, s2, s3 = ladder(s)
    c, d = cfg.t2t_dim, cfg.embed_dim
    print(f"input           {s}x{s}x{cfg.in_channels}")
    print(f"soft split 1    k=7 s=4 p=2  -> {s1 * s1:5d} tokens of {7 * 7 * cfg.in_channels}"
          f"  -> token transformer -> dim {c}")
    print(f"soft split 2    k=3 s=2 p=1  -> {s2 * s2:5d} tokens of {9 * c}"
          f"  -> token transformer -> dim {c}")
    print(f"soft split 3    k=3 s=2 p=1  -> {s3 * s3:5d} tokens of {9 * c}"
          f"  -> linear projection  -> dim {d}")
    print(f"+ class token   -> {s3 * s3 + 1} tokens through {cfg.depth} backbone layers")


def main():
    print("Full-size configuration")
    print("=======================")
    show_ladder(RunConfig())

    print()
    print("Desk configuration (what the demos below actually run)")
    print("=======================================================")
    cfg = desk_config(seed=1)
    show_ladder(cfg)

    rng = make_rng(cfg.seed)
    enc = SiameseEncoder(cfg, rng)
    enc.eval()

    data_rng = np.random.default_rng(3)
    s = cfg.image_size
    rgb = Tensor(data_rng.normal(size=(2, 3, s, s)))
    depth = Tensor(data_rng.normal(size=(2, 3, s, s)))

    # The two modalities are concatenated along the batch axis, so one
    # forward pass through one parameter set encodes both.
    with no_grad():
        out = enc(Tensor(np.concatenate([rgb.data, depth.data], axis=0)))

    print()
    print("Forward pass, batch of 2 RGB + 2 depth stacked as 4 rows")
    print(f"  tokens       {out.tokens.shape}  (class token at index 0)")
    print(f"  side 1/4     {out.side_quarter.shape}")
    print(f"  side 1/8     {out.side_eighth.shape}")
    print(f"  token grid   {out.grid}x{out.grid}")

    # Weight sharing, demonstrated: feed the same image as both modalities
    # and the rgb rows equal the depth rows exactly.
    with no_grad():
        same = enc(Tensor(np.concatenate([rgb.data, rgb.data], axis=0)))
    identical = np.array_equal(same.tokens.data[:2], same.tokens.data[2:])
    print(f"  identical inputs -> identical token rows: {identical}")

    # The class token is a learned input, not a pooled output; at init it
    # is zero and picks up row-specific content only through attention.
    logits = enc.class_logits(Tensor(out.tokens.data))
    print(f"  class logits from each row's class token: shape {logits.shape}")


if __name__ == "__main__":
    main()
