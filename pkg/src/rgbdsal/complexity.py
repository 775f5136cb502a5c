"""Analytic parameter and multiply-accumulate counting.

The headline MAC figure counts multiplies inside parameterized layers
(linear and convolution), the convention most profiling tools use, for
one RGB-D pair: the Siamese encoder runs on two rows, fusion and decoder
on one. Normalizations contribute parameters but no headline multiplies;
the data-dependent attention products q.kT and w.v are tallied separately
in ``attention_macs`` rather than folded into the headline.

Every formula mirrors the constructed module tree one to one; the test
suite checks the parameter side exactly against built models.
"""

from __future__ import annotations

import dataclasses

from .config import RunConfig


def linear_cost(d_in: int, d_out: int, tokens: int, bias: bool = True):
    params = d_in * d_out + (d_out if bias else 0)
    return params, tokens * d_in * d_out


def conv2d_cost(c_in: int, c_out: int, kernel: int, out_h: int, out_w: int, bias: bool = True):
    params = c_out * c_in * kernel * kernel + (c_out if bias else 0)
    return params, c_out * c_in * kernel * kernel * out_h * out_w


def _norm_params(dim: int) -> int:
    return 2 * dim


@dataclasses.dataclass
class CostReport:
    params_total: int
    macs_total: int
    attention_macs: int
    params_by_part: dict
    macs_by_part: dict
    interactive_params: int
    interactive_macs: int
    image_size: int


class _Tally:
    def __init__(self):
        self.params = 0
        self.macs = 0
        self.attention = 0

    def add(self, cost):
        p, m = cost
        self.params += p
        self.macs += m

    def add_attention(self, n_tokens: int, width: int, rows: int = 1):
        # q.kT and w.v, each n^2 * width multiplies regardless of head count
        self.attention += rows * 2 * n_tokens * n_tokens * width


def _mlp(t: _Tally, dim: int, ratio: int, tokens: int, rows: int):
    t.add(linear_cost(dim, dim * ratio, rows * tokens))
    t.add(linear_cost(dim * ratio, dim, rows * tokens))


def _token_transformer(t: _Tally, d_in: int, d_out: int, ratio: int, tokens: int, rows: int):
    t.params += _norm_params(d_in)
    t.add(linear_cost(d_in, 3 * d_out, rows * tokens))
    t.add(linear_cost(d_out, d_out, rows * tokens))
    t.params += _norm_params(d_out)
    _mlp(t, d_out, ratio, tokens, rows)
    t.add_attention(tokens, d_out, rows)


def _transformer_layer(t: _Tally, dim: int, ratio: int, tokens: int, rows: int):
    t.params += 2 * _norm_params(dim)
    t.add(linear_cost(dim, dim, rows * tokens))  # wq
    t.add(linear_cost(dim, dim, rows * tokens))  # wk
    t.add(linear_cost(dim, dim, rows * tokens))  # wv
    t.add(linear_cost(dim, dim, rows * tokens))  # wo
    _mlp(t, dim, ratio, tokens, rows)
    t.add_attention(tokens, dim, rows)


def _interactive_layer(t: _Tally, dim: int, ratio: int, tokens: int, directions: int):
    # parameters are shared between directions; multiplies happen per direction
    t.params += 2 * _norm_params(dim)
    for _ in ("wq", "wk", "wv"):
        p, m = linear_cost(dim, dim, directions * tokens)
        t.params += p
        t.macs += m
    t.add(linear_cost(dim, dim * ratio, directions * tokens))
    t.add(linear_cost(dim * ratio, dim, directions * tokens))
    t.add_attention(tokens, dim, directions)


def count_cost(cfg: RunConfig, image_size: int = None) -> CostReport:
    s = image_size if image_size is not None else cfg.image_size
    if s < 32 or s % 16:
        from .config import UsageError

        raise UsageError(f"image size {s} must be a multiple of 16, >= 32")
    c, d, dd, cm = cfg.t2t_dim, cfg.embed_dim, cfg.decoder_dim, cfg.cmf_dim
    n1, n2, n3 = (s // 4) ** 2, (s // 8) ** 2, (s // 16) ** 2
    rows = 2  # Siamese batch: RGB row + depth row per pair

    parts_p, parts_m = {}, {}
    grand = _Tally()

    def book(name, t: _Tally):
        parts_p[name] = t.params
        parts_m[name] = t.macs
        grand.params += t.params
        grand.macs += t.macs
        grand.attention += t.attention

    enc = _Tally()
    _token_transformer(enc, 7 * 7 * cfg.in_channels, c, cfg.t2t_ffn_ratio, n1, rows)
    _token_transformer(enc, 9 * c, c, cfg.t2t_ffn_ratio, n2, rows)
    enc.add(linear_cost(9 * c, d, rows * n3))
    enc.params += d                  # class token
    enc.params += (n3 + 1) * d       # position table
    for _ in range(cfg.depth):
        _transformer_layer(enc, d, cfg.ffn_ratio, n3 + 1, rows)
    enc.params += _norm_params(d)
    enc.add(linear_cost(d, 1, 1))    # quality logit, depth row only
    book("encoder", enc)

    heads = _Tally()
    heads.add(linear_cost(d, 1, rows * n3))   # rough maps, both modalities
    heads.add(linear_cost(cm, 1, n3))         # rough map from fused tokens
    book("rough_heads", heads)

    fus = _Tally()
    fus.add(linear_cost(d, cm, 2 * n3))       # projection of both streams
    for _ in range(cfg.cmf_interactive_layers):
        _interactive_layer(fus, cm, cfg.cmf_ffn_ratio, n3, directions=2)
    # the interactive portion: shared projection plus cross-stream layers
    interactive_params = fus.params
    interactive_macs = fus.macs
    for _ in range(cfg.cmf_tail_layers):
        _transformer_layer(fus, cm, cfg.cmf_ffn_ratio, n3, rows=1)
    book("fusion", fus)

    dec = _Tally()
    g8, g4, g2 = s // 8, s // 4, s // 2
    dec.add(conv2d_cost(cm, dd, 3, g8, g8))
    dec.params += 2 * dd
    dec.add(conv2d_cost(dd, dd, 3, g8, g8))
    dec.params += 2 * dd
    for g in (g4, g2):
        dec.add(conv2d_cost(dd, dd, 3, g, g))
        dec.params += 2 * dd
        dec.add(conv2d_cost(dd, dd, 3, g, g))
        dec.params += 2 * dd
    dec.add(conv2d_cost(c, dd, 1, g8, g8))    # skip into S/8
    dec.add(conv2d_cost(c, dd, 1, g4, g4))    # skip into S/4
    dec.add(conv2d_cost(2, 1, 1, g2, g2))     # spatial weight
    dec.add(conv2d_cost(3 * dd, dd, 3, g2, g2))
    dec.params += 2 * dd
    dec.add(conv2d_cost(dd, dd, 3, g2, g2))
    dec.params += 2 * dd
    dec.add(conv2d_cost(dd, 1, 3, g8, g8))    # stage heads
    dec.add(conv2d_cost(dd, 1, 3, g4, g4))
    dec.add(conv2d_cost(dd, 1, 3, g2, g2))
    dec.add(conv2d_cost(dd, 1, 3, g2, g2))    # final head
    book("decoder", dec)

    return CostReport(
        params_total=grand.params,
        macs_total=grand.macs,
        attention_macs=grand.attention,
        params_by_part=parts_p,
        macs_by_part=parts_m,
        interactive_params=interactive_params,
        interactive_macs=interactive_macs,
        image_size=s,
    )
