"""Command-line driver: train, infer, label-depth, eval, count-params, gradcheck.

Exit codes: 0 success, 1 usage error or failed expectation check,
2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import NumericError
from .checkpoint import restore_model, save_checkpoint
from .complexity import count_cost
from .config import RunConfig, UsageError, apply_overrides, load_config
from .data import (
    DataError,
    IMAGE_EXTS,
    PairFolder,
    binarize_gt,
    load_gt,
    load_map,
    load_depth,
    load_rgb,
    preprocess_depth,
    preprocess_rgb,
    read_labels,
    resize_plane,
    save_map,
    write_labels,
)
from .fusion import FusionMode
from .gradcheck import end_to_end_probe, op_battery
from .losses import depth_quality_label, mean_absolute_error
from .metrics import THRESHOLDS, evaluate_dataset, evaluate_image
from .model import build_model
from .training import train

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad flags; route through UsageError
    # instead so the documented exit-code table holds.
    def error(self, message):
        raise UsageError(message)


def _add_config_flags(sub):
    sub.add_argument("--config", metavar="FILE", help="text config file of key = value lines")
    sub.add_argument(
        "--set",
        metavar="KEY=VALUE",
        action="append",
        default=[],
        dest="overrides",
        help="override a single config field (repeatable)",
    )


def _build_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    pairs = []
    for item in args.overrides:
        if "=" not in item:
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
        key, raw = item.split("=", 1)
        pairs.append((key, raw))
    if pairs:
        cfg = apply_overrides(cfg, pairs)
    return cfg.validate()


def _forward_one(model, cfg, rgb_raw, depth_raw, mode):
    rgb = ad.Tensor(preprocess_rgb(rgb_raw, cfg.image_size)[None])
    depth = ad.Tensor(preprocess_depth(depth_raw, cfg.image_size)[None])
    with ad.no_grad():
        return model(rgb, depth, mode)


# ---------------------------------------------------------------------------
# train


def _cmd_train(args) -> int:
    cfg = _build_config(args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    folder = PairFolder(args.data)
    samples = [folder.load(i, cfg.image_size) for i in range(len(folder))]
    for sample in samples:
        if "gt" not in sample:
            raise DataError(f"pair {sample['id']}: training requires ground truth")

    if cfg.classification:
        labels_path = Path(args.labels) if args.labels else Path(args.data) / "labels.tsv"
        if not labels_path.is_file():
            raise DataError(
                f"no quality labels at {labels_path}; run label-depth first "
                "or disable the term with --set classification=false"
            )
        labels = read_labels(labels_path)
        for sample in samples:
            if sample["id"] not in labels:
                raise DataError(f"pair {sample['id']} missing from {labels_path}")
            sample["label"] = labels[sample["id"]][1]

    model = build_model(cfg)
    steps_per_epoch = max(1, math.ceil(len(samples) / cfg.batch_size))

    def on_step(rec):
        epoch_end = (rec.step + 1) % steps_per_epoch == 0
        if epoch_end and not args.quiet:
            print(f"epoch {rec.epoch:4d}  lr {rec.lr:g}  loss {rec.loss:.6f}")
        if epoch_end and args.checkpoint_every and (rec.epoch + 1) % args.checkpoint_every == 0:
            save_checkpoint(out_dir / f"checkpoint-e{rec.epoch:04d}.ckpt", model, cfg)

    history = train(model, samples, cfg, max_steps=args.max_steps, log=on_step)

    final_path = out_dir / "checkpoint-final.ckpt"
    save_checkpoint(final_path, model, cfg)
    log_path = out_dir / "train-log.tsv"
    with open(log_path, "w", encoding="utf-8") as fh:
        names = sorted(history[0].terms) if history else []
        fh.write("\t".join(["step", "epoch", "lr", "loss", "classification"] + names) + "\n")
        for rec in history:
            row = [str(rec.step), str(rec.epoch), f"{rec.lr:g}", f"{rec.loss:.8f}",
                   f"{rec.classification:.8f}"]
            row += [f"{rec.terms[k]:.8f}" for k in names]
            fh.write("\t".join(row) + "\n")
    print(f"{len(history)} steps; final loss {history[-1].loss:.6f}; "
          f"checkpoint {final_path}; log {log_path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# infer


_MODES = {"auto": None, "cross": FusionMode.CROSS, "self": FusionMode.SELF}


def _cmd_infer(args) -> int:
    model, cfg = restore_model(args.checkpoint)
    model.eval()
    out = _forward_one(model, cfg, load_rgb(args.rgb), load_depth(args.depth),
                       _MODES[args.mode])
    save_map(args.out, out.final.data[0, 0])

    prob = float(out.class_prob.data[0, 0])
    gate_mae = mean_absolute_error(out.t_rgb.data[0, 0], out.t_depth.data[0, 0])
    depth_vs_fused = mean_absolute_error(out.t_depth.data[0, 0], out.t_fused.data[0, 0])
    line = (f"{Path(args.rgb).stem}\tprob={prob:.6f}\tgate_mae={gate_mae:.6f}"
            f"\tdepth_vs_rgbd_mae={depth_vs_fused:.6f}\tmode={out.modes[0].name.lower()}")
    print(line)
    if args.record:
        with open(args.record, "w", encoding="utf-8") as fh:
            fh.write(line + "\n")
    return EXIT_OK


# ---------------------------------------------------------------------------
# label-depth


def _cmd_label_depth(args) -> int:
    model, cfg = restore_model(args.checkpoint)
    model.eval()
    folder = PairFolder(args.data, require_gt=False)
    rows = []
    for i in range(len(folder)):
        raw = folder.load_raw(i)
        # Baseline labeling always runs the cross path: the gate is what
        # these labels will later train.
        out = _forward_one(model, cfg, raw["rgb"], raw["depth"], FusionMode.CROSS)
        err, label = depth_quality_label(
            out.t_depth.data[0, 0], out.t_fused.data[0, 0], cfg.quality_mae_threshold
        )
        rows.append((raw["id"], err, label))
    out_path = Path(args.out) if args.out else Path(args.data) / "labels.tsv"
    write_labels(out_path, rows)
    good = sum(1 for _, _, label in rows if label == 1)
    print(f"{len(rows)} pairs labeled -> {out_path} ({good} good, {len(rows) - good} poor)")
    return EXIT_OK


# ---------------------------------------------------------------------------
# eval


def _list_maps(folder: Path) -> dict:
    if not folder.is_dir():
        raise DataError(f"not a directory: {folder}")
    return {
        p.stem: p
        for p in sorted(folder.iterdir())
        if p.suffix.lower() in IMAGE_EXTS
    }


def _cmd_eval(args) -> int:
    preds = _list_maps(Path(args.pred))
    gts = _list_maps(Path(args.gt))
    missing_gt = sorted(set(preds) - set(gts))
    missing_pred = sorted(set(gts) - set(preds))
    if missing_gt or missing_pred:
        parts = []
        if missing_gt:
            parts.append("predictions without ground truth: " + ", ".join(missing_gt))
        if missing_pred:
            parts.append("ground truth without predictions: " + ", ".join(missing_pred))
        raise DataError("; ".join(parts))
    if not preds:
        raise DataError(f"no images in {args.pred}")

    stems = sorted(preds)
    pairs = []
    for stem in stems:
        pred = load_map(preds[stem])
        gt = binarize_gt(load_gt(gts[stem]))
        if pred.shape != gt.shape:
            pred = np.clip(resize_plane(pred, *gt.shape), 0.0, 1.0)
        pairs.append((pred, gt))

    per_image = [evaluate_image(p, g) for p, g in pairs]
    total = evaluate_dataset(pairs)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "summary.csv", "w", encoding="utf-8") as fh:
        fh.write("images,skipped_f,mae,max_f,s_measure,e_measure\n")
        fh.write(f"{total.images},{total.skipped_f},{total.mae:.6f},"
                 f"{total.max_f:.6f},{total.s:.6f},{total.e:.6f}\n")
    with open(out_dir / "per_image.csv", "w", encoding="utf-8") as fh:
        fh.write("id,mae,max_f,s_measure,e_measure\n")
        for stem, m in zip(stems, per_image):
            fh.write(f"{stem},{m.mae:.6f},{m.max_f:.6f},{m.s:.6f},{m.e:.6f}\n")
    with open(out_dir / "pr_curve.csv", "w", encoding="utf-8") as fh:
        fh.write("threshold,precision,recall\n")
        for t, p, r in zip(THRESHOLDS, total.precision, total.recall):
            fh.write(f"{t:.6f},{p:.6f},{r:.6f}\n")

    print(f"{total.images} images  mae {total.mae:.4f}  max-F {total.max_f:.4f}  "
          f"S {total.s:.4f}  E {total.e:.4f}  (reports in {out_dir})")
    return EXIT_OK


# ---------------------------------------------------------------------------
# count-params


def _cmd_count_params(args) -> int:
    cfg = _build_config(args)
    report = count_cost(cfg, image_size=args.image_size)
    print(f"input side: {report.image_size}")
    print(f"{'part':<12} {'params':>12} {'macs':>16}")
    for part in report.params_by_part:
        print(f"{part:<12} {report.params_by_part[part]:>12,} "
              f"{report.macs_by_part[part]:>16,}")
    print(f"{'total':<12} {report.params_total:>12,} {report.macs_total:>16,}")
    print(f"total: {report.params_total / 1e6:.2f}M params, "
          f"{report.macs_total / 1e9:.2f}G MACs")
    print(f"attention matmuls (extra, unparameterized): {report.attention_macs:,} MACs")
    print(f"interactive attention portion: {report.interactive_params / 1e6:.2f}M params, "
          f"{report.interactive_macs / 1e9:.2f}G MACs")

    failed = False
    for label, actual, expect in (
        ("params", report.params_total, args.expect_params),
        ("macs", report.macs_total, args.expect_macs),
    ):
        if expect is None:
            continue
        rel = abs(actual - expect) / expect
        verdict = "within" if rel <= args.tolerance else "OUTSIDE"
        print(f"{label}: {actual:,} is {verdict} {args.tolerance:.0%} of {expect:,.0f} "
              f"(off by {rel:.2%})")
        failed = failed or rel > args.tolerance
    return EXIT_USAGE if failed else EXIT_OK


# ---------------------------------------------------------------------------
# gradcheck


def _cmd_gradcheck(args) -> int:
    worst = op_battery(probes=args.probes, h=args.h, seed=args.seed)
    bad = []
    for name in sorted(worst):
        status = "ok" if worst[name] < args.tolerance else "FAIL"
        print(f"{name:<20} {worst[name]:.3e}  {status}")
        if worst[name] >= args.tolerance:
            bad.append(name)
    if args.end_to_end:
        err = end_to_end_probe(h=args.h)
        status = "ok" if err < args.e2e_tolerance else "FAIL"
        print(f"{'end-to-end':<20} {err:.3e}  {status}")
        if err >= args.e2e_tolerance:
            bad.append("end-to-end")
    if bad:
        raise NumericError("gradient check failed: " + ", ".join(bad))
    print(f"all checks passed ({args.probes} probes per op)")
    return EXIT_OK


# ---------------------------------------------------------------------------
# wiring


def build_parser() -> _Parser:
    parser = _Parser(prog="rgbdsal",
                     description="RGB-D salient object detection toolkit")
    subs = parser.add_subparsers(dest="command", metavar="command")

    p = subs.add_parser("train", help="optimize a model on a pair folder")
    _add_config_flags(p)
    p.add_argument("--data", required=True, help="dataset root with RGB/depth/GT folders")
    p.add_argument("--out", required=True, help="output directory for checkpoints and logs")
    p.add_argument("--labels", help="quality label file (default: <data>/labels.tsv)")
    p.add_argument("--checkpoint-every", type=int, default=0, metavar="K",
                   help="also checkpoint every K epochs")
    p.add_argument("--max-steps", type=int, help="stop after this many optimizer steps")
    p.add_argument("--quiet", action="store_true", help="suppress per-epoch lines")
    p.set_defaults(func=_cmd_train)

    p = subs.add_parser("infer", help="predict a saliency map for one RGB-D pair")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--rgb", required=True)
    p.add_argument("--depth", required=True)
    p.add_argument("--out", required=True, help="output saliency image (8-bit grayscale)")
    p.add_argument("--mode", choices=sorted(_MODES), default="auto",
                   help="fusion path: auto applies the quality gate")
    p.add_argument("--record", help="also write the quality record line to this file")
    p.set_defaults(func=_cmd_infer)

    p = subs.add_parser("label-depth",
                        help="label depth quality for a pair folder with a baseline model")
    p.add_argument("--checkpoint", required=True, help="baseline checkpoint")
    p.add_argument("--data", required=True, help="dataset root with RGB/depth folders")
    p.add_argument("--out", help="label file to write (default: <data>/labels.tsv)")
    p.set_defaults(func=_cmd_label_depth)

    p = subs.add_parser("eval", help="score saliency maps against ground truth")
    p.add_argument("--pred", required=True, help="directory of predicted maps")
    p.add_argument("--gt", required=True, help="directory of ground-truth masks")
    p.add_argument("--out", required=True, help="directory for CSV reports")
    p.set_defaults(func=_cmd_eval)

    p = subs.add_parser("count-params", help="report parameter and MAC counts")
    _add_config_flags(p)
    p.add_argument("--image-size", type=int, help="input side to count at")
    p.add_argument("--expect-params", type=float, help="expected total parameter count")
    p.add_argument("--expect-macs", type=float, help="expected total MAC count")
    p.add_argument("--tolerance", type=float, default=0.10,
                   help="relative band for the expectation checks (default 0.10)")
    p.set_defaults(func=_cmd_count_params)

    p = subs.add_parser("gradcheck", help="finite-difference checks of the autodiff ops")
    p.add_argument("--probes", type=int, default=20, help="random probes per op")
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--h", type=float, default=1e-5, help="central-difference step")
    p.add_argument("--tolerance", type=float, default=1e-4, help="per-op rel-err bound")
    p.add_argument("--end-to-end", action="store_true",
                   help="also probe the full model through the training objective")
    p.add_argument("--e2e-tolerance", type=float, default=1e-3)
    p.set_defaults(func=_cmd_gradcheck)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not getattr(args, "command", None):
            parser.print_help()
            return EXIT_USAGE
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
