"""Image loading, preprocessing, and the RGB/depth/GT folder layout.

Dataset root layout::

    root/RGB/<id>.<ext>    color images
    root/depth/<id>.<ext>  single-channel depth, any integer range
    root/GT/<id>.<ext>     binary annotation (anything >= mid-gray is 1)

Extensions may differ per folder. Resizing uses the same half-pixel
bilinear weights as the network upsampler (nearest for annotations), so
every pixel of the pipeline is reproducible without an image library's
filter internals.
"""

from __future__ import annotations

import warnings
from pathlib import Path

import numpy as np
from PIL import Image

from .autodiff import _bilinear_cached

IMAGE_EXTS = (".png", ".jpg", ".jpeg", ".bmp")

RGB_MEAN = np.array([0.485, 0.456, 0.406])
RGB_STD = np.array([0.229, 0.224, 0.225])


class DataError(Exception):
    """Missing or malformed input data; maps to exit code 2."""


def load_rgb(path) -> np.ndarray:
    """(H, W, 3) float64 in [0, 1]."""
    try:
        with Image.open(path) as im:
            arr = np.asarray(im.convert("RGB"), dtype=np.float64)
    except (OSError, ValueError) as e:
        raise DataError(f"cannot read image {path}: {e}")
    return arr / 255.0


def load_depth(path) -> np.ndarray:
    """(H, W) float64 raw depth values (any range, 8- or 16-bit)."""
    try:
        with Image.open(path) as im:
            if im.mode in ("I", "I;16", "I;16B", "F"):
                arr = np.asarray(im, dtype=np.float64)
            else:
                arr = np.asarray(im.convert("L"), dtype=np.float64)
    except (OSError, ValueError) as e:
        raise DataError(f"cannot read depth map {path}: {e}")
    if arr.ndim != 2:
        raise DataError(f"depth map {path} is not single-channel")
    return arr


def load_gt(path) -> np.ndarray:
    """(H, W) float64 in [0, 1]; binarize with binarize_gt."""
    try:
        with Image.open(path) as im:
            arr = np.asarray(im.convert("L"), dtype=np.float64)
    except (OSError, ValueError) as e:
        raise DataError(f"cannot read annotation {path}: {e}")
    return arr / 255.0


def binarize_gt(gt: np.ndarray) -> np.ndarray:
    return (gt >= 0.5).astype(np.float64)


def normalize_depth(depth: np.ndarray) -> np.ndarray:
    """Min-max to [0, 1]; a constant map collapses to zeros with a warning."""
    lo, hi = float(depth.min()), float(depth.max())
    if hi == lo:
        warnings.warn("constant depth map, normalizing to zeros")
        return np.zeros_like(depth, dtype=np.float64)
    return (depth - lo) / (hi - lo)


def resize_plane(arr: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resample of one (H, W) plane, half-pixel convention."""
    mh = _bilinear_cached(arr.shape[0], out_h)
    mw = _bilinear_cached(arr.shape[1], out_w)
    return mh @ arr @ mw.T


def resize_nearest(arr: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    h, w = arr.shape
    ri = np.clip(np.round((np.arange(out_h) + 0.5) * h / out_h - 0.5).astype(int), 0, h - 1)
    ci = np.clip(np.round((np.arange(out_w) + 0.5) * w / out_w - 0.5).astype(int), 0, w - 1)
    return arr[np.ix_(ri, ci)]


def standardize(chw: np.ndarray) -> np.ndarray:
    return (chw - RGB_MEAN[:, None, None]) / RGB_STD[:, None, None]


def preprocess_rgb(rgb: np.ndarray, size: int) -> np.ndarray:
    """(H, W, 3) in [0,1] -> standardized (3, S, S)."""
    planes = np.stack([resize_plane(rgb[..., c], size, size) for c in range(3)])
    return standardize(planes)


def preprocess_depth(depth: np.ndarray, size: int) -> np.ndarray:
    """Raw (H, W) depth -> min-max normalized, replicated, standardized (3, S, S)."""
    resized = resize_plane(depth, size, size)
    normed = normalize_depth(resized)
    return standardize(np.stack([normed] * 3))


def preprocess_gt(gt: np.ndarray, size: int) -> np.ndarray:
    """(H, W) in [0,1] -> binary (1, S, S), nearest-neighbor resampled."""
    return binarize_gt(resize_nearest(gt, size, size))[None]


def save_map(path, saliency: np.ndarray):
    """Store a [0,1] map as 8-bit grayscale PNG."""
    sal = np.asarray(saliency, dtype=np.float64)
    if sal.ndim != 2:
        raise DataError(f"saliency map must be 2-D, got {sal.shape}")
    img = Image.fromarray(np.round(np.clip(sal, 0, 1) * 255).astype(np.uint8), mode="L")
    img.save(path)


def load_map(path) -> np.ndarray:
    """Read back a stored map as floats in [0, 1]."""
    return load_gt(path)


def _find(folder: Path, stem: str):
    for ext in IMAGE_EXTS:
        p = folder / (stem + ext)
        if p.exists():
            return p
    return None


class PairFolder:
    """Aligned RGB/depth(/GT) triples under one root."""

    def __init__(self, root, require_gt: bool = True):
        self.root = Path(root)
        rgb_dir = self.root / "RGB"
        depth_dir = self.root / "depth"
        gt_dir = self.root / "GT"
        if not rgb_dir.is_dir():
            raise DataError(f"missing RGB folder under {self.root}")
        if not depth_dir.is_dir():
            raise DataError(f"missing depth folder under {self.root}")
        if require_gt and not gt_dir.is_dir():
            raise DataError(f"missing GT folder under {self.root}")
        self.require_gt = require_gt
        self.records = []
        stems = sorted(
            p.stem for p in rgb_dir.iterdir() if p.suffix.lower() in IMAGE_EXTS
        )
        if not stems:
            raise DataError(f"no images in {rgb_dir}")
        for stem in stems:
            rgb = _find(rgb_dir, stem)
            depth = _find(depth_dir, stem)
            if depth is None:
                raise DataError(f"pair {stem}: no depth map in {depth_dir}")
            gt = _find(gt_dir, stem) if gt_dir.is_dir() else None
            if require_gt and gt is None:
                raise DataError(f"pair {stem}: no annotation in {gt_dir}")
            self.records.append((stem, rgb, depth, gt))

    def __len__(self):
        return len(self.records)

    def ids(self):
        return [r[0] for r in self.records]

    def load_raw(self, index: int):
        stem, rgb_p, depth_p, gt_p = self.records[index]
        out = {
            "id": stem,
            "rgb": load_rgb(rgb_p),
            "depth": load_depth(depth_p),
        }
        if gt_p is not None:
            out["gt"] = load_gt(gt_p)
        return out

    def load(self, index: int, size: int):
        raw = self.load_raw(index)
        sample = {
            "id": raw["id"],
            "rgb": preprocess_rgb(raw["rgb"], size),
            "depth": preprocess_depth(raw["depth"], size),
            "native_hw": raw["rgb"].shape[:2],
        }
        if "gt" in raw:
            sample["gt"] = preprocess_gt(raw["gt"], size)
        return sample


def write_labels(path, rows):
    """rows: iterable of (pair id, mae, label). Tab-separated, 6 decimals."""
    with open(path, "w", encoding="utf-8") as fh:
        for pid, err, label in rows:
            fh.write(f"{pid}\t{err:.6f}\t{int(label)}\n")


def read_labels(path):
    out = {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.rstrip("\n")
                if not line:
                    continue
                parts = line.split("\t")
                if len(parts) != 3:
                    raise DataError(f"{path}:{lineno}: expected 3 tab-separated fields")
                out[parts[0]] = (float(parts[1]), int(parts[2]))
    except OSError as e:
        raise DataError(f"cannot read labels file {path}: {e}")
    return out
