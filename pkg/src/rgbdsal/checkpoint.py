"""Self-describing checkpoint container.

Layout: an 8-byte magic, a little-endian uint64 manifest length, a JSON
manifest with canonically sorted keys, then the raw array payload as
concatenated little-endian float64. The manifest embeds the full run
configuration (plus its sha256), so inference needs nothing but the file.
Saving the same state twice produces byte-identical files.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .config import RunConfig, config_from_dict
from .data import DataError

MAGIC = b"RGBDSAL1"


def save_checkpoint(path, model, cfg: RunConfig):
    entries = model.state_arrays()
    manifest_arrays = []
    offset = 0
    for name, arr in entries:
        count = int(arr.size)
        manifest_arrays.append(
            {"name": name, "shape": list(arr.shape), "offset": offset, "count": count}
        )
        offset += count
    manifest = {
        "format": "float64-le",
        "config": cfg.to_dict(),
        "config_sha256": cfg.sha256(),
        "arrays": manifest_arrays,
    }
    blob = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for _, arr in entries:
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(path):
    """Returns (RunConfig, {array name: float64 ndarray})."""
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as e:
        raise DataError(f"cannot read checkpoint {path}: {e}")
    if len(raw) < len(MAGIC) + 8 or raw[: len(MAGIC)] != MAGIC:
        raise DataError(f"{path} is not a checkpoint (bad magic)")
    n = struct.unpack("<Q", raw[len(MAGIC) : len(MAGIC) + 8])[0]
    head = len(MAGIC) + 8
    if len(raw) < head + n:
        raise DataError(f"{path} is truncated inside the manifest")
    try:
        manifest = json.loads(raw[head : head + n].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise DataError(f"{path} has a corrupt manifest: {e}")
    if manifest.get("format") != "float64-le":
        raise DataError(f"{path}: unsupported payload format {manifest.get('format')!r}")
    cfg = config_from_dict(manifest["config"])
    if manifest.get("config_sha256") != cfg.sha256():
        raise DataError(f"{path}: configuration digest mismatch")
    payload = np.frombuffer(raw[head + n :], dtype="<f8")
    arrays = {}
    for spec in manifest["arrays"]:
        start, count = spec["offset"], spec["count"]
        if start + count > payload.size:
            raise DataError(f"{path} is truncated inside array {spec['name']!r}")
        arrays[spec["name"]] = (
            payload[start : start + count].astype(np.float64).reshape(spec["shape"])
        )
    return cfg, arrays


def restore_model(path):
    """Build the model a checkpoint describes and load its state."""
    from .model import build_model

    cfg, arrays = load_checkpoint(path)
    model = build_model(cfg)
    model.load_state_arrays(arrays)
    return model, cfg
