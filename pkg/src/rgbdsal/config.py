"""Run configuration: one flat record covering model, loss, and training.

Config files are plain ``key = value`` lines ('#' starts a comment).
Values are coerced from the dataclass field types; unknown keys are
rejected so typos fail loudly instead of training the wrong model.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass
from typing import Tuple


class UsageError(Exception):
    """Bad invocation or configuration; maps to exit code 1."""


@dataclass
class RunConfig:
    # geometry
    image_size: int = 224
    in_channels: int = 3
    # tokenization stack
    t2t_dim: int = 64
    t2t_heads: int = 1
    t2t_ffn_ratio: int = 1
    # transformer backbone
    embed_dim: int = 384
    depth: int = 14
    heads: int = 6
    ffn_ratio: int = 3
    # cross-modality fusion
    cmf_dim: int = 64
    cmf_heads: int = 1
    cmf_interactive_layers: int = 2
    cmf_tail_layers: int = 2
    cmf_ffn_ratio: int = 4
    # decoder
    decoder_dim: int = 64
    adaptive_fusion: bool = True
    # depth-quality classification and gating
    classification: bool = True
    quality_mae_threshold: float = 0.020
    gate_prob_threshold: float = 0.5
    gate_mae_threshold: float = 0.015
    # training
    batch_size: int = 16
    epochs: int = 200
    lr: float = 1e-4
    lr_decay_epochs: Tuple[int, ...] = (100, 150)
    lr_decay_factor: float = 0.1
    seed: int = 0

    def validate(self) -> "RunConfig":
        if self.image_size < 32 or self.image_size % 16:
            raise UsageError(f"image_size {self.image_size} must be a multiple of 16, >= 32")
        if self.embed_dim % self.heads:
            raise UsageError(f"embed_dim {self.embed_dim} not divisible by heads {self.heads}")
        if self.cmf_dim % self.cmf_heads:
            raise UsageError(f"cmf_dim {self.cmf_dim} not divisible by cmf_heads {self.cmf_heads}")
        if self.t2t_dim % self.t2t_heads:
            raise UsageError(f"t2t_dim {self.t2t_dim} not divisible by t2t_heads {self.t2t_heads}")
        for f in ("lr", "lr_decay_factor"):
            if getattr(self, f) <= 0:
                raise UsageError(f"{f} must be positive")
        for f in ("batch_size", "epochs", "depth", "cmf_interactive_layers"):
            if getattr(self, f) < 1:
                raise UsageError(f"{f} must be >= 1")
        return self

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["lr_decay_epochs"] = list(self.lr_decay_epochs)
        return d

    def sha256(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}


def _coerce(name: str, raw: str):
    f = _FIELDS[name]
    raw = raw.strip()
    if f.type in ("int", int):
        return int(raw)
    if f.type in ("float", float):
        return float(raw)
    if f.type in ("bool", bool):
        low = raw.lower()
        if low in ("true", "1", "yes", "on"):
            return True
        if low in ("false", "0", "no", "off"):
            return False
        raise UsageError(f"config key {name}: expected a boolean, got {raw!r}")
    # remaining field is the epoch tuple
    parts = [p for p in raw.replace(",", " ").split() if p]
    return tuple(int(p) for p in parts)


def apply_overrides(cfg: RunConfig, pairs) -> RunConfig:
    """Apply key=value overrides on top of an existing config."""
    values = dataclasses.asdict(cfg)
    values["lr_decay_epochs"] = cfg.lr_decay_epochs
    for key, raw in pairs:
        key = key.strip()
        if key not in _FIELDS:
            raise UsageError(f"unknown config key {key!r}")
        values[key] = _coerce(key, raw)
    return RunConfig(**values).validate()


def parse_config_text(text: str, base: RunConfig = None) -> RunConfig:
    pairs = []
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise UsageError(f"config line {lineno}: expected key = value, got {line!r}")
        key, raw = stripped.split("=", 1)
        pairs.append((key, raw))
    return apply_overrides(base or RunConfig(), pairs)


def load_config(path, base: RunConfig = None) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as e:
        raise UsageError(f"cannot read config file {path}: {e}")
    return parse_config_text(text, base)


def config_from_dict(d: dict) -> RunConfig:
    values = {}
    for key, val in d.items():
        if key not in _FIELDS:
            raise UsageError(f"unknown config key {key!r}")
        if key == "lr_decay_epochs":
            values[key] = tuple(int(v) for v in val)
        else:
            values[key] = val
    return RunConfig(**values).validate()


def desk_config(**overrides) -> RunConfig:
    """Small configuration that exercises every code path quickly."""
    base = dict(
        image_size=64,
        t2t_dim=16,
        embed_dim=64,
        depth=2,
        heads=2,
        cmf_dim=32,
        decoder_dim=32,
        batch_size=4,
        epochs=2,
    )
    base.update(overrides)
    return RunConfig(**base).validate()
