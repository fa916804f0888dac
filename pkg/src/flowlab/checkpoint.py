"""Versioned JSON checkpoints for teacher and student networks.

Float values are serialized with repr-exact formatting, so load(save(net))
reproduces outputs bit for bit.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .nets import DualTimeVelocityNet, NetConfig, ParamStore, VelocityNet

FORMAT_VERSION = 1

_KINDS = {"teacher": VelocityNet, "student": DualTimeVelocityNet}


def checkpoint_document(net: VelocityNet, seed=None, train_meta=None) -> dict:
    cfg = net.config
    return {
        "format_version": FORMAT_VERSION,
        "kind": "student" if net.dual_time else "teacher",
        "arch": {
            "d": cfg.dim,
            "hidden": list(cfg.hidden),
            "m": cfg.time_dim,
            "cond_vocab": cfg.cond_vocab,
            "cond_dim": cfg.cond_dim,
        },
        "params": {
            name: {"shape": list(arr.shape), "data": arr.ravel().tolist()}
            for name, arr in net.params.items()
        },
        "seed": seed,
        "train_meta": train_meta or {},
    }


def save_checkpoint(path, net: VelocityNet, seed=None, train_meta=None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(checkpoint_document(net, seed=seed, train_meta=train_meta), fh)
    return path


def load_checkpoint(path, expect_kind: str | None = None):
    """Load a checkpoint, returning (net, document).

    ``expect_kind`` ("teacher" or "student") turns a kind mismatch into a
    validation error instead of silently returning the other network type.
    """
    with open(path) as fh:
        doc = json.load(fh)
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise ValidationError(f"unsupported checkpoint format_version {version!r}")
    kind = doc.get("kind")
    if kind not in _KINDS:
        raise ValidationError(f"unknown checkpoint kind {kind!r}")
    if expect_kind is not None and kind != expect_kind:
        raise ValidationError(f"expected a {expect_kind} checkpoint, got kind {kind!r}")
    arch = doc["arch"]
    config = NetConfig(
        dim=int(arch["d"]),
        hidden=tuple(arch["hidden"]),
        time_dim=int(arch["m"]),
        cond_vocab=int(arch["cond_vocab"]),
        cond_dim=int(arch["cond_dim"]),
    )
    params = ParamStore()
    for name, entry in doc["params"].items():
        arr = np.array(entry["data"], dtype=np.float64).reshape(entry["shape"])
        params.add(name, arr)
    net = _KINDS[kind](config, params)
    return net, doc
