"""Run configuration and deterministic seed streams.

A run is driven by one flat JSON document; CLI flags override file values.
All randomness flows from the single root seed, split into named streams so
each component (data, init, training, intervals, search, evaluation) can be
reproduced in isolation.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ValidationError

CONFIG_FORMAT_VERSION = 1


def stream_seed(seed: int, stream: str) -> int:
    """Stable 64-bit child seed for a named stream of the root seed."""
    digest = hashlib.sha256(stream.encode("utf-8")).digest()
    tag = int.from_bytes(digest[:8], "little")
    return int(np.random.SeedSequence([int(seed), tag]).generate_state(1)[0])


def named_rng(seed: int, stream: str) -> np.random.Generator:
    return np.random.default_rng(stream_seed(seed, stream))


@dataclass
class RunConfig:
    # data
    dataset: str = "gauss8"
    data_noise: float | None = None
    train_count: int = 8192
    # architecture
    hidden: tuple = (128, 128, 128)
    time_dim: int = 64
    cond_dim: int = 16
    # teacher training
    teacher_steps: int = 10000
    teacher_batch: int = 256
    teacher_lr: float = 1e-3
    cond_dropout: float = 0.2
    # distillation
    distill_steps: int = 3000
    distill_batch: int = 256
    distill_lr: float = 1e-3
    teacher_nfe: int = 16
    guidance: float = 3.0
    eps_min: float = 1e-3
    states_from_teacher: bool = False
    # schedule search
    search_nfe: int = 3
    search_tol: float = 1e-3
    search_batch: int = 2048
    search_bounds: str = "wide"
    dev_count: int = 2048
    # evaluation: teachers sample with guidance (their inference protocol),
    # students never do
    eval_count: int = 4096
    eval_projections: int = 256
    eval_nfe: int = 32
    eval_guidance: float = 3.0
    floor_trials: int = 8
    mmd_bandwidth: float = 0.5
    # bookkeeping
    seed: int = 0
    out_dir: str = "run"

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        if self.teacher_steps < 0 or self.distill_steps < 0:
            raise ValidationError("step counts must be >= 0")

    @classmethod
    def field_names(cls) -> set:
        return {f.name for f in dataclasses.fields(cls)}

    @classmethod
    def from_dict(cls, values: dict) -> "RunConfig":
        values = dict(values)
        values.pop("format_version", None)
        unknown = set(values) - cls.field_names()
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        return cls(**values)

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except FileNotFoundError as exc:
            raise ValidationError(f"config file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ValidationError(f"config file is not valid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise ValidationError("config file must hold a JSON object")
        return cls.from_dict(raw)

    def override(self, **values) -> "RunConfig":
        values = {k: v for k, v in values.items() if v is not None}
        return dataclasses.replace(self, **values)

    def to_dict(self) -> dict:
        doc = {"format_version": CONFIG_FORMAT_VERSION}
        doc.update(dataclasses.asdict(self))
        doc["hidden"] = list(self.hidden)
        return doc

    def write_resolved(self, out_dir) -> Path:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        path = out_dir / "resolved_config.json"
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)
        return path

    def rng(self, stream: str) -> np.random.Generator:
        return named_rng(self.seed, stream)
