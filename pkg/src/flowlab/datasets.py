"""Synthetic 2-D datasets used as generation targets."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .flow import SampleBatch

DATASET_NAMES = ("gauss8", "moons", "checkerboard")

_DEFAULT_NOISE = {"gauss8": 0.1, "moons": 0.05, "checkerboard": 0.0}
_CLASS_COUNT = {"gauss8": 8, "moons": 2, "checkerboard": 0}


@dataclass(frozen=True)
class DatasetSpec:
    """Which 2-D distribution to draw from, and how noisy."""

    name: str = "gauss8"
    noise: float | None = None
    seed: int = 0

    def __post_init__(self):
        if self.name not in DATASET_NAMES:
            raise ValidationError(f"unknown dataset {self.name!r}; choose from {DATASET_NAMES}")
        if self.noise is not None and self.noise < 0:
            raise ValidationError("noise must be >= 0")

    @property
    def dim(self) -> int:
        return 2

    @property
    def n_classes(self) -> int:
        return _CLASS_COUNT[self.name]

    @property
    def noise_scale(self) -> float:
        return _DEFAULT_NOISE[self.name] if self.noise is None else self.noise


def gauss8_centers() -> np.ndarray:
    angles = 2.0 * np.pi * np.arange(8) / 8
    return 2.0 * np.stack([np.cos(angles), np.sin(angles)], axis=1)


def sample_data(spec: DatasetSpec, count: int, seed: int | None = None) -> SampleBatch:
    """Draw ``count`` points; deterministic given (spec, seed)."""
    if count < 1:
        raise ValidationError("count must be >= 1")
    rng = np.random.default_rng(spec.seed if seed is None else seed)
    if spec.name == "gauss8":
        labels = rng.integers(0, 8, size=count)
        points = gauss8_centers()[labels] + spec.noise_scale * rng.standard_normal((count, 2))
        return SampleBatch(points, labels)
    if spec.name == "moons":
        labels = rng.integers(0, 2, size=count)
        theta = np.pi * rng.random(count)
        upper = np.stack([np.cos(theta), np.sin(theta)], axis=1)
        lower = np.stack([1.0 - np.cos(theta), 0.5 - np.sin(theta)], axis=1)
        points = np.where(labels[:, None] == 0, upper, lower)
        points = points + spec.noise_scale * rng.standard_normal((count, 2))
        return SampleBatch(points, labels)
    # checkerboard: the 8 "on" cells of a 4x4 grid over [-2, 2]^2, unconditional
    cells = np.array([(i, j) for i in range(4) for j in range(4) if (i + j) % 2 == 0])
    which = rng.integers(0, len(cells), size=count)
    offsets = rng.random((count, 2))
    points = -2.0 + cells[which] + offsets
    if spec.noise_scale > 0:
        points = points + spec.noise_scale * rng.standard_normal((count, 2))
    return SampleBatch(points, None)
