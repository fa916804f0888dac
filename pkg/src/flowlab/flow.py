"""Conditional flow-matching teacher: path, loss, Euler sampling, guidance.

The probability path is the straight interpolation z_t = (1-t) z0 + t z1 with
regression target z1 - z0, the unique path consistent with that target. The
noise prior p0 is the standard Gaussian.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericalError, ValidationError
from .nets import OptimizerState, VelocityNet, mse_loss, mse_loss_grad, optimizer_step


@dataclass
class SampleBatch:
    """A batch of d-dimensional points with optional integer condition labels."""

    points: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64)
        if self.points.ndim != 2 or self.points.shape[0] < 1:
            raise ValidationError("points must be a non-empty (B, d) matrix")
        if not np.all(np.isfinite(self.points)):
            raise ValidationError("points contain non-finite values")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (self.points.shape[0],):
                raise ValidationError("labels must be one integer per row")

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]


@dataclass(frozen=True)
class CFGConfig:
    """Classifier-free guidance settings for teacher-side velocity queries."""

    weight: float = 0.0
    enabled: bool = False

    def __post_init__(self):
        if not np.isfinite(self.weight) or self.weight < 0:
            raise ValidationError("guidance weight must be finite and >= 0")

    @classmethod
    def disabled(cls) -> "CFGConfig":
        return cls(weight=0.0, enabled=False)

    @classmethod
    def with_weight(cls, weight: float) -> "CFGConfig":
        return cls(weight=float(weight), enabled=weight > 0)


class StepSchedule:
    """Strictly increasing time grid t_0=0 < ... < t_n=1; n is the NFE."""

    def __init__(self, times):
        times = np.asarray(times, dtype=np.float64)
        if times.ndim != 1 or times.size < 2:
            raise ValidationError("a schedule needs at least the two endpoints")
        if times[0] != 0.0 or times[-1] != 1.0:
            raise ValidationError("schedule must start at 0 and end at 1")
        if np.any(np.diff(times) <= 0):
            raise ValidationError("schedule times must be strictly increasing")
        times = times.copy()
        times.flags.writeable = False
        self.times = times

    @classmethod
    def uniform(cls, n: int) -> "StepSchedule":
        if n < 1:
            raise ValidationError("a schedule needs at least one step")
        return cls(np.arange(n + 1) / n)

    @property
    def nfe(self) -> int:
        return self.times.size - 1

    def replace(self, i: int, value: float) -> "StepSchedule":
        """New schedule with interior point i moved to ``value``."""
        if i <= 0 or i >= self.nfe:
            raise ValidationError("only interior schedule points can move")
        times = self.times.copy()
        times[i] = value
        return StepSchedule(times)

    def __eq__(self, other):
        return isinstance(other, StepSchedule) and np.array_equal(self.times, other.times)

    def __repr__(self):
        return f"StepSchedule({self.times.tolist()})"


# ---------------------------------------------------------------------------
# path and sampling primitives


def interpolate(z0, z1, t):
    """Linear path point (1-t) z0 + t z1; t may be scalar or one per row."""
    z0 = np.asarray(z0, dtype=np.float64)
    z1 = np.asarray(z1, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    if z0.shape != z1.shape:
        raise ValidationError(f"endpoint shapes differ: {z0.shape} vs {z1.shape}")
    if t.ndim == 1 and z0.ndim == 2:
        t = t[:, None]
    return (1.0 - t) * z0 + t * z1


def euler_step(z, t_from, t_to, v):
    """Single explicit Euler update z + (t_to - t_from) * v."""
    if not np.all(np.asarray(t_to) > np.asarray(t_from)):
        raise ValidationError("euler_step requires t_to > t_from")
    return np.asarray(z, dtype=np.float64) + (t_to - t_from) * np.asarray(v, dtype=np.float64)


def velocity_cfg_batch(net, z, t, cond, cfg: CFGConfig | None) -> np.ndarray:
    """Teacher velocity, optionally sharpened as v_c + w (v_c - v_null)."""
    if cfg is None or not cfg.enabled or cfg.weight == 0.0:
        return net.forward_batch(z, t, cond)
    if cond is None:
        raise ValidationError("guidance needs a real condition, not the null token")
    z = np.asarray(z, dtype=np.float64)
    idx = np.asarray(cond, dtype=np.int64)
    if idx.ndim == 0:
        idx = np.full(z.shape[0], int(idx), dtype=np.int64)
    null = net.config.null_cond
    if np.any(idx == null):
        raise ValidationError("guidance needs a real condition, not the null token")
    # conditional and null passes share one stacked forward
    b = z.shape[0]
    t2 = np.broadcast_to(np.asarray(t, dtype=np.float64), (b,))
    both = net.forward_batch(
        np.concatenate([z, z]),
        np.concatenate([t2, t2]),
        np.concatenate([idx, np.full(b, null, dtype=np.int64)]),
    )
    v_cond, v_null = both[:b], both[b:]
    return v_cond + cfg.weight * (v_cond - v_null)


def velocity_cfg(net, z, t, cond, cfg: CFGConfig | None) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    c = None if cond is None else np.asarray([cond])
    return velocity_cfg_batch(net, z[None, :], np.asarray([t]), c, cfg)[0]


def sample(net, z0, schedule: StepSchedule, cond=None, cfg: CFGConfig | None = None):
    """Integrate the teacher ODE over the schedule.

    Returns (final_states, trajectory) where trajectory stacks all n+1 states.
    """
    z = np.asarray(z0, dtype=np.float64).copy()
    trajectory = [z.copy()]
    times = schedule.times
    for k in range(schedule.nfe):
        v = velocity_cfg_batch(net, z, times[k], cond, cfg)
        z = euler_step(z, times[k], times[k + 1], v)
        trajectory.append(z.copy())
    return z, np.stack(trajectory)


# ---------------------------------------------------------------------------
# training


def cfm_loss(net: VelocityNet, z0, z1, t, cond=None) -> float:
    """Mean squared error between v(z_t, t, c) and the target z1 - z0."""
    z0 = np.asarray(z0, dtype=np.float64)
    z1 = np.asarray(z1, dtype=np.float64)
    if z0.size == 0 or z1.size == 0:
        raise ValidationError("empty batch")
    z_t = interpolate(z0, z1, t)
    return mse_loss(net.forward_batch(z_t, t, cond), z1 - z0)


def cfm_loss_and_grads(net: VelocityNet, z0, z1, t, cond=None):
    z0 = np.asarray(z0, dtype=np.float64)
    z1 = np.asarray(z1, dtype=np.float64)
    if z0.size == 0 or z1.size == 0:
        raise ValidationError("empty batch")
    z_t = interpolate(z0, z1, t)
    out, cache = net.forward_batch_cached(z_t, t, cond)
    loss, d_out = mse_loss_grad(out, z1 - z0)
    return loss, net.backward(cache, d_out)


@dataclass(frozen=True)
class TeacherTrainConfig:
    steps: int
    batch_size: int = 256
    lr: float = 1e-3
    cond_dropout: float = 0.2

    def __post_init__(self):
        if self.steps < 0 or self.batch_size < 1:
            raise ValidationError("steps must be >= 0 and batch_size >= 1")
        if not 0.0 <= self.cond_dropout <= 1.0:
            raise ValidationError("cond_dropout must lie in [0, 1]")


def train_teacher(net: VelocityNet, data: SampleBatch, config: TeacherTrainConfig,
                  rng: np.random.Generator):
    """CFM training loop over batches resampled from ``data``.

    Labels, when present, are dropped to the null token with probability
    cond_dropout so the trained field supports classifier-free guidance.
    Returns (net, per-step loss list).
    """
    opt = OptimizerState.for_params(net.params, lr=config.lr)
    null = net.config.null_cond
    losses: list[float] = []
    n = len(data)
    for _ in range(config.steps):
        idx = rng.integers(0, n, size=config.batch_size)
        z1 = data.points[idx]
        if data.labels is not None:
            cond = data.labels[idx].copy()
            drop = rng.random(config.batch_size) < config.cond_dropout
            cond[drop] = null
        else:
            cond = None
        z0 = rng.standard_normal((config.batch_size, net.config.dim))
        t = rng.random(config.batch_size)
        loss, grads = cfm_loss_and_grads(net, z0, z1, t, cond)
        if not np.isfinite(loss):
            raise NumericalError(f"teacher training diverged at step {len(losses)}")
        optimizer_step(net.params, grads, opt)
        losses.append(loss)
    return net, losses
