"""Average-velocity distillation of a flow-matching teacher.

The student learns u(z, t, r, c), the mean velocity over [t, r]. Its
regression target is the teacher's displacement accumulated by explicit Euler
over n uniform sub-steps of [t, r], divided by the interval length. Targets
are plain arrays, so no gradient ever reaches the teacher. Adapted students
start as an exact functional copy of the teacher: the dual-time projection is
initialized to [I 0], which routes e_t through unchanged and ignores e_r.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .errors import NumericalError, ValidationError
from .flow import CFGConfig, SampleBatch, StepSchedule, interpolate, velocity_cfg_batch
from .nets import (
    DualTimeVelocityNet,
    OptimizerState,
    VelocityNet,
    mse_loss,
    mse_loss_grad,
    optimizer_step,
)

EPS_MIN_DEFAULT = 1e-3


@dataclass(frozen=True)
class TimeInterval:
    """A distillation interval 0 <= t < r <= 1 with a minimum width."""

    t: float
    r: float
    eps_min: float = EPS_MIN_DEFAULT

    def __post_init__(self):
        if not (0.0 <= self.t < self.r <= 1.0):
            raise ValidationError(f"need 0 <= t < r <= 1, got t={self.t}, r={self.r}")
        if self.r - self.t < self.eps_min:
            raise ValidationError(f"interval width {self.r - self.t} below eps_min={self.eps_min}")

    @property
    def width(self) -> float:
        return self.r - self.t


@dataclass
class AvgVelocity:
    """An average-velocity vector together with the interval it covers."""

    vector: np.ndarray
    interval: TimeInterval


@dataclass(frozen=True)
class DistillConfig:
    teacher_nfe: int = 16
    guidance: float = 3.0
    eps_min: float = EPS_MIN_DEFAULT
    steps: int = 3000
    batch_size: int = 256
    lr: float = 1e-3
    states_from_teacher: bool = False

    def __post_init__(self):
        if self.teacher_nfe < 1:
            raise ValidationError("teacher_nfe must be >= 1")
        if self.steps < 0 or self.batch_size < 1:
            raise ValidationError("steps must be >= 0 and batch_size >= 1")
        if self.eps_min <= 0:
            raise ValidationError("eps_min must be > 0")

    @property
    def cfg(self) -> CFGConfig:
        return CFGConfig.with_weight(self.guidance)


# ---------------------------------------------------------------------------
# intervals


def sample_intervals(rng: np.random.Generator, size: int,
                     eps_min: float = EPS_MIN_DEFAULT):
    """Draw t ~ U[0, 1-eps], then r ~ U[t+eps, 1]; returns (t, r) arrays."""
    t = rng.random(size) * (1.0 - eps_min)
    r = t + eps_min + rng.random(size) * (1.0 - eps_min - t)
    return t, r


def sample_interval(rng: np.random.Generator, eps_min: float = EPS_MIN_DEFAULT) -> TimeInterval:
    t, r = sample_intervals(rng, 1, eps_min)
    return TimeInterval(float(t[0]), float(r[0]), eps_min)


# ---------------------------------------------------------------------------
# teacher displacement and targets


def _interval_bounds(interval, batch: int):
    if isinstance(interval, TimeInterval):
        return np.full(batch, interval.t), np.full(batch, interval.r)
    t, r = interval
    t = np.broadcast_to(np.asarray(t, dtype=np.float64), (batch,)).copy()
    r = np.broadcast_to(np.asarray(r, dtype=np.float64), (batch,)).copy()
    if np.any(t >= r):
        raise ValidationError("interval needs t < r in every row")
    return t, r


def teacher_displacement(teacher: VelocityNet, z, interval, n: int,
                         cond=None, cfg: CFGConfig | None = None) -> np.ndarray:
    """Displacement of the teacher flow across the interval, by n Euler sub-steps.

    ``interval`` is a TimeInterval or a (t, r) pair of scalars/per-row arrays.
    Sub-step nodes are tau_k = t + (width * k) / n with the final node forced
    to r, which keeps displacements over aligned grids exactly composable.
    """
    if n < 1:
        raise ValidationError("sub-step count n must be >= 1")
    z = np.asarray(z, dtype=np.float64)
    squeeze = z.ndim == 1
    if squeeze:
        z = z[None, :]
        if cond is not None and np.ndim(cond) == 0:
            cond = np.asarray([cond])
    t, r = _interval_bounds(interval, z.shape[0])
    width = r - t
    state = z.copy()
    for k in range(n):
        tau_k = t + (width * k) / n
        tau_next = r if k == n - 1 else t + (width * (k + 1)) / n
        v = velocity_cfg_batch(teacher, state, tau_k, cond, cfg)
        state = state + (tau_next - tau_k)[:, None] * v
    delta = state - z
    return delta[0] if squeeze else delta


def avg_velocity_target(displacement: np.ndarray, interval: TimeInterval) -> AvgVelocity:
    """Displacement normalized by the interval width."""
    if interval.r <= interval.t:
        raise ValidationError("average velocity needs r > t")
    vector = np.asarray(displacement, dtype=np.float64) / interval.width
    return AvgVelocity(vector=vector, interval=interval)


def _teacher_targets(teacher, z_t, t, r, cond, config: DistillConfig) -> np.ndarray:
    delta = teacher_displacement(teacher, z_t, (t, r), config.teacher_nfe, cond, config.cfg)
    return delta / (r - t)[:, None]


# ---------------------------------------------------------------------------
# student loss and training


def distill_loss(student: DualTimeVelocityNet, teacher: VelocityNet,
                 z_t, t, r, cond, config: DistillConfig) -> float:
    """Mean squared error between the student and the teacher's average velocity."""
    z_t = np.asarray(z_t, dtype=np.float64)
    if z_t.size == 0:
        raise ValidationError("empty batch")
    t = np.asarray(t, dtype=np.float64)
    r = np.asarray(r, dtype=np.float64)
    target = _teacher_targets(teacher, z_t, t, r, cond, config)
    return mse_loss(student.forward_batch(z_t, t, r, cond), target)


def distill_loss_and_grads(student, teacher, z_t, t, r, cond, config: DistillConfig):
    target = _teacher_targets(teacher, z_t, np.asarray(t, dtype=np.float64),
                              np.asarray(r, dtype=np.float64), cond, config)
    out, cache = student.forward_batch_cached(z_t, t, r, cond)
    loss, d_out = mse_loss_grad(out, target)
    return loss, student.backward(cache, d_out)


def adapt_init(teacher: VelocityNet) -> DualTimeVelocityNet:
    """Dual-time student that reproduces the teacher exactly at initialization.

    All teacher parameters are copied; the new time projection starts as
    [identity | zeros], so the mixed embedding equals e_t bit for bit and the
    second time r has no influence until training moves the zero block.
    """
    m = teacher.config.time_dim
    w_time = np.zeros((m, 2 * m))
    w_time[:, :m] = np.eye(m)
    # canonical parameter order: cond_emb, w_time, then the trunk
    ordered = type(teacher.params)()
    ordered.add("cond_emb", teacher.params["cond_emb"].copy())
    ordered.add("w_time", w_time)
    for name, arr in teacher.params.items():
        if name != "cond_emb":
            ordered.add(name, arr.copy())
    return DualTimeVelocityNet(teacher.config, ordered)


def _distill_states(teacher, z0, z1, t, cond, config: DistillConfig):
    if not config.states_from_teacher:
        return interpolate(z0, z1, t)
    # optional variant: run the teacher flow from z0 up to each row's t
    state = z0.copy()
    n = config.teacher_nfe
    zero = np.zeros_like(t)
    for k in range(n):
        tau_k = (t * k) / n
        tau_next = t if k == n - 1 else (t * (k + 1)) / n
        dt = tau_next - tau_k
        live = dt > 0
        if not np.any(live):
            continue
        v = velocity_cfg_batch(teacher, state, tau_k, cond, config.cfg)
        state = state + np.where(live, dt, zero)[:, None] * v
    return state


def train_student(student: DualTimeVelocityNet, teacher: VelocityNet, data: SampleBatch,
                  config: DistillConfig, rng: np.random.Generator,
                  interval_rng: np.random.Generator | None = None):
    """Distillation loop; returns (student, losses, seconds_per_step).

    Each step draws fresh (z0, z1, c) rows, a fresh interval per row, builds
    z_t on the training path, regresses the student onto the teacher's
    average velocity (guidance applied on the teacher side only), and takes
    one Adam step. Wall-clock seconds are recorded per step.
    """
    if interval_rng is None:
        interval_rng = rng
    opt = OptimizerState.for_params(student.params, lr=config.lr)
    losses: list[float] = []
    seconds: list[float] = []
    n = len(data)
    for step in range(config.steps):
        tic = time.perf_counter()
        idx = rng.integers(0, n, size=config.batch_size)
        z1 = data.points[idx]
        cond = data.labels[idx] if data.labels is not None else None
        z0 = rng.standard_normal((config.batch_size, student.config.dim))
        t, r = sample_intervals(interval_rng, config.batch_size, config.eps_min)
        z_t = _distill_states(teacher, z0, z1, t, cond, config)
        loss, grads = distill_loss_and_grads(student, teacher, z_t, t, r, cond, config)
        if not np.isfinite(loss):
            raise NumericalError(f"distillation diverged at step {step}")
        optimizer_step(student.params, grads, opt)
        losses.append(loss)
        seconds.append(time.perf_counter() - tic)
    return student, losses, seconds


def sample_student(student: DualTimeVelocityNet, z0, schedule: StepSchedule,
                   cond=None) -> np.ndarray:
    """Few-step generation: z_{k+1} = z_k + (t_{k+1} - t_k) u(z_k, t_k, t_{k+1}, c).

    The student is queried with the full upcoming interval at each step and
    never uses guidance. Schedule {0, 1} is one-step generation.
    """
    z = np.asarray(z0, dtype=np.float64).copy()
    times = schedule.times
    for k in range(schedule.nfe):
        u = student.forward_batch(z, times[k], times[k + 1], cond)
        z = z + (times[k + 1] - times[k]) * u
    return z
