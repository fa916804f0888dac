"""Coordinate-wise ternary search over sampling-step placements.

Generation quality as a function of one interior schedule point, with the
others held fixed, is close to unimodal for these models, so each point is
placed by ternary search inside the gap between its neighbours. Sweeps run
from the last interior point down to the first and repeat until the patience
budget is spent or a full sweep brings no improvement. Every metric call is
cached on the quantized schedule and logged.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import FlowLabError, ValidationError
from .flow import SampleBatch, StepSchedule
from .metrics import PROJECTION_SEED, swd

CACHE_QUANTUM = 1e-6
TERNARY_MAX_ITER = 30


class MetricFailure(FlowLabError):
    """Raised when the metric function itself fails; carries the audit so far."""

    def __init__(self, message: str, audit: list):
        super().__init__(message)
        self.audit = audit


@dataclass
class AuditRecord:
    eval_index: int
    times: tuple
    metric: float
    accepted: bool
    best_metric: float


@dataclass
class SearchState:
    """Incumbent schedule plus bookkeeping for one search run."""

    best_schedule: StepSchedule
    best_metric: float = -np.inf
    patience: int = 0
    evaluations: int = 0
    seen_best: float = -np.inf
    cache: dict = field(default_factory=dict)
    audit: list = field(default_factory=list)

    def evaluate(self, metric, schedule: StepSchedule, dev) -> float:
        """Metric value for a schedule, via the quantized cache."""
        key = tuple(np.round(schedule.times / CACHE_QUANTUM).astype(np.int64).tolist())
        if key in self.cache:
            return self.cache[key]
        try:
            value = float(metric(schedule, dev))
        except Exception as exc:  # preserve the log for post-mortems
            raise MetricFailure(f"metric evaluation failed: {exc}", self.audit) from exc
        if not np.isfinite(value):
            raise MetricFailure(f"metric returned a non-finite value {value}", self.audit)
        self.evaluations += 1
        self.cache[key] = value
        improved = value > self.seen_best
        self.seen_best = max(self.seen_best, value)
        self.audit.append(
            AuditRecord(
                eval_index=self.evaluations,
                times=tuple(schedule.times.tolist()),
                metric=value,
                accepted=improved,
                best_metric=self.seen_best,
            )
        )
        return value


def ternary_search(f, lo: float, hi: float, tol: float = 1e-3,
                   max_iter: int = TERNARY_MAX_ITER):
    """Maximize a unimodal f on (lo, hi); returns (best_x, best_value).

    Shrinks the bracket with two interior probes per iteration until its width
    drops below ``tol`` or the iteration budget runs out. Endpoints are never
    probed, so the best point always lies strictly inside the input interval.
    """
    if not lo < hi:
        raise ValidationError(f"need lo < hi, got [{lo}, {hi}]")
    best_x, best_val = None, -np.inf
    for _ in range(max_iter):
        if hi - lo <= tol:
            break
        third = (hi - lo) / 3.0
        x1, x2 = lo + third, hi - third
        f1, f2 = f(x1), f(x2)
        if f1 > best_val:
            best_x, best_val = x1, f1
        if f2 > best_val:
            best_x, best_val = x2, f2
        if f1 < f2:
            lo = x1
        else:
            hi = x2
    if best_x is None:  # interval started below tol; probe its midpoint once
        best_x = 0.5 * (lo + hi)
        best_val = f(best_x)
    return best_x, float(best_val)


@dataclass
class SearchResult:
    schedule: StepSchedule
    metric: float
    audit: list
    evaluations: int


def search_schedule(metric, n_steps: int, dev=None, tol: float = 1e-3,
                    bounds: str = "wide", max_iter: int = TERNARY_MAX_ITER) -> SearchResult:
    """Optimize interior step placements for a fixed NFE.

    ``metric`` is called as metric(schedule, dev) and must be deterministic;
    higher is better. The uniform schedule seeds the incumbent, so the result
    is never worse than uniform under the same metric. ``bounds`` selects the
    ternary bracket for point i: "wide" uses (t_{i-1}, t_{i+1}) so points can
    move in both directions; "below" restricts to (t_{i-1}, t_i).
    """
    if n_steps < 1:
        raise ValidationError("n_steps must be >= 1")
    if bounds not in ("wide", "below"):
        raise ValidationError(f"unknown bounds mode {bounds!r}")
    state = SearchState(best_schedule=StepSchedule.uniform(n_steps))
    state.best_metric = state.evaluate(metric, state.best_schedule, dev)
    if n_steps == 1:
        return SearchResult(state.best_schedule, state.best_metric, state.audit,
                            state.evaluations)

    searching = True
    while searching:
        improved_in_sweep = False
        for i in range(n_steps - 1, 0, -1):
            times = state.best_schedule.times
            lo = times[i - 1]
            hi = times[i + 1] if bounds == "wide" else times[i]

            def place(x, _i=i):
                return state.evaluate(metric, state.best_schedule.replace(_i, x), dev)

            best_x, best_val = ternary_search(place, lo, hi, tol=tol, max_iter=max_iter)
            if best_val > state.best_metric:
                state.best_schedule = state.best_schedule.replace(i, best_x)
                state.best_metric = best_val
                state.patience = 0
                improved_in_sweep = True
            else:
                state.patience += 1
                if state.patience >= n_steps:
                    searching = False
                    break
        if not improved_in_sweep:
            searching = False
    return SearchResult(state.best_schedule, state.best_metric, state.audit,
                        state.evaluations)


# ---------------------------------------------------------------------------
# the default metric: negated SWD of student samples against a reference set


def schedule_metric_swd(student, schedule: StepSchedule, reference: SampleBatch,
                        batch_size: int = 2048, seed: int = 0) -> float:
    """-SWD(student samples under the schedule, reference); higher is better.

    The starting noise and the generation conditions derive from ``seed``, so
    the same schedule always scores the same value.
    """
    from .distill import sample_student

    if len(reference) < 1:
        raise ValidationError("empty reference batch")
    rng = np.random.default_rng(seed)
    z0 = rng.standard_normal((batch_size, student.config.dim))
    cond = None
    if reference.labels is not None:
        n_classes = student.config.cond_vocab - 1
        cond = rng.integers(0, n_classes, size=batch_size)
    out = sample_student(student, z0, schedule, cond)
    return -swd(out, reference.points, seed=PROJECTION_SEED)


def make_swd_metric(student, batch_size: int = 2048, seed: int = 0):
    """Bind a student into the (schedule, dev) -> score contract."""

    def metric(schedule: StepSchedule, dev: SampleBatch) -> float:
        return schedule_metric_swd(student, schedule, dev, batch_size=batch_size, seed=seed)

    return metric
