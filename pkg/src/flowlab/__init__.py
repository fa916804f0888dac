"""flowlab: desk-scale flow matching with few-step distillation and step search."""

from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig, named_rng, stream_seed
from .datasets import DatasetSpec, sample_data
from .distill import (
    DistillConfig,
    TimeInterval,
    adapt_init,
    avg_velocity_target,
    sample_interval,
    sample_student,
    teacher_displacement,
    train_student,
)
from .errors import FlowLabError, NumericalError, ValidationError
from .estimators import AverageVelocityStudent, FlowMatchingTeacher, ScheduleSearch
from .flow import (
    CFGConfig,
    SampleBatch,
    StepSchedule,
    TeacherTrainConfig,
    cfm_loss,
    euler_step,
    interpolate,
    sample,
    train_teacher,
    velocity_cfg,
)
from .metrics import mmd_rbf, noise_floor, swd, wasserstein2_exact
from .nets import (
    DualTimeVelocityNet,
    NetConfig,
    OptimizerState,
    ParamStore,
    VelocityNet,
    optimizer_step,
    time_embed,
)
from .schedule_search import (
    SearchResult,
    make_swd_metric,
    schedule_metric_swd,
    search_schedule,
    ternary_search,
)

__version__ = "0.1.0"

__all__ = [
    "AverageVelocityStudent",
    "CFGConfig",
    "DatasetSpec",
    "DistillConfig",
    "DualTimeVelocityNet",
    "FlowLabError",
    "FlowMatchingTeacher",
    "NetConfig",
    "NumericalError",
    "OptimizerState",
    "ParamStore",
    "RunConfig",
    "SampleBatch",
    "ScheduleSearch",
    "SearchResult",
    "StepSchedule",
    "TeacherTrainConfig",
    "TimeInterval",
    "ValidationError",
    "VelocityNet",
    "adapt_init",
    "avg_velocity_target",
    "cfm_loss",
    "euler_step",
    "interpolate",
    "load_checkpoint",
    "make_swd_metric",
    "mmd_rbf",
    "named_rng",
    "noise_floor",
    "optimizer_step",
    "sample",
    "sample_data",
    "sample_interval",
    "sample_student",
    "save_checkpoint",
    "schedule_metric_swd",
    "search_schedule",
    "stream_seed",
    "swd",
    "teacher_displacement",
    "ternary_search",
    "time_embed",
    "train_student",
    "train_teacher",
    "velocity_cfg",
    "wasserstein2_exact",
]
