"""Config-driven experiment steps shared by the CLI and the acceptance suite.

Each step consumes a RunConfig, pulls its randomness from named seed streams,
and writes self-describing artifacts into the run directory. Given the same
config and seed, every output except wall-clock timings is byte-identical
across runs.
"""

from __future__ import annotations

import csv
import json
import time
from pathlib import Path

from . import artifacts
from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig, stream_seed
from .datasets import DatasetSpec, sample_data
from .distill import DistillConfig, adapt_init, sample_student, train_student
from .errors import ValidationError
from .flow import CFGConfig, SampleBatch, StepSchedule, TeacherTrainConfig, sample, train_teacher
from .metrics import mmd_rbf, mmd_rbf_raw, noise_floor, swd
from .nets import NetConfig, VelocityNet
from .schedule_search import make_swd_metric, search_schedule

TEACHER_SWEEP_NFE = (1, 2, 3, 4, 8, 16, 32)
STUDENT_SWEEP_NFE = (1, 2, 3, 4)


def dataset_spec(config: RunConfig) -> DatasetSpec:
    return DatasetSpec(name=config.dataset, noise=config.data_noise)


def net_config(config: RunConfig) -> NetConfig:
    spec = dataset_spec(config)
    return NetConfig(
        dim=spec.dim,
        hidden=config.hidden,
        time_dim=config.time_dim,
        cond_vocab=spec.n_classes + 1,
        cond_dim=config.cond_dim,
    )


def draw(config: RunConfig, stream: str, count: int) -> SampleBatch:
    """A deterministic dataset draw from a named stream."""
    return sample_data(dataset_spec(config), count, seed=stream_seed(config.seed, stream))


def teacher_eval_cfg(config: RunConfig) -> CFGConfig:
    """Guidance applied when sampling a teacher for evaluation."""
    if dataset_spec(config).n_classes == 0:
        return CFGConfig.disabled()
    return CFGConfig.with_weight(config.eval_guidance)


def _eval_conditions(config: RunConfig, count: int):
    spec = dataset_spec(config)
    if spec.n_classes == 0:
        return None
    return config.rng("eval-cond").integers(0, spec.n_classes, size=count)


def sample_model(config: RunConfig, net, schedule: StepSchedule, count: int | None = None):
    """Generate ``count`` points from a teacher or student checkpointed net."""
    count = config.eval_count if count is None else count
    z0 = config.rng("eval-noise").standard_normal((count, net.config.dim))
    cond = _eval_conditions(config, count)
    if net.dual_time:
        return sample_student(net, z0, schedule, cond)
    final, _ = sample(net, z0, schedule, cond, teacher_eval_cfg(config))
    return final


def evaluate_model(config: RunConfig, net, schedule: StepSchedule) -> dict:
    """Sample under the schedule and score against a held-out reference draw."""
    reference = draw(config, "eval-ref", config.eval_count)
    tic = time.perf_counter()
    points = sample_model(config, net, schedule)
    seconds = time.perf_counter() - tic
    floor = noise_floor(
        dataset_spec(config), config.eval_count, trials=config.floor_trials,
        seed=config.seed, n_projections=config.eval_projections,
    )
    return {
        "kind": "student" if net.dual_time else "teacher",
        "nfe": schedule.nfe,
        "schedule": schedule.times.tolist(),
        "swd": swd(points, reference.points, n_projections=config.eval_projections),
        "mmd": mmd_rbf(points, reference.points, config.mmd_bandwidth),
        "mmd_raw": mmd_rbf_raw(points, reference.points, config.mmd_bandwidth),
        "noise_floor": floor,
        "seconds": seconds,
    }


# ---------------------------------------------------------------------------
# pipeline steps


def gen_data_run(config: RunConfig, out_dir) -> dict:
    out = Path(out_dir)
    config.write_resolved(out)
    batch = draw(config, "data", config.train_count)
    path = artifacts.write_batch_csv(out / "data.csv", batch, config.to_dict())
    return {"data": path, "batch": batch}


def train_teacher_run(config: RunConfig, out_dir) -> dict:
    out = Path(out_dir)
    config.write_resolved(out)
    data = draw(config, "data", config.train_count)
    net = VelocityNet.initialize(net_config(config), config.rng("init"))
    train_cfg = TeacherTrainConfig(
        steps=config.teacher_steps,
        batch_size=config.teacher_batch,
        lr=config.teacher_lr,
        cond_dropout=config.cond_dropout,
    )
    net, losses = train_teacher(net, data, train_cfg, config.rng("train"))
    ckpt = save_checkpoint(
        out / "teacher.json", net, seed=config.seed,
        train_meta={"steps": config.teacher_steps, "config": config.to_dict()},
    )
    loss_csv = artifacts.write_loss_csv(out / "teacher_loss.csv", losses, config.to_dict())
    report = evaluate_model(config, net, StepSchedule.uniform(config.eval_nfe))
    return {"checkpoint": ckpt, "loss_csv": loss_csv, "net": net,
            "losses": losses, "report": report}


def distill_run(config: RunConfig, teacher, out_dir, teacher_nfe: int | None = None) -> dict:
    out = Path(out_dir)
    config.write_resolved(out)
    if isinstance(teacher, (str, Path)):
        teacher, _ = load_checkpoint(teacher, expect_kind="teacher")
    nfe = config.teacher_nfe if teacher_nfe is None else teacher_nfe
    data = draw(config, "distill-data", config.train_count)
    student = adapt_init(teacher)
    distill_cfg = DistillConfig(
        teacher_nfe=nfe,
        guidance=config.guidance if dataset_spec(config).n_classes > 0 else 0.0,
        eps_min=config.eps_min,
        steps=config.distill_steps,
        batch_size=config.distill_batch,
        lr=config.distill_lr,
        states_from_teacher=config.states_from_teacher,
    )
    student, losses, seconds = train_student(
        student, teacher, data, distill_cfg,
        config.rng("distill"), config.rng("intervals"),
    )
    ckpt = save_checkpoint(
        out / "student.json", student, seed=config.seed,
        train_meta={"teacher_nfe": nfe, "config": config.to_dict()},
    )
    loss_csv = artifacts.write_loss_csv(out / "student_loss.csv", losses, config.to_dict())
    timing_csv = artifacts.write_timing_csv(
        out / "student_timing.csv", seconds, nfe, config.to_dict()
    )
    return {"checkpoint": ckpt, "loss_csv": loss_csv, "timing_csv": timing_csv,
            "net": student, "losses": losses, "seconds": seconds}


def search_run(config: RunConfig, student, out_dir, nfe: int | None = None) -> dict:
    out = Path(out_dir)
    config.write_resolved(out)
    if isinstance(student, (str, Path)):
        student, _ = load_checkpoint(student, expect_kind="student")
    nfe = config.search_nfe if nfe is None else nfe
    dev = draw(config, "dev-ref", config.dev_count)
    metric = make_swd_metric(student, batch_size=config.search_batch,
                             seed=stream_seed(config.seed, "search"))
    result = search_schedule(metric, nfe, dev=dev, tol=config.search_tol,
                             bounds=config.search_bounds)
    schedule_path = artifacts.write_schedule(out / f"schedule_nfe{nfe}.json", result.schedule)
    audit_path = artifacts.write_audit_csv(
        out / f"search_audit_nfe{nfe}.csv", result.audit, config.to_dict()
    )
    return {"schedule": schedule_path, "audit": audit_path, "result": result}


def eval_run(config: RunConfig, model_path, out_dir,
             schedule: StepSchedule | None = None, nfe: int | None = None) -> dict:
    out = Path(out_dir)
    config.write_resolved(out)
    net, _ = load_checkpoint(model_path)
    if schedule is None:
        schedule = StepSchedule.uniform(nfe if nfe is not None else config.eval_nfe)
    report = evaluate_model(config, net, schedule)
    path = artifacts.write_json_report(
        out / f"eval_{report['kind']}_nfe{schedule.nfe}.json", report, config.to_dict()
    )
    return {"report": report, "path": path}


def sweep_run(config: RunConfig, teacher=None, student=None,
              student_schedules=(), out_dir=".") -> dict:
    """NFE sweep for the given models; returns plot-ready rows.

    ``student_schedules`` holds searched StepSchedules applied to the student
    in addition to its uniform grid.
    """
    out = Path(out_dir)
    config.write_resolved(out)
    rows = []
    models = []
    if teacher is not None:
        if isinstance(teacher, (str, Path)):
            teacher, _ = load_checkpoint(teacher, expect_kind="teacher")
        models.append(("teacher", teacher, TEACHER_SWEEP_NFE))
    if student is not None:
        if isinstance(student, (str, Path)):
            student, _ = load_checkpoint(student, expect_kind="student")
        models.append(("student", student, STUDENT_SWEEP_NFE))
    if not models:
        raise ValidationError("sweep needs at least one checkpoint")
    reference = draw(config, "eval-ref", config.eval_count)

    def score(net, schedule):
        points = sample_model(config, net, schedule)
        return (swd(points, reference.points, n_projections=config.eval_projections),
                mmd_rbf(points, reference.points, config.mmd_bandwidth))

    for name, net, grid in models:
        for nfe in grid:
            s, m = score(net, StepSchedule.uniform(nfe))
            rows.append({"model": name, "nfe": nfe, "schedule_kind": "uniform",
                         "swd": s, "mmd": m})
    if student is not None:
        for schedule in student_schedules:
            s, m = score(models[-1][1], schedule)
            rows.append({"model": "student", "nfe": schedule.nfe,
                         "schedule_kind": "searched", "swd": s, "mmd": m})

    path = out / "sweep.csv"
    with open(path, "w", newline="") as fh:
        fh.write(f"# flowlab-format {artifacts.ARTIFACT_FORMAT_VERSION} "
                 f"config {json.dumps(config.to_dict(), separators=(',', ':'))}\n")
        writer = csv.writer(fh)
        writer.writerow(["model", "nfe", "schedule_kind", "swd", "mmd"])
        for row in rows:
            writer.writerow([row["model"], row["nfe"], row["schedule_kind"],
                             repr(row["swd"]), repr(row["mmd"])])
    return {"rows": rows, "csv": path}
