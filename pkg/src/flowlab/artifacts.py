"""Readers and writers for run artifacts: CSV logs, schedules, reports.

Every CSV starts with a comment line carrying the format version and the
resolved config, so files remain self-describing; readers skip '#' lines.
Schedules are bare JSON float arrays so they can be passed between commands.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .flow import SampleBatch, StepSchedule

ARTIFACT_FORMAT_VERSION = 1


def _comment_line(config: dict | None) -> str:
    payload = json.dumps(config or {}, separators=(",", ":"))
    return f"# flowlab-format {ARTIFACT_FORMAT_VERSION} config {payload}"


def _open_csv(path, header, config):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fh = open(path, "w", newline="")
    fh.write(_comment_line(config) + "\n")
    writer = csv.writer(fh)
    writer.writerow(header)
    return fh, writer


def write_loss_csv(path, losses, config=None) -> Path:
    fh, writer = _open_csv(path, ["step", "loss"], config)
    with fh:
        for step, loss in enumerate(losses):
            writer.writerow([step, repr(float(loss))])
    return Path(path)


def write_timing_csv(path, seconds, teacher_nfe, config=None) -> Path:
    fh, writer = _open_csv(path, ["step", "seconds", "teacher_nfe"], config)
    with fh:
        for step, sec in enumerate(seconds):
            writer.writerow([step, repr(float(sec)), teacher_nfe])
    return Path(path)


def write_batch_csv(path, batch: SampleBatch, config=None) -> Path:
    header = [f"x{i}" for i in range(batch.dim)] + ["label"]
    fh, writer = _open_csv(path, header, config)
    with fh:
        for i in range(len(batch)):
            label = "" if batch.labels is None else int(batch.labels[i])
            writer.writerow([repr(float(v)) for v in batch.points[i]] + [label])
    return Path(path)


def read_batch_csv(path) -> SampleBatch:
    points, labels = [], []
    with open(path) as fh:
        rows = [r for r in csv.reader(line for line in fh if not line.startswith("#"))]
    header, body = rows[0], rows[1:]
    if not body:
        raise ValidationError(f"no data rows in {path}")
    for row in body:
        points.append([float(v) for v in row[:-1]])
        labels.append(int(row[-1]) if row[-1] != "" else None)
    labs = None if labels[0] is None else np.asarray(labels, dtype=np.int64)
    return SampleBatch(np.asarray(points), labs)


def write_audit_csv(path, audit, config=None) -> Path:
    fh, writer = _open_csv(
        path, ["eval_index", "schedule_json", "metric", "accepted", "m_best"], config
    )
    with fh:
        for rec in audit:
            writer.writerow(
                [
                    rec.eval_index,
                    json.dumps(list(rec.times)),
                    repr(float(rec.metric)),
                    int(rec.accepted),
                    repr(float(rec.best_metric)),
                ]
            )
    return Path(path)


def write_schedule(path, schedule: StepSchedule) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(schedule.times.tolist(), fh)
    return path


def read_schedule(path) -> StepSchedule:
    with open(path) as fh:
        values = json.load(fh)
    if not isinstance(values, list):
        raise ValidationError(f"schedule file {path} must hold a JSON array of floats")
    return StepSchedule(values)


def write_json_report(path, report: dict, config=None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = {"format_version": ARTIFACT_FORMAT_VERSION}
    if config is not None:
        doc["config"] = config
    doc.update(report)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)
    return path
