"""Command-line experiment harness.

Commands: gen-data, train-teacher, distill, o3s, sample, eval, sweep.
Exit codes: 0 success, 1 validation or configuration error, 2 numerical
failure. The FLOWLAB_OUT environment variable overrides the output root for
relative --out paths.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from . import artifacts, pipeline
from .checkpoint import load_checkpoint
from .config import RunConfig
from .errors import NumericalError, ValidationError
from .flow import StepSchedule


class _Parser(argparse.ArgumentParser):
    # argparse exits with code 2 on bad flags; route through validation instead
    def error(self, message):
        raise ValidationError(message)


def _resolve_out(out: str | None, config: RunConfig) -> Path:
    raw = Path(out if out is not None else config.out_dir)
    if raw.is_absolute():
        return raw
    return Path(os.environ.get("FLOWLAB_OUT", ".")) / raw


def _load_config(args) -> RunConfig:
    config = RunConfig.from_file(args.config) if args.config else RunConfig()
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "teacher_nfe", None) is not None:
        overrides["teacher_nfe"] = args.teacher_nfe
    if getattr(args, "nfe", None) is not None and args.command == "o3s":
        overrides["search_nfe"] = args.nfe
    return config.override(**overrides)


def _schedule_from_args(args, config: RunConfig) -> StepSchedule | None:
    if getattr(args, "schedule", None):
        return artifacts.read_schedule(args.schedule)
    if getattr(args, "nfe", None) is not None:
        return StepSchedule.uniform(args.nfe)
    return None


def _cmd_gen_data(args) -> int:
    config = _load_config(args)
    out = _resolve_out(args.out, config)
    result = pipeline.gen_data_run(config, out)
    print(f"wrote {len(result['batch'])} points to {result['data']}")
    return 0


def _cmd_train_teacher(args) -> int:
    config = _load_config(args)
    out = _resolve_out(args.out, config)
    result = pipeline.train_teacher_run(config, out)
    report = result["report"]
    print(f"teacher checkpoint: {result['checkpoint']}")
    print(
        f"swd@{report['nfe']}nfe {report['swd']:.4f} "
        f"(noise floor {report['noise_floor']:.4f})"
    )
    return 0


def _cmd_distill(args) -> int:
    config = _load_config(args)
    out = _resolve_out(args.out, config)
    if not args.teacher:
        raise ValidationError("distill requires --teacher PATH")
    result = pipeline.distill_run(config, args.teacher, out)
    print(f"student checkpoint: {result['checkpoint']}")
    if result["seconds"]:
        import statistics

        median = statistics.median(result["seconds"][10:] or result["seconds"])
        print(f"teacher_nfe {config.teacher_nfe}, median s/step {median:.4f}")
    return 0


def _cmd_o3s(args) -> int:
    config = _load_config(args)
    out = _resolve_out(args.out, config)
    if not args.student:
        raise ValidationError("o3s requires --student PATH")
    result = pipeline.search_run(config, args.student, out)
    res = result["result"]
    print(f"schedule: {result['schedule']}")
    print(f"metric {res.metric:.6f} after {res.evaluations} evaluations")
    return 0


def _cmd_sample(args) -> int:
    config = _load_config(args)
    out = _resolve_out(args.out, config)
    config.write_resolved(out)
    path = args.student or args.teacher
    if not path:
        raise ValidationError("sample requires --teacher or --student PATH")
    net, _ = load_checkpoint(path)
    schedule = _schedule_from_args(args, config) or StepSchedule.uniform(config.eval_nfe)
    points = pipeline.sample_model(config, net, schedule, count=args.count)
    from .flow import SampleBatch

    csv_path = artifacts.write_batch_csv(out / "samples.csv", SampleBatch(points),
                                         config.to_dict())
    print(f"wrote {points.shape[0]} samples to {csv_path}")
    return 0


def _cmd_eval(args) -> int:
    config = _load_config(args)
    out = _resolve_out(args.out, config)
    path = args.student or args.teacher
    if not path:
        raise ValidationError("eval requires --teacher or --student PATH")
    schedule = _schedule_from_args(args, config)
    result = pipeline.eval_run(config, path, out, schedule=schedule,
                               nfe=getattr(args, "nfe", None))
    report = result["report"]
    print(
        f"{report['kind']} nfe {report['nfe']}: swd {report['swd']:.4f}, "
        f"mmd {report['mmd']:.6f}, floor {report['noise_floor']:.4f}"
    )
    print(f"report: {result['path']}")
    return 0


def _cmd_sweep(args) -> int:
    config = _load_config(args)
    out = _resolve_out(args.out, config)
    schedules = [artifacts.read_schedule(p) for p in (args.schedule_list or [])]
    result = pipeline.sweep_run(config, teacher=args.teacher, student=args.student,
                                student_schedules=schedules, out_dir=out)
    print(f"wrote {len(result['rows'])} rows to {result['csv']}")
    return 0


_COMMANDS = {
    "gen-data": _cmd_gen_data,
    "train-teacher": _cmd_train_teacher,
    "distill": _cmd_distill,
    "o3s": _cmd_o3s,
    "sample": _cmd_sample,
    "eval": _cmd_eval,
    "sweep": _cmd_sweep,
}


def build_parser() -> _Parser:
    parser = _Parser(prog="flowlab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=str, default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", type=str, default=None)
        p.add_argument("--teacher", type=str, default=None)
        p.add_argument("--student", type=str, default=None)
        p.add_argument("--nfe", type=int, default=None)
        p.add_argument("--teacher-nfe", dest="teacher_nfe", type=int, default=None)
        p.add_argument("--count", type=int, default=None)
        if name == "sweep":
            p.add_argument("--schedule", dest="schedule_list", action="append", default=None)
        else:
            p.add_argument("--schedule", type=str, default=None)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return _COMMANDS[args.command](args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
