"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

The heavy artifacts (trained teacher, three distilled students, two searched
schedules) come from session fixtures in conftest, produced by the same
pipeline functions the CLI uses, under the default RunConfig and its root
seed. Everything here is deterministic given that configuration.
"""

import time

import numpy as np

import flowlab as fl
from flowlab import pipeline
from flowlab.distill import sample_student, teacher_displacement
from flowlab.flow import StepSchedule
from flowlab.metrics import swd
from flowlab.nets import mse_loss, mse_loss_grad
from flowlab.schedule_search import search_schedule, ternary_search

from conftest import dyadic_times, fd_gradient, rotation_field


# Criteria 6 and 9 compare SWD values that sit within ~0.01 of each other, so
# their curves are resolved at a larger sample count and projection count than
# the reporting default (the criteria pin tolerances, not evaluation sizes).
CURVE_COUNT = 16384
CURVE_PROJECTIONS = 512


def _report(criterion: str, ok: bool, detail: str):
    print(f"[{criterion}] {'PASS' if ok else 'FAIL'}: {detail}")
    assert ok, f"{criterion}: {detail}"


def _full_size_teacher(seed=123):
    config = fl.NetConfig(dim=2, hidden=(128, 128, 128), time_dim=64,
                          cond_vocab=9, cond_dim=16)
    return fl.VelocityNet.initialize(config, np.random.default_rng(seed))


def _curve_inputs(config):
    reference = pipeline.draw(config, "eval-ref", CURVE_COUNT)
    z0 = config.rng("eval-noise").standard_normal((CURVE_COUNT, 2))
    cond = config.rng("eval-cond").integers(0, 8, CURVE_COUNT)
    return reference, z0, cond


def _student_eval_curve(config, student, nfes=(1, 2, 3, 4)):
    reference, z0, cond = _curve_inputs(config)
    out = {}
    for n in nfes:
        points = sample_student(student, z0, StepSchedule.uniform(n), cond)
        out[n] = swd(points, reference.points, n_projections=CURVE_PROJECTIONS)
    return out


def _teacher_curve_swd(config, teacher):
    from flowlab.flow import sample

    reference, z0, cond = _curve_inputs(config)
    points, _ = sample(teacher, z0, StepSchedule.uniform(32), cond,
                       pipeline.teacher_eval_cfg(config))
    return swd(points, reference.points, n_projections=CURVE_PROJECTIONS)


# ---------------------------------------------------------------------------
# 1. gradient oracle


def test_criterion_01_gradient_oracle():
    tic = time.perf_counter()
    rng = np.random.default_rng(1)
    probes = 0
    worst = 0.0
    for dual in (False, True):
        cfg = fl.NetConfig(dim=2, hidden=(20, 16, 12), time_dim=8, cond_vocab=5, cond_dim=4)
        net = (fl.DualTimeVelocityNet if dual else fl.VelocityNet).initialize(cfg, rng)
        z = rng.standard_normal((24, 2))
        t = rng.random(24)
        r = t + (1 - t) * rng.random(24)
        c = rng.integers(0, 5, 24)  # includes the null row
        target = rng.standard_normal((24, 2))
        if dual:
            out, cache = net.forward_batch_cached(z, t, r, c)
            loss_fn = lambda: mse_loss(net.forward_batch(z, t, r, c), target)
        else:
            out, cache = net.forward_batch_cached(z, t, c)
            loss_fn = lambda: mse_loss(net.forward_batch(z, t, c), target)
        _, d_out = mse_loss_grad(out, target)
        grads = net.backward(cache, d_out)
        for name in net.params.names():
            arr = net.params[name]
            n_probes = max(6, min(10, arr.size))
            for flat in rng.integers(0, arr.size, size=n_probes):
                idx = np.unravel_index(int(flat), arr.shape)
                fd = fd_gradient(loss_fn, net.params, name, idx, h=1e-5)
                a = grads[name][idx]
                rel = abs(a - fd) / max(abs(a), abs(fd), 1e-4)
                worst = max(worst, rel)
                probes += 1
    elapsed = time.perf_counter() - tic
    _report(
        "criterion 1 gradient oracle",
        probes >= 100 and worst <= 1e-4 and elapsed < 60,
        f"{probes} probes over every layer type, worst rel err {worst:.2e}, {elapsed:.1f}s",
    )


# ---------------------------------------------------------------------------
# 2. adaptation identity


def test_criterion_02_adaptation_identity():
    teacher = _full_size_teacher()
    student = fl.adapt_init(teacher)
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(100):
        z = rng.standard_normal(2)
        t = rng.random()
        r = t + (1 - t) * rng.random()
        c = int(rng.integers(0, 9))
        diff = np.max(np.abs(student.forward(z, t, r, c) - teacher.forward(z, t, c)))
        worst = max(worst, diff)
    _report(
        "criterion 2 adaptation identity",
        worst <= 1e-12,
        f"max |student - teacher| over 100 probes = {worst:.3e}",
    )


# ---------------------------------------------------------------------------
# 3. integration oracle


def test_criterion_03_integration_oracle():
    tic = time.perf_counter()
    net = rotation_field()
    rng = np.random.default_rng(3)
    ratios = {8: [], 16: [], 32: []}
    for _ in range(50):
        z = rng.standard_normal((1, 2))
        t = rng.random() * 0.4
        r = t + 0.3 + rng.random() * (1 - t - 0.3)
        state = z[0].copy()
        h = (r - t) / 10_000
        for _ in range(10_000):
            state = state + h * np.array([-state[1], state[0]])
        oracle = (state - z[0]) / (r - t)
        err = {}
        for n in (8, 16, 32, 64):
            avg = teacher_displacement(net, z, (t, r), n)[0] / (r - t)
            err[n] = np.linalg.norm(avg - oracle)
        for n in (8, 16, 32):
            ratios[n].append(err[n] / err[2 * n])
    means = {n: float(np.mean(v)) for n, v in ratios.items()}
    ok = all(1.7 <= m <= 2.3 for m in means.values())
    elapsed = time.perf_counter() - tic
    _report(
        "criterion 3 integration oracle",
        ok and elapsed < 60,
        f"mean error ratios n->2n: { {n: round(m, 3) for n, m in means.items()} }, {elapsed:.1f}s",
    )


# ---------------------------------------------------------------------------
# 4. interval additivity


def test_criterion_04_interval_additivity():
    teacher = _full_size_teacher(seed=4)
    cfg = fl.CFGConfig.with_weight(3.0)
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(100):
        t, r = dyadic_times(rng)
        s = (t + r) / 2
        n = int(rng.integers(1, 6))
        z = rng.standard_normal((1, 2))
        c = rng.integers(0, 8, 1)
        fine = teacher_displacement(teacher, z, (t, r), 2 * n, c, cfg)[0]
        first = teacher_displacement(teacher, z, (t, s), n, c, cfg)[0]
        second = teacher_displacement(teacher, (z[0] + first)[None, :], (s, r), n, c, cfg)[0]
        worst = max(worst, float(np.max(np.abs(fine - (first + second)))))
    _report(
        "criterion 4 interval additivity",
        worst <= 1e-12,
        f"max composition defect over 100 dyadic (z,t,s,r) = {worst:.3e}",
    )


# ---------------------------------------------------------------------------
# 5. teacher quality


def test_criterion_05_teacher_quality(acceptance_config, teacher_bundle):
    report = teacher_bundle["report"]
    ratio = report["swd"] / report["noise_floor"]
    ok = (
        acceptance_config.teacher_steps <= 20_000
        and report["nfe"] == 32
        and ratio <= 3.0
    )
    _report(
        "criterion 5 teacher quality",
        ok,
        f"32-NFE SWD {report['swd']:.4f} = {ratio:.2f}x noise floor "
        f"{report['noise_floor']:.4f} after {acceptance_config.teacher_steps} steps",
    )


# ---------------------------------------------------------------------------
# 6. distillation headline


def test_criterion_06_distillation_headline(acceptance_config, teacher_bundle,
                                            student_bundles):
    from flowlab.metrics import noise_floor

    teacher32 = _teacher_curve_swd(acceptance_config, teacher_bundle["net"])
    floor = noise_floor(pipeline.dataset_spec(acceptance_config), CURVE_COUNT,
                        trials=6, seed=acceptance_config.seed,
                        n_projections=CURVE_PROJECTIONS)
    curve = _student_eval_curve(acceptance_config, student_bundles[16]["net"])
    seq = [curve[n] for n in (1, 2, 3, 4)]
    increases = [seq[k + 1] - seq[k] for k in range(3) if seq[k + 1] > seq[k]]
    shape_ok = len(increases) <= 1 and all(d <= floor for d in increases)
    ok = curve[3] <= 1.5 * teacher32 and curve[1] <= 3.0 * teacher32 and shape_ok
    detail = (
        f"student SWD {('/'.join(f'{curve[n]:.4f}' for n in (1, 2, 3, 4)))} vs "
        f"teacher32 {teacher32:.4f}; 3-NFE ratio {curve[3] / teacher32:.2f} (<=1.5), "
        f"1-NFE ratio {curve[1] / teacher32:.2f} (<=3.0), "
        f"increases {['%.4f' % d for d in increases]} (floor {floor:.4f})"
    )
    _report("criterion 6 distillation headline", ok, detail)


# ---------------------------------------------------------------------------
# 7. schedule search effectiveness


def test_criterion_07_search_effectiveness(search_bundles):
    improvements = {}
    monotone = True
    for nfe, bundle in search_bundles.items():
        result = bundle["result"]
        uniform_metric = result.audit[0].metric  # the seeded incumbent
        improvements[nfe] = result.metric - uniform_metric
        best = [rec.best_metric for rec in result.audit]
        monotone = monotone and all(b >= a for a, b in zip(best[:-1], best[1:]))
    ok = (
        all(v >= 0 for v in improvements.values())
        and any(v > 0 for v in improvements.values())
        and monotone
    )
    _report(
        "criterion 7 search effectiveness",
        ok,
        f"metric improvement over uniform: "
        f"{ {n: round(v, 5) for n, v in improvements.items()} }, audit monotone: {monotone}",
    )


# ---------------------------------------------------------------------------
# 8. ternary search and planted optima


def test_criterion_08_ternary_and_planted_search():
    rng = np.random.default_rng(8)
    worst_1d = 0.0
    for i in range(20):
        lo = rng.random() * 0.3
        hi = lo + 0.4 + rng.random() * 0.3
        peak = lo + (0.1 + 0.8 * rng.random()) * (hi - lo)
        if i % 2 == 0:
            f = (lambda p: lambda x: -((x - p) ** 2))(peak)
        else:
            f = (lambda p: lambda x: -abs(x - p))(peak)
        x, _ = ternary_search(f, lo, hi, tol=1e-4, max_iter=60)
        worst_1d = max(worst_1d, abs(x - peak))

    worst_nd = 0.0
    for n in (2, 3, 4):
        planted = np.sort(0.15 + 0.7 * rng.random(n - 1))
        while np.any(np.diff(planted) < 0.08):
            planted = np.sort(0.15 + 0.7 * rng.random(n - 1))

        def metric(schedule, dev=None, p=planted):
            return -float(np.sum((schedule.times[1:-1] - p) ** 2))

        result = search_schedule(metric, n, tol=1e-4)
        worst_nd = max(worst_nd, float(np.max(np.abs(result.schedule.times[1:-1] - planted))))
    _report(
        "criterion 8 ternary and planted search",
        worst_1d <= 1e-3 and worst_nd <= 5e-3,
        f"1-D worst |x - argmax| {worst_1d:.2e} (<=1e-3), "
        f"coordinate-search worst {worst_nd:.2e} (<=5e-3)",
    )


# ---------------------------------------------------------------------------
# 9. teacher-NFE ablation


def test_criterion_09_teacher_nfe_ablation(acceptance_config, student_bundles):
    swd3 = {}
    med = {}
    for tnfe, bundle in student_bundles.items():
        swd3[tnfe] = _student_eval_curve(acceptance_config, bundle["net"], nfes=(3,))[3]
        med[tnfe] = float(np.median(bundle["seconds"][10:]))
    ok = swd3[16] <= swd3[2] and med[2] < med[4] < med[16]
    _report(
        "criterion 9 teacher-NFE ablation",
        ok,
        f"3-NFE SWD tnfe16 {swd3[16]:.4f} <= tnfe2 {swd3[2]:.4f}; "
        f"median s/step {med[2]:.4f} < {med[4]:.4f} < {med[16]:.4f}",
    )


# ---------------------------------------------------------------------------
# 10. determinism


def test_criterion_10_determinism(acceptance_config, teacher_bundle, student_bundles,
                                  search_bundles, run_root):
    rerun_root = run_root / "rerun"
    teacher2 = pipeline.train_teacher_run(acceptance_config, rerun_root / "teacher")
    same = [
        teacher_bundle["checkpoint"].read_bytes() == teacher2["checkpoint"].read_bytes(),
        teacher_bundle["loss_csv"].read_bytes() == teacher2["loss_csv"].read_bytes(),
    ]
    r1 = dict(teacher_bundle["report"])
    r2 = dict(teacher2["report"])
    r1.pop("seconds"), r2.pop("seconds")
    same.append(r1 == r2)

    student2 = pipeline.distill_run(acceptance_config, teacher2["net"],
                                    rerun_root / "student", teacher_nfe=16)
    same.append(
        student_bundles[16]["checkpoint"].read_bytes() == student2["checkpoint"].read_bytes()
    )
    same.append(
        student_bundles[16]["loss_csv"].read_bytes() == student2["loss_csv"].read_bytes()
    )

    for nfe in (2, 3):
        search2 = pipeline.search_run(acceptance_config, student2["net"],
                                      rerun_root / f"search{nfe}", nfe=nfe)
        same.append(
            search_bundles[nfe]["schedule"].read_bytes() == search2["schedule"].read_bytes()
        )
        same.append(
            search_bundles[nfe]["audit"].read_bytes() == search2["audit"].read_bytes()
        )
    _report(
        "criterion 10 determinism",
        all(same),
        f"byte-identical reruns of criteria 5-7 artifacts: {same}",
    )


# ---------------------------------------------------------------------------
# protocol extras exercised on the session artifacts


def test_sweep_protocol_rows_and_flattening(acceptance_config, teacher_bundle,
                                            student_bundles, search_bundles, run_root):
    from flowlab.artifacts import read_schedule

    schedules = [read_schedule(search_bundles[n]["schedule"]) for n in (2, 3)]
    result = pipeline.sweep_run(
        acceptance_config,
        teacher=teacher_bundle["net"],
        student=student_bundles[16]["net"],
        student_schedules=schedules,
        out_dir=run_root / "sweep",
    )
    rows = result["rows"]
    assert len(rows) == 7 + 4 + 2
    teacher_swd = {r["nfe"]: r["swd"] for r in rows if r["model"] == "teacher"}
    assert abs(teacher_swd[16] - teacher_swd[32]) <= 0.15 * teacher_swd[32]
    assert teacher_swd[1] >= teacher_swd[32]
    searched = {r["nfe"]: r["swd"] for r in rows
                if r["model"] == "student" and r["schedule_kind"] == "searched"}
    uniform = {r["nfe"]: r["swd"] for r in rows
               if r["model"] == "student" and r["schedule_kind"] == "uniform"}
    assert searched[3] <= uniform[3] + 1e-12
    floor = teacher_bundle["report"]["noise_floor"]
    seq = [uniform[n] for n in (1, 2, 3, 4)]
    increases = [b - a for a, b in zip(seq[:-1], seq[1:]) if b > a]
    assert len(increases) <= 1 and all(d <= floor for d in increases), seq


def test_guided_protocol_invariants(acceptance_config, teacher_bundle):
    """The guided (weight 3.0) teacher inference protocol, end to end.

    Guidance sharpens conditional adherence while distorting the overall
    distribution; these checks pin the qualitative contract: the guided
    teacher still lands within 3x the noise floor at 32 steps, degrades
    sharply at 1 step, and concentrates essentially all mass in the right
    mode's cell.
    """
    from flowlab.datasets import gauss8_centers
    from flowlab.flow import sample

    config = acceptance_config
    reference = pipeline.draw(config, "eval-ref", config.eval_count)
    z0 = config.rng("eval-noise").standard_normal((config.eval_count, 2))
    cond = config.rng("eval-cond").integers(0, 8, config.eval_count)
    guided = fl.CFGConfig.with_weight(3.0)
    floor = teacher_bundle["report"]["noise_floor"]

    out32, _ = sample(teacher_bundle["net"], z0, StepSchedule.uniform(32), cond, guided)
    out1, _ = sample(teacher_bundle["net"], z0, StepSchedule.uniform(1), cond, guided)
    swd32 = swd(out32, reference.points, n_projections=config.eval_projections)
    swd1 = swd(out1, reference.points, n_projections=config.eval_projections)
    assert swd32 <= 3.0 * floor
    assert swd1 >= swd32

    centers = gauss8_centers()
    d2 = np.sum((out32[:, None, :] - centers[None, :, :]) ** 2, axis=2)
    assert np.mean(np.argmin(d2, axis=1) == cond) >= 0.99


def test_label_conditioning_concentrates_mass(acceptance_config, teacher_bundle):
    config = acceptance_config
    cond = config.rng("eval-cond").integers(0, 8, 2048)  # matches sample_model's draw
    points = pipeline.sample_model(config, teacher_bundle["net"],
                                   StepSchedule.uniform(32), count=2048)
    from flowlab.datasets import gauss8_centers

    centers = gauss8_centers()
    d2 = np.sum((points[:, None, :] - centers[None, :, :]) ** 2, axis=2)
    frac = float(np.mean(np.argmin(d2, axis=1) == cond))
    assert frac >= 0.90


def test_teacher_loss_curve_decreases(teacher_bundle):
    losses = teacher_bundle["losses"]
    k = len(losses) // 10
    assert np.mean(losses[-k:]) < np.mean(losses[:k])


def test_student_loss_curve_decreases(student_bundles):
    losses = student_bundles[16]["losses"]
    k = len(losses) // 10
    assert np.mean(losses[-k:]) < np.mean(losses[:k])
