"""Shared fixtures and helpers.

The expensive artifacts (trained teacher, distilled students, searched
schedules) are session fixtures computed once through the same pipeline
functions the CLI uses, so acceptance checks exercise the production path.
"""

from __future__ import annotations

import dataclasses

import numpy as np
import pytest

import flowlab as fl
from flowlab import pipeline
from flowlab.config import RunConfig


# ---------------------------------------------------------------------------
# small helpers importable from test modules (via ``from conftest import ...``)


class FieldNet:
    """Duck-typed stand-in for a teacher: an analytic velocity field."""

    dual_time = False

    def __init__(self, fn, dim=2):
        self.fn = fn
        self.config = fl.NetConfig(dim=dim, hidden=(4,), time_dim=4, cond_vocab=1, cond_dim=2)

    def forward_batch(self, z, t, cond=None):
        z = np.asarray(z, dtype=np.float64)
        t = np.broadcast_to(np.asarray(t, dtype=np.float64), (z.shape[0],))
        return self.fn(z, t)


def constant_field(v):
    v = np.asarray(v, dtype=np.float64)
    return FieldNet(lambda z, t: np.broadcast_to(v, z.shape).copy(), dim=v.size)


def rotation_field():
    """v(z, t) = (-z2, z1); the exact flow rotates by the elapsed time."""
    return FieldNet(lambda z, t: np.stack([-z[:, 1], z[:, 0]], axis=1))


def small_teacher(seed=0, dim=2, cond_vocab=9):
    cfg = fl.NetConfig(dim=dim, hidden=(24, 24), time_dim=8, cond_vocab=cond_vocab, cond_dim=4)
    return fl.VelocityNet.initialize(cfg, np.random.default_rng(seed))


def fd_gradient(loss_fn, params: fl.ParamStore, name: str, index, h=1e-5):
    """Central finite difference of loss_fn() along one parameter entry."""
    arr = params[name]
    orig = arr[index]
    arr[index] = orig + h
    up = loss_fn()
    arr[index] = orig - h
    down = loss_fn()
    arr[index] = orig
    return (up - down) / (2 * h)


def dyadic_times(rng, denom=256):
    """Random (t, r) on a power-of-two lattice, so midpoints are float-exact."""
    a = int(rng.integers(0, denom - 8))
    b = int(rng.integers(a + 8, denom + 1))
    return a / denom, b / denom


# ---------------------------------------------------------------------------
# session-scoped acceptance artifacts


@pytest.fixture(scope="session")
def acceptance_config() -> RunConfig:
    """Configuration for the quantitative acceptance runs.

    Guidance amplifies conditional adherence at a measured cost in
    distribution fidelity (the guided flow's endpoint distribution carries a
    fixed SWD bias an order of magnitude above the sampling noise floor), so
    the distance-based quality criteria run in the unguided regime, where
    sliced-Wasserstein comparisons across NFE budgets are meaningful. The
    guided inference protocol keeps its own end-to-end checks in
    test_acceptance.test_guided_protocol_invariants.
    """
    return dataclasses.replace(RunConfig(), guidance=0.0, eval_guidance=0.0)


@pytest.fixture(scope="session")
def run_root(tmp_path_factory):
    return tmp_path_factory.mktemp("acceptance")


@pytest.fixture(scope="session")
def teacher_bundle(acceptance_config, run_root):
    out = run_root / "teacher"
    result = pipeline.train_teacher_run(acceptance_config, out)
    result["out"] = out
    return result


@pytest.fixture(scope="session")
def student_bundles(acceptance_config, teacher_bundle, run_root):
    bundles = {}
    for tnfe in (16, 4, 2):
        out = run_root / f"student_tnfe{tnfe}"
        result = pipeline.distill_run(
            acceptance_config, teacher_bundle["net"], out, teacher_nfe=tnfe
        )
        result["out"] = out
        bundles[tnfe] = result
    return bundles


@pytest.fixture(scope="session")
def search_bundles(acceptance_config, student_bundles, run_root):
    bundles = {}
    for nfe in (2, 3):
        out = run_root / f"search_nfe{nfe}"
        result = pipeline.search_run(
            acceptance_config, student_bundles[16]["net"], out, nfe=nfe
        )
        result["out"] = out
        bundles[nfe] = result
    return bundles
