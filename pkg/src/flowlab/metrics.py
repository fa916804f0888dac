"""Distribution distances for evaluating generated batches.

The workhorse is the sliced Wasserstein distance: the mean, over seeded random
unit directions, of the 1-D 2-Wasserstein distance between the projected
samples. It is O(n log n) per projection and deterministic given the
projection seed, which keeps scores comparable across runs. An exact
assignment-based W2 is provided for small n as an independent cross-check.
"""

from __future__ import annotations

import numpy as np

from .datasets import DatasetSpec, sample_data
from .errors import ValidationError

PROJECTION_SEED = 17
DEFAULT_PROJECTIONS = 256


def _as_matrix(x, name: str) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 1:
        raise ValidationError(f"{name} must be a non-empty (n, d) matrix")
    return x


def unit_directions(n: int, dim: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    raw = rng.standard_normal((n, dim))
    return raw / np.linalg.norm(raw, axis=1, keepdims=True)


def swd(a, b, n_projections: int = DEFAULT_PROJECTIONS, seed: int = PROJECTION_SEED) -> float:
    """Sliced 2-Wasserstein distance between two point sets.

    Unequal sizes are truncated to the smaller count. Per direction u the
    distance is sqrt(mean((sort(a.u) - sort(b.u))^2)); the result averages
    that over ``n_projections`` seeded unit directions.
    """
    a = _as_matrix(a, "a")
    b = _as_matrix(b, "b")
    if a.shape[1] != b.shape[1]:
        raise ValidationError("point sets must share a dimension")
    n = min(a.shape[0], b.shape[0])
    a, b = a[:n], b[:n]
    dirs = unit_directions(n_projections, a.shape[1], seed)
    pa = np.sort(a @ dirs.T, axis=0)
    pb = np.sort(b @ dirs.T, axis=0)
    return float(np.mean(np.sqrt(np.mean((pa - pb) ** 2, axis=0))))


def mmd_rbf_raw(a, b, bandwidth: float) -> float:
    """Unbiased MMD^2 estimate with a Gaussian kernel; may be slightly negative.

    For equally sized sets the paired U-statistic (cross diagonal excluded) is
    used, so identical sets score exactly zero; unequal sizes fall back to the
    all-pairs cross term.
    """
    if bandwidth <= 0:
        raise ValidationError("bandwidth must be > 0")
    a = _as_matrix(a, "a")
    b = _as_matrix(b, "b")
    n, m = a.shape[0], b.shape[0]
    if n < 2 or m < 2:
        raise ValidationError("unbiased MMD needs at least 2 points per set")
    gamma = 1.0 / (2.0 * bandwidth**2)

    def _sq_dists(x, y):
        return (
            np.sum(x**2, axis=1)[:, None]
            + np.sum(y**2, axis=1)[None, :]
            - 2.0 * (x @ y.T)
        )

    kaa = np.exp(-gamma * _sq_dists(a, a))
    kbb = np.exp(-gamma * _sq_dists(b, b))
    kab = np.exp(-gamma * _sq_dists(a, b))
    term_aa = (kaa.sum() - np.trace(kaa)) / (n * (n - 1))
    term_bb = (kbb.sum() - np.trace(kbb)) / (m * (m - 1))
    if n == m:
        cross = (kab.sum() - np.trace(kab)) / (n * (n - 1))
    else:
        cross = kab.mean()
    return float(term_aa + term_bb - 2.0 * cross)


def mmd_rbf(a, b, bandwidth: float = 1.0) -> float:
    """Unbiased MMD^2, clamped at zero for reporting."""
    return max(0.0, mmd_rbf_raw(a, b, bandwidth))


def noise_floor(spec: DatasetSpec, count: int, trials: int = 8, seed: int = 0,
                n_projections: int = DEFAULT_PROJECTIONS) -> float:
    """Mean SWD between independent same-size draws of the true distribution.

    This is the irreducible metric level at the given sample size; quality
    thresholds elsewhere are expressed as multiples of it.
    """
    if trials < 3:
        raise ValidationError("need at least 3 trials for a stable floor")
    values = []
    for i in range(trials):
        sa = sample_data(spec, count, seed=_derive_seed(seed, 2 * i))
        sb = sample_data(spec, count, seed=_derive_seed(seed, 2 * i + 1))
        values.append(swd(sa.points, sb.points, n_projections=n_projections))
    return float(np.mean(values))


def _derive_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


def wasserstein2_exact(a, b) -> float:
    """Exact 2-Wasserstein distance via optimal assignment; small n only.

    Intended as a test oracle for SWD orderings, so it refuses n > 64.
    """
    from scipy.optimize import linear_sum_assignment

    a = _as_matrix(a, "a")
    b = _as_matrix(b, "b")
    if a.shape != b.shape:
        raise ValidationError("exact W2 needs equally sized sets")
    if a.shape[0] > 64:
        raise ValidationError("exact W2 is a small-n oracle; use swd for n > 64")
    cost = np.sum((a[:, None, :] - b[None, :, :]) ** 2, axis=2)
    rows, cols = linear_sum_assignment(cost)
    return float(np.sqrt(cost[rows, cols].mean()))
