"""Scikit-learn style estimators wrapping the functional training loops.

These classes follow the fit/sample/score idiom of sklearn's generative
estimators (``GaussianMixture``, ``KernelDensity``), so they compose with
``clone``, ``get_params`` and pipeline-style tooling. Heavy lifting lives in
:mod:`flowlab.flow`, :mod:`flowlab.distill` and :mod:`flowlab.schedule_search`.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .config import named_rng
from .distill import DistillConfig, adapt_init, sample_student, train_student
from .errors import ValidationError
from .flow import CFGConfig, SampleBatch, StepSchedule, TeacherTrainConfig, sample, train_teacher
from .metrics import swd
from .nets import DualTimeVelocityNet, NetConfig, VelocityNet
from .schedule_search import make_swd_metric, search_schedule


def _check_labels(y, n_rows: int) -> np.ndarray:
    y = np.asarray(y)
    if y.shape != (n_rows,):
        raise ValidationError("y must hold one integer label per row of X")
    if not np.issubdtype(y.dtype, np.integer):
        if not np.all(y == y.astype(np.int64)):
            raise ValidationError("labels must be integers")
    y = y.astype(np.int64)
    if np.any(y < 0):
        raise ValidationError("labels must be non-negative")
    return y


class FlowMatchingTeacher(BaseEstimator):
    """Conditional flow-matching generator for low-dimensional data.

    Fits a velocity field v(z, t, c) by regressing on straight-path
    displacement targets, then generates by integrating the field from
    Gaussian noise over a time grid.

    Parameters
    ----------
    hidden : tuple of int, default=(128, 128, 128)
        Widths of the MLP trunk.
    time_dim : int, default=64
        Sinusoidal time-embedding width (even).
    cond_dim : int, default=16
        Width of the learned condition embedding.
    n_train_steps : int, default=10000
        Optimizer steps.
    batch_size : int, default=256
        Rows per step, resampled from the fitted data.
    learning_rate : float, default=1e-3
        Adam step size.
    cond_dropout : float, default=0.2
        Probability of replacing a label with the null token during training,
        which makes classifier-free guidance usable at inference.
    guidance : float, default=3.0
        Default guidance weight applied by :meth:`sample` on conditional data.
    random_state : int, default=0
        Root seed; initialization and training draw from named streams of it.

    Attributes
    ----------
    net_ : VelocityNet
        The trained velocity field.
    loss_curve_ : list of float
        Per-step training loss.
    n_features_in_ : int
        Data dimension d.
    n_classes_ : int
        Number of real condition labels seen in fit (0 when y is None).
    """

    def __init__(self, hidden=(128, 128, 128), time_dim=64, cond_dim=16,
                 n_train_steps=10000, batch_size=256, learning_rate=1e-3,
                 cond_dropout=0.2, guidance=3.0, random_state=0):
        self.hidden = hidden
        self.time_dim = time_dim
        self.cond_dim = cond_dim
        self.n_train_steps = n_train_steps
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.cond_dropout = cond_dropout
        self.guidance = guidance
        self.random_state = random_state

    def fit(self, X, y=None):
        """Train the velocity field on points X with optional integer labels y."""
        X = check_array(X, dtype=np.float64)
        labels = None if y is None else _check_labels(y, X.shape[0])
        self.n_classes_ = 0 if labels is None else int(labels.max()) + 1
        config = NetConfig(
            dim=X.shape[1], hidden=tuple(self.hidden), time_dim=self.time_dim,
            cond_vocab=self.n_classes_ + 1, cond_dim=self.cond_dim,
        )
        net = VelocityNet.initialize(config, named_rng(self.random_state, "init"))
        train_cfg = TeacherTrainConfig(
            steps=self.n_train_steps, batch_size=self.batch_size,
            lr=self.learning_rate, cond_dropout=self.cond_dropout,
        )
        net, losses = train_teacher(net, SampleBatch(X, labels), train_cfg,
                                    named_rng(self.random_state, "train"))
        self.net_ = net
        self.loss_curve_ = losses
        self.n_features_in_ = X.shape[1]
        return self

    def _generation_conditions(self, n_samples, condition, rng):
        if condition is None:
            if self.n_classes_ == 0:
                return None
            return rng.integers(0, self.n_classes_, size=n_samples)
        cond = np.asarray(condition)
        if cond.ndim == 0:
            cond = np.full(n_samples, int(cond))
        return cond

    def sample(self, n_samples=1, n_steps=32, condition=None, schedule=None,
               guidance=None, random_state=None):
        """Generate points by Euler integration over a time grid.

        Returns the (n_samples, d) array of generated points. ``condition``
        may be a single label, an array of labels, or None for labels drawn
        uniformly. ``guidance`` defaults to the fitted ``guidance`` weight on
        conditional models and is ignored on unconditional ones.
        """
        check_is_fitted(self, "net_")
        seed = self.random_state if random_state is None else random_state
        rng = named_rng(seed, "sample")
        if schedule is None:
            schedule = StepSchedule.uniform(n_steps)
        z0 = rng.standard_normal((n_samples, self.n_features_in_))
        cond = self._generation_conditions(n_samples, condition, rng)
        w = self.guidance if guidance is None else guidance
        cfg = CFGConfig.with_weight(w) if cond is not None else CFGConfig.disabled()
        final, _ = sample(self.net_, z0, schedule, cond, cfg)
        return final

    def score(self, X, y=None):
        """Negative sliced Wasserstein distance between samples and X."""
        check_is_fitted(self, "net_")
        X = check_array(X, dtype=np.float64)
        return -swd(self.sample(X.shape[0]), X)


class AverageVelocityStudent(BaseEstimator):
    """Few-step generator distilled from a fitted flow-matching teacher.

    The student predicts the teacher's average velocity over a time interval,
    learned by regressing on displacement targets that the teacher produces
    with a fixed number of integration sub-steps. Once fitted it generates in
    as little as one step.

    Parameters
    ----------
    teacher : FlowMatchingTeacher or VelocityNet
        The (fitted) teacher to distill.
    teacher_nfe : int, default=16
        Teacher integration sub-steps per target.
    guidance : float, default=3.0
        Guidance weight applied to the teacher while building targets; the
        student itself never uses guidance.
    n_train_steps, batch_size, learning_rate : training loop knobs.
    eps_min : float, default=1e-3
        Minimum training interval width.
    random_state : int, default=0

    Attributes
    ----------
    net_ : DualTimeVelocityNet
    loss_curve_ : list of float
    step_seconds_ : list of float
        Wall-clock seconds per training step.
    """

    def __init__(self, teacher=None, teacher_nfe=16, guidance=3.0,
                 n_train_steps=5000, batch_size=256, learning_rate=1e-3,
                 eps_min=1e-3, random_state=0):
        self.teacher = teacher
        self.teacher_nfe = teacher_nfe
        self.guidance = guidance
        self.n_train_steps = n_train_steps
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.eps_min = eps_min
        self.random_state = random_state

    def _teacher_net(self) -> VelocityNet:
        if isinstance(self.teacher, VelocityNet):
            return self.teacher
        if isinstance(self.teacher, FlowMatchingTeacher):
            check_is_fitted(self.teacher, "net_")
            return self.teacher.net_
        raise ValidationError("teacher must be a fitted FlowMatchingTeacher or a VelocityNet")

    def fit(self, X, y=None):
        """Distill the teacher on points X with optional integer labels y."""
        X = check_array(X, dtype=np.float64)
        labels = None if y is None else _check_labels(y, X.shape[0])
        teacher = self._teacher_net()
        if teacher.config.dim != X.shape[1]:
            raise ValidationError("X dimension does not match the teacher")
        student = adapt_init(teacher)
        conditional = teacher.config.cond_vocab > 1 and labels is not None
        config = DistillConfig(
            teacher_nfe=self.teacher_nfe,
            guidance=self.guidance if conditional else 0.0,
            eps_min=self.eps_min,
            steps=self.n_train_steps,
            batch_size=self.batch_size,
            lr=self.learning_rate,
        )
        student, losses, seconds = train_student(
            student, teacher, SampleBatch(X, labels), config,
            named_rng(self.random_state, "distill"),
            named_rng(self.random_state, "intervals"),
        )
        self.net_ = student
        self.loss_curve_ = losses
        self.step_seconds_ = seconds
        self.n_features_in_ = X.shape[1]
        self.n_classes_ = teacher.config.cond_vocab - 1
        return self

    def sample(self, n_samples=1, n_steps=1, condition=None, schedule=None,
               random_state=None):
        """Generate points in ``n_steps`` evaluations (default one)."""
        check_is_fitted(self, "net_")
        seed = self.random_state if random_state is None else random_state
        rng = named_rng(seed, "sample")
        if schedule is None:
            schedule = StepSchedule.uniform(n_steps)
        z0 = rng.standard_normal((n_samples, self.n_features_in_))
        cond = None
        if condition is not None:
            cond = np.asarray(condition)
            if cond.ndim == 0:
                cond = np.full(n_samples, int(cond))
        elif self.n_classes_ > 0:
            cond = rng.integers(0, self.n_classes_, size=n_samples)
        return sample_student(self.net_, z0, schedule, cond)

    def score(self, X, y=None):
        """Negative sliced Wasserstein distance between 1-step samples and X."""
        check_is_fitted(self, "net_")
        X = check_array(X, dtype=np.float64)
        return -swd(self.sample(X.shape[0]), X)


class ScheduleSearch(BaseEstimator):
    """Optimize a few-step sampling schedule for a fitted student.

    Runs coordinate-wise ternary search over the interior time points of an
    ``n_steps`` schedule, scoring each candidate by negated sliced Wasserstein
    distance between generated samples and the reference set passed to
    :meth:`fit`. Mirrors the ``best_*`` attribute idiom of sklearn searchers.

    Parameters
    ----------
    model : AverageVelocityStudent or DualTimeVelocityNet
    n_steps : int, default=3
    tol : float, default=1e-3
        Ternary bracket tolerance.
    batch_size : int, default=2048
        Samples generated per metric evaluation.
    bounds : {"wide", "below"}, default="wide"
        Bracket for moving point i: between both neighbours, or only below
        the current position.
    random_state : int, default=0

    Attributes
    ----------
    schedule_ : StepSchedule
    best_score_ : float
    audit_ : list of AuditRecord
    n_evaluations_ : int
    """

    def __init__(self, model=None, n_steps=3, tol=1e-3, batch_size=2048,
                 bounds="wide", random_state=0):
        self.model = model
        self.n_steps = n_steps
        self.tol = tol
        self.batch_size = batch_size
        self.bounds = bounds
        self.random_state = random_state

    def _student_net(self) -> DualTimeVelocityNet:
        if isinstance(self.model, DualTimeVelocityNet):
            return self.model
        if isinstance(self.model, AverageVelocityStudent):
            check_is_fitted(self.model, "net_")
            return self.model.net_
        raise ValidationError("model must be a fitted AverageVelocityStudent "
                              "or a DualTimeVelocityNet")

    def fit(self, X, y=None):
        """Search step placements against reference points X (labels y optional)."""
        X = check_array(X, dtype=np.float64)
        labels = None if y is None else _check_labels(y, X.shape[0])
        student = self._student_net()
        metric = make_swd_metric(student, batch_size=self.batch_size,
                                 seed=self.random_state)
        result = search_schedule(metric, self.n_steps, dev=SampleBatch(X, labels),
                                 tol=self.tol, bounds=self.bounds)
        self.schedule_ = result.schedule
        self.best_score_ = result.metric
        self.audit_ = result.audit
        self.n_evaluations_ = result.evaluations
        return self

    def transform(self, X=None):
        """Return the searched schedule times as an array."""
        check_is_fitted(self, "schedule_")
        return self.schedule_.times.copy()
