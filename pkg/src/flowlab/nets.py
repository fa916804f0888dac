"""Velocity-field networks with hand-written forward/backward passes.

Everything runs on float64 numpy arrays. A network is a tiny MLP over
``concat(z, time features, condition embedding)``; the dual-time variant
feeds two times through the same sinusoidal embedding and mixes them with
a learned projection. Gradients are computed by explicit backprop against
a cache recorded during the forward pass, so results are bit-reproducible
and easy to check against finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericalError, ValidationError

FREQ_MIN = 1.0
FREQ_MAX = 1000.0


# ---------------------------------------------------------------------------
# activations and small numerics helpers


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # tanh form: overflow-free and a single transcendental call
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def silu(x: np.ndarray) -> np.ndarray:
    return x * _sigmoid(x)


def silu_grad(x: np.ndarray) -> np.ndarray:
    s = _sigmoid(x)
    return s * (1.0 + x * (1.0 - s))


def mse_loss(pred: np.ndarray, target: np.ndarray) -> float:
    """Mean over rows of the squared Euclidean error."""
    return float(np.mean(np.sum((pred - target) ** 2, axis=1)))


def mse_loss_grad(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """mse_loss plus its gradient with respect to ``pred``."""
    diff = pred - target
    loss = float(np.mean(np.sum(diff**2, axis=1)))
    return loss, (2.0 / pred.shape[0]) * diff


# ---------------------------------------------------------------------------
# time embedding


_FREQ_CACHE: dict[int, np.ndarray] = {}


def embed_frequencies(m: int) -> np.ndarray:
    if m < 2 or m % 2 != 0:
        raise ValidationError(f"time embedding width must be a positive even integer, got {m}")
    cached = _FREQ_CACHE.get(m)
    if cached is None:
        half = m // 2
        if half == 1:
            cached = np.array([FREQ_MIN])
        else:
            cached = FREQ_MIN * (FREQ_MAX / FREQ_MIN) ** (np.arange(half) / (half - 1))
        cached.flags.writeable = False
        _FREQ_CACHE[m] = cached
    return cached


def time_embed_batch(ts: np.ndarray, m: int) -> np.ndarray:
    """Map times (B,) to interleaved [sin(w_k t), cos(w_k t)] features (B, m).

    Frequencies w_k are geometrically spaced over [FREQ_MIN, FREQ_MAX], so every
    component lies in [-1, 1] and t=0 maps to [0, 1, 0, 1, ...].
    """
    omega = embed_frequencies(m)
    args = np.asarray(ts, dtype=np.float64).reshape(-1, 1) * omega
    out = np.empty((args.shape[0], m))
    out[:, 0::2] = np.sin(args)
    out[:, 1::2] = np.cos(args)
    return out


def time_embed(t: float, m: int) -> np.ndarray:
    return time_embed_batch(np.array([t]), m)[0]


# ---------------------------------------------------------------------------
# parameters


class ParamStore:
    """Insertion-ordered map of name -> float64 array with immutable shapes."""

    def __init__(self):
        self._arrays: dict[str, np.ndarray] = {}

    def add(self, name: str, value) -> None:
        if name in self._arrays:
            raise ValidationError(f"duplicate parameter name {name!r}")
        self._arrays[name] = np.array(value, dtype=np.float64)

    def __getitem__(self, name: str) -> np.ndarray:
        return self._arrays[name]

    def __setitem__(self, name: str, value) -> None:
        if name not in self._arrays:
            raise ValidationError(f"unknown parameter {name!r}; shapes are fixed at creation")
        value = np.asarray(value, dtype=np.float64)
        if value.shape != self._arrays[name].shape:
            raise ValidationError(
                f"shape mismatch for parameter {name!r}: "
                f"{value.shape} vs {self._arrays[name].shape}"
            )
        self._arrays[name] = value

    def __contains__(self, name: str) -> bool:
        return name in self._arrays

    def __iter__(self):
        return iter(self._arrays)

    def __len__(self) -> int:
        return len(self._arrays)

    def names(self) -> list[str]:
        return list(self._arrays)

    def items(self):
        return self._arrays.items()

    def copy(self) -> "ParamStore":
        out = ParamStore()
        for name, arr in self._arrays.items():
            out.add(name, arr.copy())
        return out

    def zeros_like(self) -> "ParamStore":
        out = ParamStore()
        for name, arr in self._arrays.items():
            out.add(name, np.zeros_like(arr))
        return out

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self._arrays.values())


# ---------------------------------------------------------------------------
# architecture


@dataclass(frozen=True)
class NetConfig:
    """Architecture descriptor shared by teacher and student networks.

    ``cond_vocab`` counts condition labels plus one trailing null token; a
    purely unconditional network uses cond_vocab=1 (null only).
    """

    dim: int
    hidden: tuple = (128, 128, 128)
    time_dim: int = 64
    cond_vocab: int = 1
    cond_dim: int = 16

    def __post_init__(self):
        if self.dim < 1:
            raise ValidationError("dim must be >= 1")
        if self.time_dim < 2 or self.time_dim % 2 != 0:
            raise ValidationError("time_dim must be a positive even integer")
        if self.cond_vocab < 1:
            raise ValidationError("cond_vocab must be >= 1 (it includes the null token)")
        if self.cond_dim < 1:
            raise ValidationError("cond_dim must be >= 1")
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))

    @property
    def null_cond(self) -> int:
        return self.cond_vocab - 1

    @property
    def input_dim(self) -> int:
        return self.dim + self.time_dim + self.cond_dim


@dataclass
class ForwardCache:
    """Intermediates recorded by a forward pass, consumed by backward()."""

    acts: list
    pre: list
    cond_idx: np.ndarray
    time_pair: np.ndarray | None  # concat(e_t, e_r) for dual-time nets


class VelocityNet:
    """Instantaneous velocity field v(z, t, c) as a small SiLU MLP."""

    dual_time = False

    def __init__(self, config: NetConfig, params: ParamStore):
        self.config = config
        self.params = params

    # -- construction -------------------------------------------------------

    @classmethod
    def initialize(cls, config: NetConfig, rng: np.random.Generator) -> "VelocityNet":
        params = ParamStore()
        params.add("cond_emb", rng.standard_normal((config.cond_vocab, config.cond_dim)))
        if cls.dual_time:
            m = config.time_dim
            params.add("w_time", rng.standard_normal((m, 2 * m)) * np.sqrt(1.0 / (2 * m)))
        widths = [config.input_dim, *config.hidden, config.dim]
        for i, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:])):
            params.add(f"w{i}", rng.standard_normal((fan_in, fan_out)) * np.sqrt(2.0 / fan_in))
            params.add(f"b{i}", np.zeros(fan_out))
        return cls(config, params)

    def copy(self) -> "VelocityNet":
        return type(self)(self.config, self.params.copy())

    # -- forward ------------------------------------------------------------

    def _check_points(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=np.float64)
        if z.ndim != 2 or z.shape[1] != self.config.dim:
            raise ValidationError(
                f"expected points of shape (B, {self.config.dim}), got {z.shape}"
            )
        return z

    def _cond_indices(self, cond, batch: int) -> np.ndarray:
        if cond is None:
            return np.full(batch, self.config.null_cond, dtype=np.int64)
        idx = np.asarray(cond, dtype=np.int64)
        if idx.ndim == 0:
            idx = np.full(batch, int(idx), dtype=np.int64)
        if idx.shape != (batch,):
            raise ValidationError(f"condition labels must have shape ({batch},), got {idx.shape}")
        if np.any(idx < 0) or np.any(idx >= self.config.cond_vocab):
            raise ValidationError("condition label outside the embedding vocabulary")
        return idx

    def _time_features(self, cache_pair: bool, t, r, batch: int):
        ts = np.broadcast_to(np.asarray(t, dtype=np.float64), (batch,))
        e_t = time_embed_batch(ts, self.config.time_dim)
        return e_t, None

    def _assemble(self, z, t, r, cond, want_cache: bool):
        z = self._check_points(z)
        batch = z.shape[0]
        idx = self._cond_indices(cond, batch)
        e_time, pair = self._time_features(want_cache, t, r, batch)
        x0 = np.concatenate([z, e_time, self.params["cond_emb"][idx]], axis=1)
        return x0, idx, pair

    def _trunk(self, x0: np.ndarray, want_cache: bool):
        n_linear = len(self.config.hidden) + 1
        acts = [x0]
        pre = []
        h = x0
        for i in range(n_linear - 1):
            a = h @ self.params[f"w{i}"] + self.params[f"b{i}"]
            pre.append(a)
            h = silu(a)
            acts.append(h)
        out = h @ self.params[f"w{n_linear - 1}"] + self.params[f"b{n_linear - 1}"]
        return out, (acts, pre) if want_cache else None

    def forward_batch(self, z, t, cond=None) -> np.ndarray:
        x0, _, _ = self._assemble(z, t, None, cond, want_cache=False)
        out, _ = self._trunk(x0, want_cache=False)
        return out

    def forward_batch_cached(self, z, t, cond=None):
        x0, idx, pair = self._assemble(z, t, None, cond, want_cache=True)
        out, (acts, pre) = self._trunk(x0, want_cache=True)
        return out, ForwardCache(acts=acts, pre=pre, cond_idx=idx, time_pair=pair)

    def forward(self, z, t, cond=None) -> np.ndarray:
        """Single-sample convenience wrapper around forward_batch."""
        z = np.asarray(z, dtype=np.float64)
        if z.ndim != 1:
            raise ValidationError(f"expected a single point of shape ({self.config.dim},)")
        c = None if cond is None else np.asarray([cond])
        return self.forward_batch(z[None, :], np.asarray([t]), c)[0]

    # -- backward -----------------------------------------------------------

    def backward(self, cache: ForwardCache, d_out: np.ndarray) -> ParamStore:
        """Gradient of a scalar loss wrt every parameter, given dLoss/dOut.

        ``cache`` must come from forward_batch_cached on this network.
        """
        if not isinstance(cache, ForwardCache):
            raise ValidationError("backward requires the cache recorded by a forward pass")
        d_out = np.asarray(d_out, dtype=np.float64)
        if d_out.shape != (cache.acts[0].shape[0], self.config.dim):
            raise ValidationError(
                f"upstream gradient has shape {d_out.shape}, expected "
                f"({cache.acts[0].shape[0]}, {self.config.dim})"
            )
        grads = self.params.zeros_like()
        n_linear = len(self.config.hidden) + 1
        g = d_out
        for i in range(n_linear - 1, -1, -1):
            grads[f"w{i}"] = cache.acts[i].T @ g
            grads[f"b{i}"] = g.sum(axis=0)
            g = g @ self.params[f"w{i}"].T
            if i > 0:
                g = g * silu_grad(cache.pre[i - 1])
        # g is now dLoss/d x0; route the condition-embedding slice into the table
        d = self.config.dim
        m = self.config.time_dim
        d_time = g[:, d : d + m]
        d_cond = g[:, d + m :]
        g_emb = np.zeros_like(self.params["cond_emb"])
        np.add.at(g_emb, cache.cond_idx, d_cond)
        grads["cond_emb"] = g_emb
        if self.dual_time:
            grads["w_time"] = d_time.T @ cache.time_pair
        return grads


class DualTimeVelocityNet(VelocityNet):
    """Average velocity field u(z, t, r, c) over the interval [t, r].

    Both times pass through the same sinusoidal embedding; the two embeddings
    are concatenated and projected back to one embedding width by a learned
    (m x 2m) matrix, which then feeds the regular trunk in place of e_t.
    """

    dual_time = True

    def _time_features(self, cache_pair: bool, t, r, batch: int):
        if r is None:
            raise ValidationError("dual-time network requires both interval times")
        ts = np.broadcast_to(np.asarray(t, dtype=np.float64), (batch,))
        rs = np.broadcast_to(np.asarray(r, dtype=np.float64), (batch,))
        if np.any(ts > rs):
            raise ValidationError("interval start t must not exceed end r")
        pair = np.concatenate(
            [
                time_embed_batch(ts, self.config.time_dim),
                time_embed_batch(rs, self.config.time_dim),
            ],
            axis=1,
        )
        return pair @ self.params["w_time"].T, pair if cache_pair else None

    def forward_batch(self, z, t, r, cond=None) -> np.ndarray:
        x0, _, _ = self._assemble(z, t, r, cond, want_cache=False)
        out, _ = self._trunk(x0, want_cache=False)
        return out

    def forward_batch_cached(self, z, t, r, cond=None):
        x0, idx, pair = self._assemble(z, t, r, cond, want_cache=True)
        out, (acts, pre) = self._trunk(x0, want_cache=True)
        return out, ForwardCache(acts=acts, pre=pre, cond_idx=idx, time_pair=pair)

    def forward(self, z, t, r, cond=None) -> np.ndarray:
        z = np.asarray(z, dtype=np.float64)
        if z.ndim != 1:
            raise ValidationError(f"expected a single point of shape ({self.config.dim},)")
        c = None if cond is None else np.asarray([cond])
        return self.forward_batch(z[None, :], np.asarray([t]), np.asarray([r]), c)[0]


# ---------------------------------------------------------------------------
# optimizer


@dataclass
class OptimizerState:
    """Adam moments plus hyperparameters; one instance per trained network."""

    m: ParamStore
    v: ParamStore
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0

    @classmethod
    def for_params(cls, params: ParamStore, lr: float = 1e-3, **kw) -> "OptimizerState":
        return cls(m=params.zeros_like(), v=params.zeros_like(), lr=lr, **kw)


def optimizer_step(params: ParamStore, grads: ParamStore, state: OptimizerState) -> ParamStore:
    """One Adam update, in place. Rejects non-finite gradients."""
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericalError(f"non-finite gradient for parameter {name!r}")
    state.step += 1
    c1 = 1.0 - state.beta1**state.step
    c2 = 1.0 - state.beta2**state.step
    for name, g in grads.items():
        m = state.beta1 * state.m[name] + (1.0 - state.beta1) * g
        v = state.beta2 * state.v[name] + (1.0 - state.beta2) * g * g
        state.m[name] = m
        state.v[name] = v
        params[name] = params[name] - state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params
