"""Flow-matching training: linear interpolant and velocity regression.

Two fields are trained with the same machinery:

* forecast: transports samples of q0 to samples of qT (paired data);
* gaussify: transports data states to N(0, I) (independent latent draws).

Both sides are normalized to zero mean and unit std per dimension before the
interpolant is built. A forecast field keeps separate statistics for its
source (q0) and target (qT) sides; a gaussify field's target side is the
identity since the latent is already standard normal.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .dynamics import Dataset, NormStats
from .nn import ModelParams, adam_init, adam_step, batch_loss, default_dims, forward, init_params, loss_and_grad

log = logging.getLogger(__name__)

KINDS = ("forecast", "gaussify")


class TrainingError(RuntimeError):
    pass


@dataclass
class VelocityField:
    params: ModelParams
    kind: str
    in_stats: NormStats
    out_stats: NormStats
    horizon: float = float("nan")
    loss_trace: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}")

    @property
    def dim(self) -> int:
        return self.params.state_dim

    def __call__(self, q, t):
        """Velocity in normalized coordinates."""
        return forward(self.params, q, t)


@dataclass
class TrainConfig:
    lr: float = 1e-4
    batch_size: int = 64
    epochs: int = 200
    seed: int = 0
    hidden: tuple = (128, 128, 128)
    activation: str = "tanh"

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError("lr must be positive")
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch_size and epochs must be >= 1")


def interpolate(q0, q1, t):
    """``t*q1 + (1-t)*q0``; ``t`` may be a scalar or one value per row."""
    q0 = np.asarray(q0, dtype=float)
    q1 = np.asarray(q1, dtype=float)
    if q0.shape != q1.shape:
        raise ValueError(f"shape mismatch {q0.shape} vs {q1.shape}")
    t = np.asarray(t, dtype=float)
    if t.ndim == 1 and q0.ndim == 2:
        t = t[:, None]
    return t * q1 + (1.0 - t) * q0


def target_velocity(q0, q1):
    return np.asarray(q1, dtype=float) - np.asarray(q0, dtype=float)


def fm_loss(field: VelocityField | ModelParams, batch) -> float:
    """Evaluation-only flow-matching loss on ``(q_t, t, u_target)``."""
    params = field.params if isinstance(field, VelocityField) else field
    q_t, t, u = batch
    pred = np.atleast_2d(forward(params, np.atleast_2d(q_t), t))
    u = np.atleast_2d(np.asarray(u, dtype=float))
    if pred.shape != u.shape:
        raise ValueError(f"target shape {u.shape} != prediction shape {pred.shape}")
    return batch_loss(pred, u)


def make_batch(x0, x1, t):
    """Interpolated points and their straight-line target velocities."""
    return interpolate(x0, x1, t), t, target_velocity(x0, x1)


def _fit(x0: np.ndarray, x1_source, cfg: TrainConfig):
    """Shared minibatch loop. ``x1_source(idx, rng)`` returns batch endpoints."""
    n, dim = x0.shape
    params = init_params(default_dims(dim, cfg.hidden), cfg.activation, cfg.seed)
    opt = adam_init(params, cfg.lr)
    rng = np.random.default_rng([cfg.seed, 1])
    trace = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            a = x0[idx]
            b = x1_source(idx, rng)
            t = rng.random(len(idx))
            q_t, t, u = make_batch(a, b, t)
            loss, grads = loss_and_grad(params, q_t, t, u)
            if not np.isfinite(loss):
                raise TrainingError(f"non-finite loss at epoch {epoch + 1}, step {opt.step_count + 1}")
            opt, params = adam_step(opt, params, grads)
            total += loss * len(idx)
        trace.append(total / n)
        log.debug("epoch %d loss %.6g", epoch + 1, trace[-1])
    return params, trace


def train_forecast_flow(dataset: Dataset, cfg: TrainConfig = TrainConfig()) -> VelocityField:
    """Regress v(q_t, t) onto qT - q0 along straight lines between the pairs."""
    if len(dataset) == 0:
        raise TrainingError("empty dataset")
    in_stats = dataset.norm_stats("q0")
    out_stats = dataset.norm_stats("qT")
    x0 = in_stats.apply(dataset.flat("q0"))
    x1 = out_stats.apply(dataset.flat("qT"))
    params, trace = _fit(x0, lambda idx, rng: x1[idx], cfg)
    return VelocityField(params, "forecast", in_stats, out_stats, float(dataset.horizon), trace)


def train_gaussify_flow(states, cfg: TrainConfig = TrainConfig()) -> VelocityField:
    """Regress u(q_t, t) onto z - q0 with z ~ N(0, I) drawn fresh every batch.

    ``states`` is an (n, ...) array of samples from the marginal to gaussify.
    """
    states = np.asarray(states, dtype=float)
    if len(states) == 0:
        raise TrainingError("empty state collection")
    flat = states.reshape(len(states), -1)
    in_stats = NormStats.fit(flat)
    x0 = in_stats.apply(flat)
    dim = x0.shape[1]
    params, trace = _fit(x0, lambda idx, rng: rng.standard_normal((len(idx), dim)), cfg)
    return VelocityField(params, "gaussify", in_stats, NormStats.identity(dim), float("nan"), trace)


def constant_field(c, activation: str = "tanh") -> VelocityField:
    """Field whose velocity is ``c`` everywhere (zero weights, output bias c)."""
    c = np.asarray(c, dtype=float).ravel()
    dims = default_dims(len(c), (4,))
    params = init_params(dims, activation, 0)
    params = params.with_arrays([np.zeros_like(a) for a in params.arrays()])
    params.biases[-1] = c.copy()
    d = len(c)
    return VelocityField(params, "forecast", NormStats.identity(d), NormStats.identity(d), 1.0)
