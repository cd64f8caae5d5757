"""Dense feed-forward velocity network with hand-written backprop and Adam.

The network is the only trainable object in the package. It maps a state ``q``
and a flow time ``t`` to a velocity with the same dimension as ``q``. Time is
fed in through a small embedding ``[t, sin(2 pi t), cos(2 pi t)]`` appended to
the state, so ``layer_dims[0] == state_dim + TIME_EMBED_DIM``.

Everything works on float64 arrays. Parameters are never mutated in place:
``adam_step`` returns fresh arrays.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

TIME_EMBED_DIM = 3
ACTIVATIONS = ("tanh", "silu")


class ConfigError(ValueError):
    """Invalid network or optimizer configuration."""


class ShapeError(ValueError):
    """Array dimensions do not match the network."""


@dataclass
class ModelParams:
    layer_dims: tuple[int, ...]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activation: str = "tanh"

    def __post_init__(self):
        self.layer_dims = tuple(int(d) for d in self.layer_dims)
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"unknown activation {self.activation!r}")
        if len(self.weights) != len(self.layer_dims) - 1 or len(self.biases) != len(self.weights):
            raise ShapeError("need one weight matrix and bias per layer")
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            expected = (self.layer_dims[k + 1], self.layer_dims[k])
            if w.shape != expected:
                raise ShapeError(f"weights[{k}] has shape {w.shape}, expected {expected}")
            if b.shape != (self.layer_dims[k + 1],):
                raise ShapeError(f"biases[{k}] has shape {b.shape}")

    @property
    def state_dim(self) -> int:
        return self.layer_dims[-1]

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def arrays(self) -> list[np.ndarray]:
        """Flat list [W0, b0, W1, b1, ...] in layer order."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def with_arrays(self, arrays) -> "ModelParams":
        return ModelParams(self.layer_dims, list(arrays[0::2]), list(arrays[1::2]), self.activation)

    def copy(self) -> "ModelParams":
        return self.with_arrays([a.copy() for a in self.arrays()])

    def all_finite(self) -> bool:
        return all(np.isfinite(a).all() for a in self.arrays())


def init_params(layer_dims, activation: str = "tanh", seed: int = 0) -> ModelParams:
    """Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero."""
    dims = [int(d) for d in layer_dims]
    if len(dims) < 2 or any(d < 1 for d in dims):
        raise ConfigError(f"layer_dims must have >= 2 positive entries, got {list(layer_dims)}")
    if activation not in ACTIVATIONS:
        raise ConfigError(f"unknown activation {activation!r}")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return ModelParams(tuple(dims), weights, biases, activation)


def default_dims(state_dim: int, hidden=(128, 128, 128)) -> list[int]:
    return [state_dim + TIME_EMBED_DIM, *hidden, state_dim]


def embed_time(q: np.ndarray, t) -> np.ndarray:
    """Stack ``[q, t, sin 2pi t, cos 2pi t]`` row-wise; ``q`` is (B, d)."""
    t = np.broadcast_to(np.asarray(t, dtype=float), (q.shape[0],))
    return np.concatenate(
        [q, t[:, None], np.sin(2 * np.pi * t)[:, None], np.cos(2 * np.pi * t)[:, None]], axis=1
    )


def _act(name, z):
    if name == "tanh":
        return np.tanh(z)
    return z / (1.0 + np.exp(-z))


def _act_grad(name, z, a):
    if name == "tanh":
        return 1.0 - a * a
    s = 1.0 / (1.0 + np.exp(-z))
    return s * (1.0 + z * (1.0 - s))


def _run(params: ModelParams, x: np.ndarray):
    """Forward pass keeping pre-activations and activations for backprop."""
    pre, acts = [], [x]
    h = x
    last = len(params.weights) - 1
    for k, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = h @ w.T + b
        pre.append(z)
        h = z if k == last else _act(params.activation, z)
        acts.append(h)
    return pre, acts


def _check_input(params: ModelParams, q: np.ndarray):
    expected = params.layer_dims[0] - TIME_EMBED_DIM
    if q.shape[-1] != expected:
        raise ShapeError(f"state has dim {q.shape[-1]}, network expects {expected}")


def forward(params: ModelParams, q, t) -> np.ndarray:
    """Velocity at ``(q, t)``. Accepts a single state (d,) or a batch (B, d)."""
    q = np.asarray(q, dtype=float)
    _check_input(params, q)
    single = q.ndim == 1
    x = embed_time(np.atleast_2d(q), t)
    out = _run(params, x)[1][-1]
    return out[0] if single else out


def batch_loss(pred: np.ndarray, target: np.ndarray) -> float:
    """Mean over the batch of the squared Euclidean residual."""
    return float(np.mean(np.sum((pred - target) ** 2, axis=1)))


def loss_and_grad(params: ModelParams, q_t, t, u_target):
    """Loss ``mean_i ||v(q_t_i, t_i) - u_i||^2`` and its exact gradient.

    Returns ``(loss, grads)`` where ``grads`` is a ``ModelParams`` holding
    gradients in place of weights and biases.
    """
    q_t = np.atleast_2d(np.asarray(q_t, dtype=float))
    u_target = np.atleast_2d(np.asarray(u_target, dtype=float))
    if q_t.shape[0] == 0:
        raise ValueError("empty batch")
    _check_input(params, q_t)
    if u_target.shape != q_t.shape:
        raise ShapeError(f"target shape {u_target.shape} != input shape {q_t.shape}")
    pre, acts = _run(params, embed_time(q_t, t))
    resid = acts[-1] - u_target
    n = q_t.shape[0]
    loss = float(np.sum(resid * resid) / n)

    delta = (2.0 / n) * resid
    gw = [None] * len(params.weights)
    gb = [None] * len(params.weights)
    for k in range(len(params.weights) - 1, -1, -1):
        gw[k] = delta.T @ acts[k]
        gb[k] = delta.sum(axis=0)
        if k > 0:
            delta = (delta @ params.weights[k]) * _act_grad(params.activation, pre[k - 1], acts[k])
    return loss, ModelParams(params.layer_dims, gw, gb, params.activation)


@dataclass
class OptState:
    first_moment: list[np.ndarray]
    second_moment: list[np.ndarray]
    step_count: int = 0
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_init(params: ModelParams, lr: float = 1e-4, beta1=0.9, beta2=0.999, eps=1e-8) -> OptState:
    if lr <= 0:
        raise ConfigError("lr must be positive")
    zeros = [np.zeros_like(a) for a in params.arrays()]
    return OptState(zeros, [z.copy() for z in zeros], 0, lr, beta1, beta2, eps)


def adam_step(opt: OptState, params: ModelParams, grads: ModelParams):
    """One bias-corrected Adam update. Returns ``(new_opt, new_params)``."""
    p_arr, g_arr = params.arrays(), grads.arrays()
    if len(g_arr) != len(p_arr) or any(p.shape != g.shape for p, g in zip(p_arr, g_arr)):
        raise ShapeError("gradient shapes do not match parameters")
    step = opt.step_count + 1
    c1 = 1.0 - opt.beta1**step
    c2 = 1.0 - opt.beta2**step
    new_m, new_v, new_p = [], [], []
    for p, g, m, v in zip(p_arr, g_arr, opt.first_moment, opt.second_moment):
        m = opt.beta1 * m + (1.0 - opt.beta1) * g
        v = opt.beta2 * v + (1.0 - opt.beta2) * g * g
        new_p.append(p - opt.lr * (m / c1) / (np.sqrt(v / c2) + opt.eps))
        new_m.append(m)
        new_v.append(v)
    new_opt = OptState(new_m, new_v, step, opt.lr, opt.beta1, opt.beta2, opt.eps)
    return new_opt, params.with_arrays(new_p)
