"""Ground-truth systems: Lotka-Volterra, a periodic moving blob, and RK4.

These are the oracle side of every experiment. Datasets are stored as explicit
``(q0, qT)`` pairs; training code never sees the equations.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class DivergenceError(FloatingPointError):
    """Integration produced a non-finite or exploding state."""

    def __init__(self, msg, step=None, time=None, member=None):
        super().__init__(msg)
        self.step = step
        self.time = time
        self.member = member


class GenerationError(RuntimeError):
    pass


@dataclass(frozen=True)
class LVParams:
    p1: float = 2.0 / 3.0
    p2: float = 4.0 / 3.0
    p3: float = 1.0
    p4: float = 1.0

    def __post_init__(self):
        if min(self.p1, self.p2, self.p3, self.p4) <= 0:
            raise ValueError("Lotka-Volterra rates must be strictly positive")

    @property
    def equilibrium(self) -> np.ndarray:
        return np.array([self.p4 / self.p3, self.p1 / self.p2])


def lv_rhs(y, p: LVParams = LVParams()) -> np.ndarray:
    """Prey/predator tendencies. Works on (2,) or (..., 2) arrays."""
    y = np.asarray(y, dtype=float)
    a, b = y[..., 0], y[..., 1]
    return np.stack([p.p1 * a - p.p2 * a * b, p.p3 * a * b - p.p4 * b], axis=-1)


def lv_invariant(y, p: LVParams = LVParams()) -> np.ndarray:
    """Conserved quantity ``p3*y1 - p4*ln y1 + p2*y2 - p1*ln y2``."""
    y = np.asarray(y, dtype=float)
    a, b = y[..., 0], y[..., 1]
    return p.p3 * a - p.p4 * np.log(a) + p.p2 * b - p.p1 * np.log(b)


def _step_schedule(t0, t1, dt):
    if not dt > 0 or not t1 > t0:
        raise ValueError("need dt > 0 and t1 > t0")
    n_full = math.floor((t1 - t0) / dt + 1e-9)
    steps = [dt] * n_full
    rest = (t1 - t0) - n_full * dt
    if rest > 1e-12 * max(1.0, abs(t1)):
        steps.append(rest)
    return steps


def rk4_integrate(rhs, y0, t0: float, t1: float, dt: float):
    """Classic fixed-step RK4 for ``y' = rhs(t, y)``.

    Returns ``(t, y)`` arrays holding every step including both endpoints. The
    last step is shortened so the trajectory ends exactly at ``t1``.
    """
    steps = _step_schedule(t0, t1, dt)
    y = np.array(y0, dtype=float)
    ts = np.empty(len(steps) + 1)
    ys = np.empty((len(steps) + 1,) + y.shape)
    ts[0], ys[0] = t0, y
    t = t0
    for i, h in enumerate(steps):
        k1 = np.asarray(rhs(t, y), dtype=float)
        k2 = np.asarray(rhs(t + h / 2, y + h / 2 * k1), dtype=float)
        k3 = np.asarray(rhs(t + h / 2, y + h / 2 * k2), dtype=float)
        k4 = np.asarray(rhs(t + h, y + h * k3), dtype=float)
        y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        t = t + h
        if not np.all(np.isfinite(y)):
            raise DivergenceError(f"non-finite state at t={t:.6g}", step=i + 1, time=t)
        ts[i + 1], ys[i + 1] = t, y
    ts[-1] = t1
    return ts, ys


def lv_flow_batch(y0, horizon: float, p: LVParams = LVParams(), dt: float = 1e-3, check_every: int = 1000):
    """Integrate many LV initial states at once with RK4.

    Returns ``(yT, drift)`` where ``drift`` is the largest relative change of the
    conserved quantity seen on each trajectory (checked every ``check_every``
    steps and at the end).
    """
    y0 = np.asarray(y0, dtype=float).reshape(-1, 2)
    a, b = y0[:, 0].copy(), y0[:, 1].copy()
    v0 = lv_invariant(y0, p)
    drift = np.zeros(len(a))
    if len(a) == 0:
        return y0.copy(), drift

    def f(a, b):
        ab = a * b
        return p.p1 * a - p.p2 * ab, p.p3 * ab - p.p4 * b

    steps = _step_schedule(0.0, horizon, dt)
    for i, h in enumerate(steps):
        k1a, k1b = f(a, b)
        k2a, k2b = f(a + 0.5 * h * k1a, b + 0.5 * h * k1b)
        k3a, k3b = f(a + 0.5 * h * k2a, b + 0.5 * h * k2b)
        k4a, k4b = f(a + h * k3a, b + h * k3b)
        a = a + (h / 6) * (k1a + 2 * k2a + 2 * k3a + k4a)
        b = b + (h / 6) * (k1b + 2 * k2b + 2 * k3b + k4b)
        if (i + 1) % check_every == 0 or i == len(steps) - 1:
            y = np.stack([a, b], axis=1)
            if not np.all(np.isfinite(y)) or np.any(y <= 0):
                bad = int(np.flatnonzero(~np.isfinite(y).all(1) | (y <= 0).any(1))[0])
                raise DivergenceError(
                    f"trajectory {bad} left the positive orthant near t={(i + 1) * dt:.6g}",
                    step=i + 1, time=(i + 1) * dt, member=bad,
                )
            drift = np.maximum(drift, np.abs(lv_invariant(y, p) - v0) / np.abs(v0))
    return np.stack([a, b], axis=1), drift


@dataclass
class NormStats:
    """Per-dimension affine normalization. Constant dims get std 1 and a flag."""

    mean: np.ndarray
    std: np.ndarray
    constant: np.ndarray

    @classmethod
    def fit(cls, x: np.ndarray, tol: float = 1e-12) -> "NormStats":
        x = np.asarray(x, dtype=float).reshape(len(x), -1)
        if len(x) == 0:
            raise ValueError("cannot fit normalization on no samples")
        mean = x.mean(axis=0)
        std = x.std(axis=0)
        constant = std <= tol * np.maximum(1.0, np.abs(mean))
        return cls(mean, np.where(constant, 1.0, std), constant)

    @classmethod
    def identity(cls, dim: int) -> "NormStats":
        return cls(np.zeros(dim), np.ones(dim), np.zeros(dim, dtype=bool))

    def apply(self, x):
        return (x - self.mean) / self.std

    def invert(self, x):
        return x * self.std + self.mean


@dataclass
class Dataset:
    """Paired samples ``(q0[i], qT[i])`` with shape ``(n, *state_shape)``."""

    q0: np.ndarray
    qT: np.ndarray
    horizon: float
    state_shape: tuple
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.state_shape = tuple(int(s) for s in self.state_shape)
        self.q0 = np.asarray(self.q0, dtype=float).reshape((-1,) + self.state_shape)
        self.qT = np.asarray(self.qT, dtype=float).reshape((-1,) + self.state_shape)
        if self.q0.shape != self.qT.shape:
            raise ValueError("q0 and qT must have the same shape")

    def __len__(self):
        return len(self.q0)

    @property
    def dim(self) -> int:
        return int(np.prod(self.state_shape))

    @property
    def chw(self) -> tuple:
        """State shape as (C, H, W); vectors become (1, 1, d)."""
        if len(self.state_shape) == 3:
            return self.state_shape
        return (1, 1, self.dim)

    def flat(self, which: str = "q0") -> np.ndarray:
        return getattr(self, which).reshape(len(self), self.dim)

    def norm_stats(self, which: str = "q0") -> NormStats:
        return NormStats.fit(self.flat(which))

    def subset(self, idx) -> "Dataset":
        return Dataset(self.q0[idx], self.qT[idx], self.horizon, self.state_shape, dict(self.meta))

    def split(self, n_first: int):
        idx = np.arange(len(self))
        return self.subset(idx[:n_first]), self.subset(idx[n_first:])


@dataclass(frozen=True)
class GaussianInit:
    mean: tuple = (0.1, 0.3)
    std: float = 0.05

    name = "gaussian"

    def draw(self, rng):
        return rng.normal(self.mean, self.std)


@dataclass(frozen=True)
class FixedY1UniformY2:
    """First coordinate pinned to ``y1``; second drawn from U(lo, hi)."""

    lo: float = 0.0
    hi: float = 1.0
    y1: float = 1.0

    name = "fixed_y1_uniform_y2"

    def draw(self, rng):
        return np.array([self.y1, rng.uniform(self.lo, self.hi)])


def sample_initial_states(n: int, sampler, seed: int, max_redraws: int = 1000) -> np.ndarray:
    """Draw ``n`` strictly positive initial states; sample ``i`` uses rng(seed, i).

    Non-positive draws are rejected and redrawn rather than clipped.
    """
    out = np.empty((n, 2))
    for i in range(n):
        rng = np.random.default_rng([seed, i])
        for _ in range(max_redraws):
            y = np.asarray(sampler.draw(rng), dtype=float)
            if np.all(y > 0):
                out[i] = y
                break
        else:
            raise GenerationError(f"sampler produced no valid state for sample {i} after {max_redraws} draws")
    return out


def gen_pp_dataset(n: int, horizon: float = 200.0, init_sampler=GaussianInit(), p: LVParams = LVParams(),
                   seed: int = 0, dt: float = 1e-3) -> Dataset:
    if n < 0:
        raise ValueError("n must be non-negative")
    y0 = sample_initial_states(n, init_sampler, seed)
    yT, drift = lv_flow_batch(y0, horizon, p, dt)
    meta = {
        "generator": f"pp-{init_sampler.name}",
        "seed": seed,
        "dt": dt,
        "lv_params": [p.p1, p.p2, p.p3, p.p4],
        "max_invariant_drift": float(drift.max()) if n else 0.0,
    }
    return Dataset(y0, yT, horizon, (2,), meta)


def render_blob(center, grid=(16, 16), width: float = 1.5, amplitude: float = 1.0) -> np.ndarray:
    """Gaussian blob on a periodic grid, summed over neighbouring image copies."""
    h, w = grid
    center = np.mod(np.asarray(center, dtype=float), (h, w))
    ii = np.arange(h)[:, None]
    jj = np.arange(w)[None, :]
    img = np.zeros((h, w))
    for dy in (-h, 0, h):
        for dx in (-w, 0, w):
            r2 = (ii - center[0] - dy) ** 2 + (jj - center[1] - dx) ** 2
            img += np.exp(-r2 / (2 * width**2))
    return amplitude * img


def gen_blob_dataset(n: int, grid=(16, 16), velocity_jitter: float = 0.5, seed: int = 0, horizon: float = 2.0,
                     base_velocity=(1.0, 0.5), width: float = 2.5, amplitude=(0.2, 1.0)) -> Dataset:
    """Moving-blob frames: a blob at a random position advected for ``horizon``.

    Each sample draws a position, a peak amplitude in ``amplitude`` and a
    velocity ``base_velocity + velocity_jitter * N(0, I)``. The blob sits on a
    torus, so translation conserves total intensity.
    """
    h, w = grid
    if h < 8 or w < 8:
        raise ValueError("grid must be at least 8x8")
    q0 = np.empty((n, 1, h, w))
    qT = np.empty((n, 1, h, w))
    for i in range(n):
        rng = np.random.default_rng([seed, i])
        c0 = rng.uniform(0, 1, size=2) * (h, w)
        amp = rng.uniform(*amplitude)
        vel = np.asarray(base_velocity) + velocity_jitter * rng.standard_normal(2)
        c1 = np.mod(c0 + vel * horizon, (h, w))
        q0[i, 0] = render_blob(c0, grid, width, amp)
        qT[i, 0] = render_blob(c1, grid, width, amp)
    meta = {"generator": "blob", "seed": seed, "velocity_jitter": velocity_jitter, "width": width,
            "base_velocity": list(base_velocity), "amplitude": list(amplitude), "data_range": 1.0}
    return Dataset(q0, qT, horizon, (1, h, w), meta)


@dataclass
class ObservationModel:
    """``q = S y + eps`` with ``eps ~ N(0, noise_sigma^2 I)``."""

    selector: np.ndarray
    noise_sigma: float = 0.0

    def __post_init__(self):
        self.selector = np.atleast_2d(np.asarray(self.selector, dtype=float))
        if not np.isfinite(self.noise_sigma) or self.noise_sigma < 0:
            raise ValueError("noise_sigma must be finite and >= 0")


def observe(y, model: ObservationModel, seed: int = 0) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if model.selector.shape[1] != y.shape[-1]:
        raise ValueError(f"selector expects dim {model.selector.shape[1]}, state has {y.shape[-1]}")
    q = y @ model.selector.T
    if model.noise_sigma > 0:
        q = q + model.noise_sigma * np.random.default_rng(seed).standard_normal(q.shape)
    return q
