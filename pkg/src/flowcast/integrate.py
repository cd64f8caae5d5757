"""Inference-time integrators for trained fields, plus the ODE/SDE cost bench."""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .dynamics import DivergenceError
from .flow import VelocityField

DIVERGENCE_LIMIT = 1e8


@dataclass
class Ensemble:
    """``M`` states of identical shape, stored as one (M, *shape) array."""

    members: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.members = np.asarray(self.members, dtype=float)
        if self.members.ndim < 2 or len(self.members) == 0:
            raise ValueError("an ensemble needs at least one member")

    def __len__(self):
        return len(self.members)

    @property
    def state_shape(self) -> tuple:
        return self.members.shape[1:]

    def flat(self) -> np.ndarray:
        return self.members.reshape(len(self), -1)


def _integrate(field: VelocityField, x: np.ndarray, n_steps: int, reverse: bool) -> np.ndarray:
    """Uniform-step Euler on normalized rows of ``x``.

    Forward evaluates at t = 0, dt, ..., 1-dt; reverse starts at t = 1 and
    steps down, evaluating at t = 1, 1-dt, ..., dt.
    """
    if n_steps < 1:
        raise ValueError("number of steps must be >= 1")
    dt = 1.0 / n_steps
    x = x.copy()
    for j in range(n_steps):
        if reverse:
            t = 1.0 - j * dt
            x = x - dt * field(x, np.full(len(x), t))
        else:
            t = j * dt
            x = x + dt * field(x, np.full(len(x), t))
        bad = ~np.isfinite(x).all(axis=1) | (np.abs(x) > DIVERGENCE_LIMIT).any(axis=1)
        if bad.any():
            member = int(np.flatnonzero(bad)[0])
            raise DivergenceError(
                f"member {member} diverged at step {j + 1} of {n_steps}", step=j + 1, member=member
            )
    return x


def euler_forward(field: VelocityField, q0, n_steps: int = 100) -> np.ndarray:
    """Push ``q0`` (one state or a batch) from flow time 0 to 1.

    Input is normalized with the field's source statistics and the result is
    mapped back with its target statistics.
    """
    q0 = np.asarray(q0, dtype=float)
    rows = q0.reshape(-1, field.dim)
    x = _integrate(field, field.in_stats.apply(rows), n_steps, reverse=False)
    return field.out_stats.invert(x).reshape(q0.shape)


def euler_reverse(field: VelocityField, q1, n_steps: int = 100) -> np.ndarray:
    """Pull ``q1`` back from flow time 1 to 0 with the negated velocity."""
    q1 = np.asarray(q1, dtype=float)
    rows = q1.reshape(-1, field.dim)
    x = _integrate(field, field.out_stats.apply(rows), n_steps, reverse=True)
    return field.in_stats.invert(x).reshape(q1.shape)


def propagate_ensemble(field: VelocityField, e0: Ensemble, n_steps: int = 100) -> Ensemble:
    if int(np.prod(e0.state_shape)) != field.dim:
        raise ValueError(f"ensemble state dim {e0.state_shape} does not match field dim {field.dim}")
    out = euler_forward(field, e0.members, n_steps)
    meta = dict(e0.meta)
    meta.update(source="forecast", horizon=field.horizon, n_steps=n_steps)
    return Ensemble(out, meta)


def euler_maruyama(drift, diffusion: float, y0: float = 0.0, n_steps: int = 100, n_paths: int = 1, seed: int = 0,
                   t_end: float = 1.0) -> np.ndarray:
    """Endpoints of ``dy = drift(t, y) dt + diffusion dW`` on [0, t_end].

    ``drift`` is a callable ``(t, y) -> array`` or a constant.
    """
    if n_steps < 1 or n_paths < 1:
        raise ValueError("n_steps and n_paths must be >= 1")
    f = drift if callable(drift) else (lambda t, y, c=float(drift): c)
    rng = np.random.default_rng(seed)
    h = t_end / n_steps
    y = np.full(n_paths, float(y0))
    for n in range(n_steps):
        dw = rng.normal(0.0, np.sqrt(h), size=n_paths)
        y = y + h * f(n * h, y) + diffusion * dw
    return y


@dataclass
class CostReport:
    scheme: str
    n_steps: int
    op_count: int
    fn_call_count: int
    wall_time: float

    def row(self) -> str:
        label = "ODE" if self.scheme == "ode_euler" else "SDE"
        return f"{label},{self.n_steps},{self.op_count},{self.fn_call_count},{self.wall_time:.3g}"


class _Counted:
    def __init__(self, fn):
        self.fn = fn
        self.calls = 0

    def __call__(self, *args):
        self.calls += 1
        return self.fn(*args)


def _ode_run(f, n_steps, y0=0.0):
    h = 1.0 / n_steps
    y, ops = y0, 0
    for n in range(n_steps):
        y = y + h * f(n * h, y)
        ops += 2  # one multiply, one add
    return y, ops


def _sde_run(f, g, n_steps, rng, y0=0.0):
    h = 1.0 / n_steps
    dws = rng.normal(0.0, np.sqrt(h), size=n_steps)
    y, ops = y0, 0
    for n in range(n_steps):
        y = y + h * f(n * h, y) + g(n * h, y) * dws[n]
        ops += 4  # two multiplies, two adds
    return y, ops


def bench_integration(scheme: str, n_steps: int, problem=None, repeats: int = 20, seed: int = 0) -> CostReport:
    """Count evaluations/ops and time one solve of the reference problem.

    The default problem is ``dy = 1 dt (+ 0.2 dW)`` on [0, 1] with y(0) = 0.
    Wall time is the minimum over ``repeats`` runs.
    """
    drift, diffusion = problem if problem is not None else ((lambda t, y: 1.0), (lambda t, y: 0.2))
    if scheme not in ("ode_euler", "sde_euler_maruyama"):
        raise ValueError(f"unknown scheme {scheme!r}")
    best = float("inf")
    for r in range(repeats):
        f = _Counted(drift)
        g = _Counted(diffusion)
        rng = np.random.default_rng([seed, r])
        start = time.perf_counter()
        if scheme == "ode_euler":
            _, ops = _ode_run(f, n_steps)
        else:
            _, ops = _sde_run(f, g, n_steps, rng)
        best = min(best, time.perf_counter() - start)
    calls = f.calls + (g.calls if scheme != "ode_euler" else 0)
    return CostReport(scheme, n_steps, ops, calls, best)


BENCH_GRID = [("ode_euler", n) for n in (1, 10, 100, 1000)] + [("sde_euler_maruyama", n) for n in (10, 100, 1000)]


def bench_table(repeats: int = 20) -> list[CostReport]:
    return [bench_integration(s, n, repeats=repeats) for s, n in BENCH_GRID]
