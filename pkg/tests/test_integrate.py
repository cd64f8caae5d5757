import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from flowcast.dynamics import DivergenceError
from flowcast.flow import VelocityField, constant_field
from flowcast.integrate import (BENCH_GRID, Ensemble, bench_integration, bench_table, euler_forward, euler_maruyama,
                                euler_reverse, propagate_ensemble)


class _Probe(VelocityField):
    """Field with a Python-defined velocity that records the times it sees."""

    def __call__(self, q, t):
        self.seen.append(float(t[0]))
        return self.fn(q, t)


def probe(fn, dim=1):
    base = constant_field(np.zeros(dim))
    p = _Probe(base.params, "forecast", base.in_stats, base.out_stats, 1.0)
    p.fn, p.seen = fn, []
    return p


@pytest.mark.parametrize("n", [1, 10, 100, 1000])
def test_unit_velocity_is_exact(n):
    y1 = euler_forward(constant_field([1.0]), np.zeros(1), n)
    assert abs(y1[0] - 1.0) < 1e-12


def test_forward_and_reverse_time_grids():
    f = probe(lambda q, t: np.zeros_like(q))
    euler_forward(f, np.zeros((3, 1)), 4)
    assert f.seen == [0.0, 0.25, 0.5, 0.75]
    f.seen.clear()
    euler_reverse(f, np.zeros((3, 1)), 4)
    assert f.seen == [1.0, 0.75, 0.5, 0.25]


def test_linear_field_matches_euler_recurrence():
    f = probe(lambda q, t: q)
    n = 50
    assert euler_forward(f, np.ones(1), n)[0] == pytest.approx((1 + 1 / n) ** n, rel=1e-12)
    assert euler_reverse(f, np.ones(1), n)[0] == pytest.approx((1 - 1 / n) ** n, rel=1e-12)


@given(st.lists(st.floats(-3, 3), min_size=2, max_size=2), st.integers(1, 200))
def test_constant_field_roundtrip_is_exact(c, n):
    f = constant_field(c)
    q = np.random.default_rng(n).normal(size=(4, 2))
    np.testing.assert_allclose(euler_reverse(f, euler_forward(f, q, n), n), q, atol=1e-10)


def test_roundtrip_error_shrinks_with_steps():
    f = probe(lambda q, t: np.sin(3 * q) + t[:, None])
    q = np.linspace(-1, 1, 9)[:, None]
    errs = [np.abs(euler_reverse(f, euler_forward(f, q, n), n) - q).max() for n in (10, 100, 1000)]
    assert errs[0] > errs[1] > errs[2]


def test_divergence_is_reported():
    f = probe(lambda q, t: 1e3 * q * np.abs(q))
    q = np.array([[0.0], [5.0]])
    with pytest.raises(DivergenceError) as info:
        euler_forward(f, q, 10)
    assert info.value.member == 1 and info.value.step >= 1


def test_step_count_validation():
    with pytest.raises(ValueError):
        euler_forward(constant_field([0.0]), np.zeros(1), 0)


def test_propagate_ensemble_meta_and_shape():
    e = Ensemble(np.zeros((5, 2)), {"source": "x"})
    out = propagate_ensemble(constant_field([1.0, 2.0]), e, 10)
    np.testing.assert_allclose(out.members, np.tile([1.0, 2.0], (5, 1)))
    assert out.meta["source"] == "forecast" and out.meta["n_steps"] == 10
    with pytest.raises(ValueError):
        propagate_ensemble(constant_field([1.0]), e)
    with pytest.raises(ValueError):
        Ensemble(np.zeros((0, 2)))


def test_euler_maruyama_moments_and_determinism():
    y = euler_maruyama(1.0, 0.2, n_steps=100, n_paths=10_000, seed=0)
    assert abs(y.mean() - 1.0) < 0.01
    assert abs(y.std() - 0.2) < 0.01
    np.testing.assert_array_equal(y, euler_maruyama(1.0, 0.2, n_steps=100, n_paths=10_000, seed=0))
    # zero diffusion reduces to forward Euler
    assert euler_maruyama(lambda t, y: 2 * t, 0.0, n_steps=4)[0] == pytest.approx(0.75)


def test_bench_counts():
    for scheme, n in BENCH_GRID:
        r = bench_integration(scheme, n, repeats=1)
        if scheme == "ode_euler":
            assert (r.op_count, r.fn_call_count) == (2 * n, n)
        else:
            assert (r.op_count, r.fn_call_count) == (4 * n, 2 * n)
    rows = [r.row() for r in bench_table(repeats=1)]
    assert rows[0].startswith("ODE,1,2,1,") and rows[-1].startswith("SDE,1000,4000,2000,")
    with pytest.raises(ValueError):
        bench_integration("rk4", 10)


def test_bench_runtime_grows_with_steps():
    # timing is noisy; allow a few attempts
    for _ in range(3):
        times = {}
        for scheme, n in BENCH_GRID:
            times.setdefault(scheme, []).append(bench_integration(scheme, n, repeats=5).wall_time)
        if all(np.all(np.diff(t) > 0) for t in times.values()):
            return
    pytest.fail(f"runtime not increasing in N: {times}")
