import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from flowcast.flow import VelocityField, constant_field
from flowcast.perturb import (NoiseSpec, decode, draw_noise, encode, gen_perturbed_ensemble, noise_ablation,
                              perturb_latent, state_hash)


def shift_gaussify(c):
    """Gaussify field with constant velocity: encode adds c, decode subtracts it."""
    f = constant_field(c)
    return VelocityField(f.params, "gaussify", f.in_stats, f.out_stats)


def test_noise_families():
    shape = (20_000,)
    n = draw_noise(shape, NoiseSpec("normal", 1.0, 0))
    assert abs(n.mean()) < 0.03 and abs(n.std() - 1) < 0.03
    u = draw_noise(shape, NoiseSpec("uniform", 1.0, 0))
    assert u.min() >= 0 and u.max() < 1 and abs(u.mean() - 0.5) < 0.01
    np.testing.assert_array_equal(draw_noise((3, 2), NoiseSpec("constant")), np.ones((3, 2)))


def test_noise_is_keyed_by_seed_and_index():
    spec = NoiseSpec("normal", 0.2, 7)
    np.testing.assert_array_equal(draw_noise((4,), spec, 3), draw_noise((4,), spec, 3))
    assert not np.array_equal(draw_noise((4,), spec, 3), draw_noise((4,), spec, 4))
    assert not np.array_equal(draw_noise((4,), spec, 3), draw_noise((4,), NoiseSpec("normal", 0.2, 8), 3))


@given(st.sampled_from(["normal", "uniform", "constant"]), st.floats(0, 2), st.integers(0, 100))
def test_perturbation_scales_with_sigma(family, sigma, index):
    z = np.arange(5.0)
    out = perturb_latent(z, NoiseSpec(family, sigma, 1), index)
    unit = draw_noise(z.shape, NoiseSpec(family, 1.0, 1), index)
    np.testing.assert_allclose(out - z, sigma * unit, atol=1e-12)


def test_zero_sigma_returns_copy():
    z = np.ones(3)
    out = perturb_latent(z, NoiseSpec(sigma=0.0))
    np.testing.assert_array_equal(out, z)
    assert out is not z


def test_spec_validation():
    with pytest.raises(ValueError):
        NoiseSpec("laplace")
    with pytest.raises(ValueError):
        NoiseSpec(sigma=-0.1)
    with pytest.raises(ValueError):
        NoiseSpec(sigma=float("nan"))


def test_encode_requires_gaussify_kind():
    with pytest.raises(ValueError):
        encode(constant_field([1.0]), np.zeros(1))
    with pytest.raises(ValueError):
        decode(constant_field([1.0]), np.zeros(1))


@pytest.mark.parametrize("family", ["normal", "uniform", "constant"])
def test_ensemble_through_shift_field_is_additive_noise(family):
    field = shift_gaussify([0.3, -0.4])
    q0 = np.array([0.1, 0.3])
    spec = NoiseSpec(family, 0.2, 5)
    e = gen_perturbed_ensemble(field, q0, spec, m=25, n_steps=10)
    assert len(e) == 25 and e.state_shape == (2,)
    expected = np.stack([q0 + 0.2 * draw_noise((2,), spec, i) for i in range(25)])
    np.testing.assert_allclose(e.members, expected, atol=1e-12)
    assert e.meta["source_hash"] == state_hash(q0)
    assert e.meta["family"] == family


def test_ensemble_zero_sigma_collapses_to_source():
    field = shift_gaussify([1.0, 1.0])
    e = gen_perturbed_ensemble(field, np.array([0.2, 0.5]), NoiseSpec(sigma=0.0), m=4)
    np.testing.assert_allclose(e.members, np.tile([0.2, 0.5], (4, 1)), atol=1e-13)


def test_ensemble_is_deterministic_and_keeps_image_shape():
    field = shift_gaussify(np.zeros(16))
    q0 = np.arange(16.0).reshape(1, 4, 4)
    a = gen_perturbed_ensemble(field, q0, NoiseSpec(seed=2), m=3, n_steps=5)
    b = gen_perturbed_ensemble(field, q0, NoiseSpec(seed=2), m=3, n_steps=5)
    assert a.members.shape == (3, 1, 4, 4)
    np.testing.assert_array_equal(a.members, b.members)
    with pytest.raises(ValueError):
        gen_perturbed_ensemble(field, q0, m=0)


def test_normal_perturbation_std():
    spec = NoiseSpec("normal", 0.2, 0)
    z = np.zeros(3)
    d = np.stack([perturb_latent(z, spec, i) for i in range(10_000)])
    assert np.all(np.abs(d.std(axis=0) - 0.2) < 0.01)
    np.testing.assert_allclose(perturb_latent(z, NoiseSpec("constant", 0.2)), 0.2)


def test_ablation_rows_on_shift_field():
    # constant-velocity field decodes latent noise back as additive noise
    field = shift_gaussify(np.zeros(64))
    states = np.random.default_rng(0).random((3, 1, 8, 8))
    rows = noise_ablation(field, states, sigmas=(0.2,), m=2, n_steps=5)
    assert [r["family"] for r in rows] == ["reconstruction", "normal", "uniform", "constant"]
    assert rows[0]["mse"] < 1e-25 and rows[0]["ssim"] == 1.0
    assert abs(rows[3]["mse"] - 0.04) < 1e-12
    assert abs(rows[1]["mse"] - 0.04) < 0.015
    assert abs(rows[2]["mse"] - 0.04 / 3) < 0.01
