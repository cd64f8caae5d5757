import numpy as np
import pytest

from flowcast import io
from flowcast.baseline import var_fit
from flowcast.dynamics import gen_blob_dataset, gen_pp_dataset
from flowcast.flow import TrainConfig, constant_field, train_gaussify_flow
from flowcast.integrate import Ensemble
from flowcast.nn import init_params


def test_dataset_roundtrip(tmp_path):
    ds = gen_pp_dataset(5, horizon=1.0, seed=2)
    io.save_dataset(tmp_path / "d.fmds", ds)
    back = io.load_dataset(tmp_path / "d.fmds")
    np.testing.assert_array_equal(back.q0, ds.q0)
    np.testing.assert_array_equal(back.qT, ds.qT)
    assert back.horizon == 1.0 and back.state_shape == (2,)
    assert back.meta["seed"] == 2 and back.meta["generator"] == "pp-gaussian"
    meta = io.read_meta(tmp_path / "d.fmds")
    assert meta["kind"] == "pairs" and len(meta["q0_mean"]) == 2


def test_image_dataset_and_ensemble_columns(tmp_path):
    ds = gen_blob_dataset(3, seed=0)
    io.save_dataset(tmp_path / "b.fmds", ds)
    e = io.load_ensemble(tmp_path / "b.fmds", "q0")
    assert e.members.shape == (3, 1, 16, 16)
    np.testing.assert_array_equal(e.members, ds.q0)
    with pytest.raises(io.FormatError):
        io.load_ensemble(tmp_path / "b.fmds.meta")


def test_ensemble_roundtrip_and_kind_checks(tmp_path):
    e = Ensemble(np.random.default_rng(0).random((4, 2)), {"source": "test"})
    io.save_ensemble(tmp_path / "e.fmds", e, horizon=3.0)
    back = io.load_ensemble(tmp_path / "e.fmds")
    np.testing.assert_array_equal(back.members, e.members)
    assert back.meta["source"] == "test"
    with pytest.raises(io.FormatError):
        io.load_dataset(tmp_path / "e.fmds")


def test_corrupt_files_are_rejected(tmp_path):
    io.save_ensemble(tmp_path / "e.fmds", Ensemble(np.zeros((4, 2))))
    raw = (tmp_path / "e.fmds").read_bytes()
    (tmp_path / "bad_magic").write_bytes(b"XXXX" + raw[4:])
    (tmp_path / "short").write_bytes(raw[:-3])
    (tmp_path / "tiny").write_bytes(raw[:5])
    for name in ("bad_magic", "short", "tiny"):
        with pytest.raises(io.FormatError):
            io.read_container(tmp_path / name)
    with pytest.raises(io.FormatError):
        io.load_checkpoint(tmp_path / "e.fmds")


def test_empty_dataset_roundtrip(tmp_path):
    io.save_dataset(tmp_path / "z.fmds", gen_pp_dataset(0, horizon=1.0))
    assert len(io.load_dataset(tmp_path / "z.fmds")) == 0


def test_checkpoint_roundtrips(tmp_path):
    states = np.random.default_rng(0).normal(size=(64, 2))
    g = train_gaussify_flow(states, TrainConfig(epochs=1, hidden=(8,), activation="silu"))
    io.save_checkpoint(tmp_path / "g.ck", g)
    back = io.load_checkpoint(tmp_path / "g.ck")
    assert back.kind == "gaussify" and back.params.activation == "silu"
    for a, b in zip(back.params.arrays(), g.params.arrays()):
        np.testing.assert_array_equal(a, b)
    np.testing.assert_array_equal(back.in_stats.mean, g.in_stats.mean)
    q = states[:5]
    np.testing.assert_array_equal(back(q, 0.3), g(q, 0.3))
    assert io.checkpoint_bytes(back) == io.checkpoint_bytes(g)

    f = constant_field([1.0, 2.0])
    io.save_checkpoint(tmp_path / "f.ck", f)
    assert io.load_checkpoint(tmp_path / "f.ck").horizon == 1.0

    net = init_params([5, 3, 2], seed=1)
    io.save_checkpoint(tmp_path / "n.ck", net)
    np.testing.assert_array_equal(io.load_checkpoint(tmp_path / "n.ck").weights[1], net.weights[1])

    ds = gen_pp_dataset(10, horizon=1.0)
    v = var_fit(ds)
    io.save_checkpoint(tmp_path / "v.ck", v)
    np.testing.assert_array_equal(io.load_checkpoint(tmp_path / "v.ck").A, v.A)

    with pytest.raises(TypeError):
        io.checkpoint_bytes("nope")


def test_truncated_checkpoint(tmp_path):
    raw = io.checkpoint_bytes(constant_field([1.0]))
    (tmp_path / "t.ck").write_bytes(raw[:-10])
    with pytest.raises(io.FormatError):
        io.load_checkpoint(tmp_path / "t.ck")


def test_atomic_write_leaves_no_temp_files(tmp_path):
    io.atomic_write(tmp_path / "sub" / "a.txt", "hello\n")
    io.atomic_write(tmp_path / "sub" / "a.txt", b"bye")
    assert (tmp_path / "sub" / "a.txt").read_bytes() == b"bye"
    assert [p.name for p in (tmp_path / "sub").iterdir()] == ["a.txt"]


def test_csv_export(tmp_path):
    io.export_csv(tmp_path / "s.csv", np.array([[0.5, 1.0], [2.0, 3.0]]))
    assert (tmp_path / "s.csv").read_text().splitlines() == ["y1,y2", "0.5,1.0", "2.0,3.0"]
