"""Binary containers and text sidecars.

FMDS (datasets and ensembles)::

    b"FMDS" | u32 version=1 | u32 C | u32 H | u32 W | u64 count | f64 horizon
    | count * k * C*H*W little-endian f64

``k`` is 2 for a pair dataset (q0 block then qT block per pair) and 1 for an
ensemble. It is recovered from the payload length and cross-checked against
the ``kind`` entry of the ``<file>.meta`` sidecar.

FMCK (models)::

    b"FMCK" | u32 version=1 | 4-byte kind tag | u32 activation tag | u32 L
    | L * u32 dims | per layer: W (row-major) then b, f64
    | f64 horizon | u32 n_stats | n_stats * (u32 dim, f64 mean[dim], f64 std[dim])

Kind tags: ``FCST`` forecast field, ``GAUS`` gaussify field, ``NET_`` bare
network, ``VAR1`` VAR model (dims ``[d, d]``, W = A, b = b).
"""
from __future__ import annotations

import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .baseline import VarModel
from .dynamics import Dataset, NormStats
from .flow import VelocityField
from .integrate import Ensemble
from .nn import ACTIVATIONS, ModelParams

DS_MAGIC = b"FMDS"
CK_MAGIC = b"FMCK"
VERSION = 1
_DS_HEADER = struct.Struct("<4sIIIIQd")
KIND_TAGS = {"forecast": b"FCST", "gaussify": b"GAUS", "net": b"NET_", "var": b"VAR1"}
TAG_KINDS = {v: k for k, v in KIND_TAGS.items()}


class FormatError(ValueError):
    pass


def atomic_write(path, data: bytes | str):
    """Write to a temp file in the target directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "w" if isinstance(data, str) else "wb"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, mode) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _chw(shape) -> tuple:
    shape = tuple(int(s) for s in shape)
    if len(shape) == 3:
        return shape
    if len(shape) == 1:
        return (1, 1, shape[0])
    if len(shape) == 2:
        return (1,) + shape
    raise FormatError(f"cannot store states of shape {shape}")


def _state_shape(chw) -> tuple:
    c, h, w = chw
    return (w,) if c == 1 and h == 1 else (c, h, w)


def _fmt_value(v):
    if isinstance(v, np.ndarray):
        v = v.tolist()
    if isinstance(v, (list, tuple, dict)):
        return json.dumps(v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_meta(path, meta: dict):
    lines = [f"{k} = {_fmt_value(v)}" for k, v in meta.items()]
    atomic_write(str(path) + ".meta", "\n".join(lines) + "\n")


def read_meta(path) -> dict:
    p = Path(str(path) + ".meta")
    if not p.exists():
        return {}
    meta = {}
    for line in p.read_text().splitlines():
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        key, _, val = line.partition("=")
        val = val.strip()
        try:
            meta[key.strip()] = json.loads(val)
        except json.JSONDecodeError:
            meta[key.strip()] = val
    return meta


def _norm_meta(prefix, stats: NormStats) -> dict:
    return {f"{prefix}_mean": stats.mean, f"{prefix}_std": stats.std,
            f"{prefix}_constant_dims": np.flatnonzero(stats.constant)}


def _ds_bytes(chw, count, horizon, payload: np.ndarray) -> bytes:
    header = _DS_HEADER.pack(DS_MAGIC, VERSION, *chw, count, float(horizon))
    return header + np.ascontiguousarray(payload, dtype="<f8").tobytes()


def dataset_to_bytes(ds: Dataset) -> bytes:
    n = len(ds)
    payload = np.stack([ds.flat("q0"), ds.flat("qT")], axis=1) if n else np.empty(0)
    return _ds_bytes(_chw(ds.state_shape), n, ds.horizon, payload)


def save_dataset(path, ds: Dataset):
    atomic_write(path, dataset_to_bytes(ds))
    meta = {"kind": "pairs", **ds.meta, "count": len(ds), "horizon": ds.horizon}
    if len(ds):
        meta.update(_norm_meta("q0", ds.norm_stats("q0")))
        meta.update(_norm_meta("qT", ds.norm_stats("qT")))
    write_meta(path, meta)


def save_ensemble(path, e: Ensemble, horizon: float = float("nan")):
    atomic_write(path, _ds_bytes(_chw(e.state_shape), len(e), horizon, e.flat()))
    write_meta(path, {"kind": "ensemble", **e.meta, "count": len(e)})


def read_container(path):
    """Parse an FMDS file. Returns ``(kind, state_shape, horizon, array, meta)``.

    ``array`` has shape (count, 2, dim) for pairs and (count, dim) for ensembles.
    """
    raw = Path(path).read_bytes()
    if len(raw) < _DS_HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, version, c, h, w, count, horizon = _DS_HEADER.unpack_from(raw)
    if magic != DS_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    dim = c * h * w
    body = len(raw) - _DS_HEADER.size
    meta = read_meta(path)
    if count == 0:
        k = 1 if meta.get("kind") == "ensemble" else 2
    elif dim and body == count * 2 * dim * 8:
        k = 2
    elif dim and body == count * dim * 8:
        k = 1
    else:
        raise FormatError(f"{path}: payload of {body} bytes does not fit {count} states of dim {dim}")
    kind = "pairs" if k == 2 else "ensemble"
    if "kind" in meta and meta["kind"] != kind:
        raise FormatError(f"{path}: payload looks like {kind} but sidecar says {meta['kind']}")
    data = np.frombuffer(raw, dtype="<f8", offset=_DS_HEADER.size).astype(float)
    data = data.reshape((count, 2, dim) if k == 2 else (count, dim))
    return kind, _state_shape((c, h, w)), horizon, data, meta


def load_dataset(path) -> Dataset:
    kind, shape, horizon, data, meta = read_container(path)
    if kind != "pairs":
        raise FormatError(f"{path} holds an ensemble, not a pair dataset")
    meta = {k: v for k, v in meta.items() if not k.startswith(("q0_", "qT_"))}
    return Dataset(data[:, 0], data[:, 1], horizon, shape, meta)


def load_ensemble(path, column: str = "qT") -> Ensemble:
    """Read an ensemble file, or one column (``q0``/``qT``) of a pair dataset."""
    kind, shape, horizon, data, meta = read_container(path)
    if kind == "pairs":
        if column not in ("q0", "qT"):
            raise ValueError("column must be q0 or qT")
        data = data[:, 0 if column == "q0" else 1]
        meta = {"source": f"{meta.get('generator', 'dataset')}:{column}", "horizon": horizon}
    if len(data) == 0:
        raise FormatError(f"{path}: no members")
    return Ensemble(data.reshape((len(data),) + shape), meta)


def export_csv(path, states: np.ndarray, header=("y1", "y2")):
    states = np.asarray(states, dtype=float).reshape(len(states), -1)
    lines = [",".join(header[: states.shape[1]])]
    lines += [",".join(repr(float(v)) for v in row) for row in states]
    atomic_write(path, "\n".join(lines) + "\n")


def _pack_params(kind_tag: bytes, params: ModelParams, act_tag: int) -> bytes:
    dims = params.layer_dims
    parts = [CK_MAGIC, struct.pack("<I", VERSION), kind_tag, struct.pack("<II", act_tag, len(dims))]
    parts.append(struct.pack(f"<{len(dims)}I", *dims))
    for w, b in zip(params.weights, params.biases):
        parts.append(np.ascontiguousarray(w, dtype="<f8").tobytes())
        parts.append(np.ascontiguousarray(b, dtype="<f8").tobytes())
    return b"".join(parts)


def _pack_stats(stats_list) -> bytes:
    parts = [struct.pack("<I", len(stats_list))]
    for s in stats_list:
        parts.append(struct.pack("<I", len(s.mean)))
        parts.append(np.ascontiguousarray(s.mean, dtype="<f8").tobytes())
        parts.append(np.ascontiguousarray(s.std, dtype="<f8").tobytes())
    return b"".join(parts)


def checkpoint_bytes(obj) -> bytes:
    if isinstance(obj, VelocityField):
        head = _pack_params(KIND_TAGS[obj.kind], obj.params, ACTIVATIONS.index(obj.params.activation))
        return head + struct.pack("<d", obj.horizon) + _pack_stats([obj.in_stats, obj.out_stats])
    if isinstance(obj, ModelParams):
        head = _pack_params(KIND_TAGS["net"], obj, ACTIVATIONS.index(obj.activation))
        return head + struct.pack("<d", float("nan")) + _pack_stats([])
    if isinstance(obj, VarModel):
        d = obj.dim
        params = ModelParams((d, d), [obj.A], [obj.b], "tanh")
        return _pack_params(KIND_TAGS["var"], params, 0) + struct.pack("<d", float("nan")) + _pack_stats([])
    raise TypeError(f"cannot checkpoint {type(obj).__name__}")


def save_checkpoint(path, obj):
    atomic_write(path, checkpoint_bytes(obj))


class _Reader:
    def __init__(self, raw, path):
        self.raw, self.pos, self.path = raw, 0, path

    def take(self, fmt):
        size = struct.calcsize(fmt)
        if self.pos + size > len(self.raw):
            raise FormatError(f"{self.path}: truncated checkpoint")
        out = struct.unpack_from(fmt, self.raw, self.pos)
        self.pos += size
        return out

    def floats(self, n):
        if self.pos + 8 * n > len(self.raw):
            raise FormatError(f"{self.path}: truncated checkpoint")
        out = np.frombuffer(self.raw, dtype="<f8", count=n, offset=self.pos).astype(float)
        self.pos += 8 * n
        return out


def load_checkpoint(path):
    """Return a ``VelocityField``, ``ModelParams`` or ``VarModel``."""
    r = _Reader(Path(path).read_bytes(), path)
    magic, version, tag = r.take("<4sI4s")
    if magic != CK_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if tag not in TAG_KINDS:
        raise FormatError(f"{path}: unknown kind tag {tag!r}")
    act_tag, n_dims = r.take("<II")
    if act_tag >= len(ACTIVATIONS):
        raise FormatError(f"{path}: unknown activation tag {act_tag}")
    dims = r.take(f"<{n_dims}I")
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        weights.append(r.floats(fan_in * fan_out).reshape(fan_out, fan_in))
        biases.append(r.floats(fan_out))
    (horizon,) = r.take("<d")
    (n_stats,) = r.take("<I")
    stats = []
    for _ in range(n_stats):
        (dim,) = r.take("<I")
        mean, std = r.floats(dim), r.floats(dim)
        stats.append(NormStats(mean, std, std == 1.0))
    kind = TAG_KINDS[tag]
    if kind == "var":
        return VarModel(weights[0], biases[0])
    params = ModelParams(dims, weights, biases, ACTIVATIONS[act_tag])
    if kind == "net":
        return params
    if len(stats) != 2:
        raise FormatError(f"{path}: field checkpoint needs 2 normalization blocks, found {len(stats)}")
    return VelocityField(params, kind, stats[0], stats[1], horizon)
