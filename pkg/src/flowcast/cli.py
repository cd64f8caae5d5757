"""Command-line entry point: ``flowcast <subcommand> [options]``.

Subcommands: gen-data, train, forecast, perturb, metrics, bench.

Every subcommand accepts ``--config FILE`` with ``key = value`` lines whose keys
are option names (``batch-size`` or ``batch_size``). Flags given on the command
line override the file. ``FLOWCAST_SEED`` supplies the seed when neither sets
one. Exit codes: 0 success, 1 numerical failure, 2 usage or I/O error.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import io
from .baseline import VarModel, var_fit, var_predict
from .dynamics import (DivergenceError, FixedY1UniformY2, GaussianInit, GenerationError, gen_blob_dataset,
                       gen_pp_dataset)
from .flow import TrainConfig, TrainingError, VelocityField, train_forecast_flow, train_gaussify_flow
from .integrate import Ensemble, bench_table, propagate_ensemble
from .metrics import MetricsReport, compare, ensemble_mean_state, ensemble_sd_state
from .perturb import NoiseSpec, gen_perturbed_ensemble
from .plot import svg_scatter

log = logging.getLogger("flowcast")

EXIT_OK, EXIT_NUMERIC, EXIT_USAGE = 0, 1, 2
GENERATORS = ("pp-gaussian", "pp-uniform-y2", "blob")


class UsageError(Exception):
    pass


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in str(text).replace(" ", "").split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in _floats(text))


def resolve_seed(seed) -> int:
    if seed is not None:
        return int(seed)
    return int(os.environ.get("FLOWCAST_SEED", 0))


def read_config(path) -> dict:
    p = Path(path)
    if not p.exists():
        raise UsageError(f"config file not found: {path}")
    out = {}
    for n, line in enumerate(p.read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        if not sep:
            raise UsageError(f"{path}:{n}: expected 'key = value'")
        out[key.strip().replace("-", "_")] = val.strip()
    return out


def _need_file(path, what="file"):
    if path is None:
        raise UsageError(f"missing {what}")
    if not Path(path).exists():
        raise UsageError(f"{what} not found: {path}")
    return path


def _field(path, kind) -> VelocityField:
    obj = io.load_checkpoint(_need_file(path, f"{kind} checkpoint"))
    if not isinstance(obj, VelocityField) or obj.kind != kind:
        got = obj.kind if isinstance(obj, VelocityField) else type(obj).__name__
        raise UsageError(f"{path} is not a {kind} checkpoint (found {got})")
    return obj


# -- gen-data ---------------------------------------------------------------

def cmd_gen_data(args) -> int:
    seed = resolve_seed(args.seed)
    if args.generator == "pp-gaussian":
        sampler = GaussianInit(tuple(args.mean), args.std)
        ds = gen_pp_dataset(args.n, args.horizon, sampler, seed=seed, dt=args.dt)
    elif args.generator == "pp-uniform-y2":
        ds = gen_pp_dataset(args.n, args.horizon, FixedY1UniformY2(args.lo, args.hi), seed=seed, dt=args.dt)
    else:
        ds = gen_blob_dataset(args.n, (args.grid, args.grid), args.jitter, seed, args.horizon,
                              width=args.width, amplitude=tuple(args.amplitude))
    ds.meta["generator"] = args.generator
    io.save_dataset(args.out, ds)
    if args.csv and len(ds.state_shape) == 1:
        io.export_csv(args.csv, np.hstack([ds.flat("q0"), ds.flat("qT")]), ("q0_y1", "q0_y2", "qT_y1", "qT_y2"))
    if len(ds) == 0:
        print(f"warning: wrote empty dataset to {args.out}", file=sys.stderr)
        return EXIT_OK
    print(f"{args.generator}: n={len(ds)} dims={ds.chw} horizon={ds.horizon:g}")
    print(f"  pooled q0 mean={ds.q0.mean():.4g} std={ds.q0.std():.4g}")
    print(f"  pooled qT mean={ds.qT.mean():.4g} std={ds.qT.std():.4g}")
    if "max_invariant_drift" in ds.meta:
        print(f"  max first-integral drift={ds.meta['max_invariant_drift']:.3g}")
    return EXIT_OK


# -- train ------------------------------------------------------------------

def cmd_train(args) -> int:
    ds = io.load_dataset(_need_file(args.data, "dataset"))
    if len(ds) == 0:
        raise UsageError(f"dataset {args.data} is empty")
    if args.mode == "var":
        model = var_fit(ds)
        io.save_checkpoint(args.out, model)
        print(f"VAR fitted on {len(ds)} pairs (ridge={model.ridge:g}) -> {args.out}")
        return EXIT_OK
    cfg = TrainConfig(args.lr, args.batch_size, args.epochs, resolve_seed(args.seed), args.hidden, args.activation)
    if args.mode == "forecast":
        field = train_forecast_flow(ds, cfg)
    else:
        states = {"q0": ds.q0, "qT": ds.qT, "both": np.concatenate([ds.q0, ds.qT])}[args.states]
        field = train_gaussify_flow(states, cfg)
    final = field.loss_trace[-1]
    io.save_checkpoint(args.out, field)
    log_path = args.log or str(args.out) + ".log"
    lines = ["epoch,mean_loss"] + [f"{i + 1},{v:.10g}" for i, v in enumerate(field.loss_trace)]
    io.atomic_write(log_path, "\n".join(lines) + "\n")
    print(f"{args.mode} field: {cfg.epochs} epochs, loss {field.loss_trace[0]:.4g} -> {final:.4g} -> {args.out}")
    return EXIT_OK


# -- forecast / perturb -----------------------------------------------------

def _source_states(args):
    """A single state from --state, or an ensemble from --input."""
    if args.state is not None:
        return np.asarray(args.state, dtype=float), None
    if args.input is None:
        raise UsageError("give --state or --input")
    e = io.load_ensemble(_need_file(args.input, "input"), args.column)
    if getattr(args, "index", None) is not None:
        if not 0 <= args.index < len(e):
            raise UsageError(f"--index {args.index} out of range for {len(e)} members")
        return e.members[args.index], None
    return None, e


def _perturbed(args, q0) -> Ensemble:
    gauss = _field(args.gaussify, "gaussify")
    if q0.size != gauss.dim:
        raise UsageError(f"state dim {q0.size} does not match gaussify field dim {gauss.dim}")
    spec = NoiseSpec(args.family, args.sigma, resolve_seed(args.seed))
    return gen_perturbed_ensemble(gauss, q0, spec, args.M, args.steps)


def _emit_views(args, e: Ensemble, truth: Ensemble | None = None):
    stem = str(args.out)
    if e.state_shape == (2,):
        io.export_csv(stem + ".csv", e.members)
        if args.svg:
            series = {"forecast": e.members}
            if truth is not None:
                series = {"truth": truth.members, **series}
            io.atomic_write(args.svg, svg_scatter(series))
    else:
        grid = lambda a: "\n".join(",".join(f"{v:.6g}" for v in row) for row in a.reshape(-1, a.shape[-1]))
        io.atomic_write(stem + ".mean.csv", grid(ensemble_mean_state(e)) + "\n")
        io.atomic_write(stem + ".sd.csv", grid(ensemble_sd_state(e)) + "\n")


def cmd_forecast(args) -> int:
    model = io.load_checkpoint(_need_file(args.model, "model checkpoint"))
    if isinstance(model, VelocityField) and model.kind != "forecast":
        raise UsageError(f"{args.model} is a {model.kind} checkpoint, expected forecast")
    q0, e0 = _source_states(args)
    if e0 is None:
        if args.perturb:
            e0 = _perturbed(args, q0)
        else:
            if args.M != 1 or args.sigma != 0:
                print("note: no --perturb given; producing a single deterministic forecast", file=sys.stderr)
            e0 = Ensemble(q0[None], {"source": "state"})
    if isinstance(model, VarModel):
        out = var_predict(model, e0)
    else:
        out = propagate_ensemble(model, e0, args.steps)
    horizon = model.horizon if isinstance(model, VelocityField) else float("nan")
    io.save_ensemble(args.out, out, horizon)
    truth = io.load_ensemble(_need_file(args.truth, "truth"), "qT") if args.truth else None
    _emit_views(args, out, truth)
    print(f"forecast ensemble: M={len(out)} dims={out.state_shape} -> {args.out}")
    if truth is not None:
        rep = compare(out, truth, args.data_range)
        io.atomic_write(str(args.out) + ".report.csv", _report_csv(rep, "forecast"))
        print(rep.text("forecast vs truth"))
    return EXIT_OK


def cmd_perturb(args) -> int:
    q0, e0 = _source_states(args)
    if q0 is None:
        raise UsageError("perturb needs a single state: --state or --input with --index")
    e = _perturbed(args, q0)
    io.save_ensemble(args.out, e)
    _emit_views(args, e)
    dev = np.linalg.norm(e.flat() - q0.ravel(), axis=1) / max(np.linalg.norm(q0), 1e-300)
    print(f"perturbed ensemble: M={len(e)} family={args.family} sigma={args.sigma:g} "
          f"median relative deviation={np.median(dev):.3g} -> {args.out}")
    return EXIT_OK


# -- metrics / bench --------------------------------------------------------

def _report_csv(rep: MetricsReport, label: str) -> str:
    return "method," + ",".join(MetricsReport.columns()) + "\n" + rep.csv_row(label) + "\n"


def cmd_metrics(args) -> int:
    pred = io.load_ensemble(_need_file(args.pred, "prediction file"), args.pred_column)
    truth = io.load_ensemble(_need_file(args.truth, "truth file"), args.truth_column)
    if pred.state_shape != truth.state_shape:
        raise UsageError(f"state shapes differ: {pred.state_shape} vs {truth.state_shape}")
    rep = compare(pred, truth, args.data_range)
    text = _report_csv(rep, args.label)
    if args.out:
        io.atomic_write(args.out, text)
    print(text, end="")
    return EXIT_OK


def cmd_bench(args) -> int:
    rows = bench_table(args.repeats)
    text = "scheme,N,op_count,fn_calls,runtime_s\n" + "\n".join(r.row() for r in rows) + "\n"
    if args.out:
        io.atomic_write(args.out, text)
    print(text, end="")
    return EXIT_OK


# -- parser -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="flowcast", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help):
        p = sub.add_parser(name, help=help)
        p.add_argument("--config", help="key = value file; flags override it")
        p.set_defaults(func=func)
        return p

    g = add("gen-data", cmd_gen_data, "generate a paired dataset")
    g.add_argument("generator", choices=GENERATORS)
    g.add_argument("--n", type=int, default=1000)
    g.add_argument("--horizon", type=float, default=None)
    g.add_argument("--seed", type=int, default=None)
    g.add_argument("--out", required=True)
    g.add_argument("--csv", help="also export 2-D pairs as CSV")
    g.add_argument("--dt", type=float, default=1e-3, help="RK4 step of the oracle")
    g.add_argument("--mean", type=_floats, default=[0.1, 0.3])
    g.add_argument("--std", type=float, default=0.05)
    g.add_argument("--lo", type=float, default=0.0)
    g.add_argument("--hi", type=float, default=1.0)
    g.add_argument("--grid", type=int, default=16)
    g.add_argument("--jitter", type=float, default=0.5)
    g.add_argument("--width", type=float, default=2.5, help="blob width in pixels")
    g.add_argument("--amplitude", type=_floats, default=[0.2, 1.0], help="blob peak range lo,hi")

    t = add("train", cmd_train, "train a forecast/gaussify field or fit the VAR baseline")
    t.add_argument("--mode", choices=("forecast", "gaussify", "var"), default="forecast")
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--states", choices=("q0", "qT", "both"), default="q0", help="marginal used by gaussify")
    t.add_argument("--lr", type=float, default=1e-4)
    t.add_argument("--batch-size", type=int, default=64)
    t.add_argument("--epochs", type=int, default=200)
    t.add_argument("--seed", type=int, default=None)
    t.add_argument("--hidden", type=_ints, default=(128, 128, 128))
    t.add_argument("--activation", choices=("tanh", "silu"), default="tanh")
    t.add_argument("--log", help="training log path (default: <out>.log)")

    def source_opts(p):
        p.add_argument("--state", type=_floats, help="comma-separated source state")
        p.add_argument("--input", help="FMDS ensemble or dataset")
        p.add_argument("--column", choices=("q0", "qT"), default="q0", help="dataset column used as input")
        p.add_argument("--gaussify", help="gaussify checkpoint")
        p.add_argument("--sigma", type=float, default=0.2)
        p.add_argument("--family", choices=("normal", "uniform", "constant"), default="normal")
        p.add_argument("--M", type=int, default=100)
        p.add_argument("--steps", type=int, default=100, help="Euler steps N")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", required=True)
        p.add_argument("--svg", help="write an SVG scatter (2-D states)")
        p.add_argument("--data-range", type=float, default=1.0)

    f = add("forecast", cmd_forecast, "propagate a state or ensemble with a forecast field or VAR model")
    f.add_argument("--model", required=True)
    f.add_argument("--perturb", action="store_true", help="build the input ensemble with the gaussify field")
    f.add_argument("--truth", help="dataset/ensemble whose qT members are the reference")
    source_opts(f)

    p = add("perturb", cmd_perturb, "perturbed ensemble around one state")
    p.add_argument("--index", type=int, help="member of --input to perturb")
    source_opts(p)

    m = add("metrics", cmd_metrics, "compare a predicted ensemble against a reference")
    m.add_argument("--pred", required=True)
    m.add_argument("--truth", required=True)
    m.add_argument("--pred-column", choices=("q0", "qT"), default="qT")
    m.add_argument("--truth-column", choices=("q0", "qT"), default="qT")
    m.add_argument("--label", default="pred")
    m.add_argument("--data-range", type=float, default=1.0)
    m.add_argument("--out")

    b = add("bench", cmd_bench, "ODE vs SDE cost table")
    b.add_argument("--repeats", type=int, default=20)
    b.add_argument("--out")
    return parser


def _config_path(argv):
    for i, a in enumerate(argv):
        if a == "--config" and i + 1 < len(argv):
            return argv[i + 1]
        if a.startswith("--config="):
            return a.split("=", 1)[1]
    return None


def _apply_config(parser, argv):
    """Install config-file values as subparser defaults, then parse the flags."""
    argv = list(sys.argv[1:] if argv is None else argv)
    path = _config_path(argv)
    subs = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction)).choices
    command = next((a for a in argv if a in subs), None)
    if path is None or command is None:
        return parser.parse_args(argv)
    values = read_config(path)
    sub = subs[command]
    actions = {a.dest: a for a in sub._actions if a.dest not in ("help", "config", "func")}
    unknown = sorted(set(values) - set(actions))
    if unknown:
        raise UsageError(f"unknown config keys for {command}: {', '.join(unknown)}")
    defaults = {}
    for key, raw in values.items():
        action = actions[key]
        if isinstance(action, argparse._StoreTrueAction):
            defaults[key] = raw.lower() in ("1", "true", "yes", "on")
        elif action.type is not None:
            defaults[key] = action.type(raw)
        else:
            defaults[key] = raw
        if action.choices is not None and defaults[key] not in action.choices:
            raise UsageError(f"config value {key} = {raw} is not one of {list(action.choices)}")
        action.required = False
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    except (UsageError, argparse.ArgumentTypeError, ValueError) as exc:
        print(f"flowcast: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(message)s")
    if getattr(args, "horizon", "unset") is None:
        args.horizon = 2.0 if args.generator == "blob" else 200.0
    try:
        return args.func(args)
    except (UsageError, io.FormatError, OSError) as exc:
        print(f"flowcast: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (TrainingError, DivergenceError, GenerationError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"flowcast: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"flowcast: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
