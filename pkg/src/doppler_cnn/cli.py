"""``doppler-cnn`` command line.

Settings come from three layers, later ones winning: built-in defaults, an
INI config file (``--config`` or the ``DOPPLER_CNN_CONFIG`` environment
variable) and explicit flags. Sections of the config file::

    [generator]   GeneratorConfig fields (sample_rate_hz, master_seed, ...)
    [model]       p, s, conv_padding
    [train]       epochs, batch_size, lr, seed, split
    [doppler]     f_min_hz, f_max_hz, seed

Exit status: 0 on success, 1 on a runtime failure, 2 on bad usage or config.
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path


from . import __version__
from .experiments import (
    TrainConfig,
    evaluate,
    measure_runtime,
    run_pure_shift_experiment,
    run_random_doppler_experiment,
    run_sweep,
    split_dataset,
    train,
    doppler_report,
    draw_doppler,
    compare_predictions,
)
from .models import InvariantModel, InvariantModelConfig, load_checkpoint, init_invariant, init_vanilla, save_checkpoint
from .rf_synth import GeneratorConfig, build_dataset, load_dataset, save_dataset

CONFIG_ENV = "DOPPLER_CNN_CONFIG"

log = logging.getLogger("doppler_cnn")


class UsageError(Exception):
    """Bad configuration; reported with exit status 2."""


# --------------------------------------------------------------------- config

_MODEL_KEYS = {"p": int, "s": int, "conv_padding": str}
_DOPPLER_KEYS = {"f_min_hz": float, "f_max_hz": float, "seed": int}


def _dataclass_types(cls) -> dict:
    return {f.name: f.type for f in dataclasses.fields(cls)}


def _coerce(value: str, default):
    if isinstance(default, bool):
        return value.strip().lower() in ("1", "true", "yes", "on")
    if isinstance(default, tuple):
        return tuple(type(default[0])(v) if default else float(v) for v in value.replace(",", " ").split())
    if default is None:
        return int(value)
    return type(default)(value)


def load_config(path: str | None) -> dict[str, dict]:
    """Parse an INI file into per-section override dicts; unknown keys are errors."""
    out: dict[str, dict] = {"generator": {}, "model": {}, "train": {}, "doppler": {}}
    if not path:
        return out
    parser = configparser.ConfigParser()
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    defaults = {
        "generator": {f.name: f.default for f in dataclasses.fields(GeneratorConfig)},
        "model": {"p": 280, "s": 2, "conv_padding": "zero"},
        "train": {f.name: f.default for f in dataclasses.fields(TrainConfig)},
        "doppler": {"f_min_hz": 1.0, "f_max_hz": 5000.0, "seed": 0},
    }
    for section in parser.sections():
        if section not in defaults:
            raise UsageError(f"config {path}: unknown section [{section}]")
        for key, raw in parser[section].items():
            if key not in defaults[section]:
                raise UsageError(f"config {path}: unknown key {key!r} in [{section}]")
            try:
                out[section][key] = _coerce(raw, defaults[section][key])
            except ValueError as exc:
                raise UsageError(f"config {path}: bad value for {section}.{key}: {raw!r}") from exc
    return out


def _pick(args, name, section: dict, key: str, fallback):
    val = getattr(args, name, None)
    if val is not None:
        return val
    return section.get(key, fallback)


def generator_config(args, cfg: dict) -> GeneratorConfig:
    g = dict(cfg["generator"])
    if getattr(args, "frames", None) is not None:
        g["frames_per_class_snr"] = args.frames
    if getattr(args, "seed", None) is not None:
        g["master_seed"] = args.seed
    if getattr(args, "sample_rate", None) is not None:
        g["sample_rate_hz"] = args.sample_rate
    if getattr(args, "desk_scale", False):
        g.setdefault("frames_per_class_snr", 200)
        g.setdefault("snr_grid_db", (-10, 0, 10, 20))
    lo, hi, step = (getattr(args, k, None) for k in ("snr_min", "snr_max", "snr_step"))
    if any(v is not None for v in (lo, hi, step)):
        grid = g.get("snr_grid_db", GeneratorConfig.snr_grid_db)
        lo = grid[0] if lo is None else lo
        hi = grid[-1] if hi is None else hi
        step = step or 2
        g["snr_grid_db"] = tuple(range(lo, hi + 1, step))
    try:
        return GeneratorConfig(**g)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"generator config: {exc}") from exc


def model_config(args, cfg: dict) -> InvariantModelConfig:
    m = cfg["model"]
    try:
        return InvariantModelConfig(p=_pick(args, "padding", m, "p", 280), s=_pick(args, "stride", m, "s", 2),
                                    conv_padding=_pick(args, "conv_pad", m, "conv_padding", "zero"))
    except ValueError as exc:
        raise UsageError(f"model config: {exc}") from exc


def train_config(args, cfg: dict) -> TrainConfig:
    t = dict(cfg["train"])
    for flag, key in (("epochs", "epochs"), ("batch_size", "batch_size"), ("lr", "lr"),
                      ("train_seed", "seed"), ("split", "split")):
        if getattr(args, flag, None) is not None:
            t[key] = getattr(args, flag)
    try:
        return TrainConfig(**t)
    except ValueError as exc:
        raise UsageError(f"train config: {exc}") from exc


def doppler_range(args, cfg: dict) -> tuple[tuple[float, float], int]:
    d = cfg["doppler"]
    lo = _pick(args, "doppler_min", d, "f_min_hz", 1.0)
    hi = _pick(args, "doppler_max", d, "f_max_hz", 5000.0)
    if not 0 <= lo <= hi:
        raise UsageError("need 0 <= doppler-min <= doppler-max")
    return (lo, hi), _pick(args, "doppler_seed", d, "seed", 0)


# ------------------------------------------------------------------- datasets

def _dataset(args, cfg: dict):
    """Load --data if given, otherwise generate from the generator settings."""
    if getattr(args, "data", None):
        return load_dataset(args.data)
    return build_dataset(generator_config(args, cfg))


def _test_split(args, cfg: dict, ds):
    tcfg = train_config(args, cfg)
    return split_dataset(ds, tcfg.split, tcfg.seed)


def _out_dir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


# ------------------------------------------------------------------ commands

def cmd_generate(args, cfg) -> int:
    gcfg = generator_config(args, cfg)
    ds = build_dataset(gcfg)
    save_dataset(ds, args.out)
    print(f"wrote {len(ds)} frames to {args.out}")
    return 0


def cmd_train(args, cfg) -> int:
    from .report import _write_atomic

    ds = _dataset(args, cfg)
    tcfg = train_config(args, cfg)
    tr, te = split_dataset(ds, tcfg.split, tcfg.seed)
    if args.model == "invariant":
        model = init_invariant(model_config(args, cfg), seed=tcfg.seed)
    else:
        model = init_vanilla(seed=tcfg.seed)
    history = train(model, tr, tcfg, on_epoch=lambda r: print(f"epoch {r.epoch}: loss {r.loss:.4f} "
                                                                 f"({r.seconds:.1f}s)", flush=True))
    acc = evaluate(model, te)
    extra = {"train": dataclasses.asdict(tcfg), "dataset": ds.manifest,
             "test_accuracy": acc.per_class, "history": [dataclasses.asdict(h) for h in history]}
    save_checkpoint(model, args.out, extra=extra)
    hist_path = Path(args.history) if args.history else Path(str(args.out) + ".history.csv")
    lines = [f"# model: {json.dumps(model.config_dict(), sort_keys=True)}",
             f"# train: {json.dumps(dataclasses.asdict(tcfg), sort_keys=True)}",
             "epoch,loss,seconds,steps"]
    lines += [f"{h.epoch},{h.loss!r},{h.seconds:.4f},{h.steps}" for h in history]
    _write_atomic(hist_path, "\n".join(lines) + "\n")
    for name, value in acc.per_class.items():
        print(f"{name:>13s} {value:.3f}")
    print(f"wrote {args.out} and {hist_path}")
    return 0


def _override_padding(model, conv_pad: str | None):
    """Run a checkpoint with a different conv padding mode (the weights do not depend on it)."""
    if conv_pad is None or not isinstance(model, InvariantModel) or model.config.conv_padding == conv_pad:
        return model
    log.warning("checkpoint was trained with %s conv padding; evaluating with %s",
                model.config.conv_padding, conv_pad)
    cfg = dataclasses.replace(model.config, conv_padding=conv_pad)
    clone = init_invariant(cfg, model.seed)
    for k, v in model.params().items():
        clone.params()[k][...] = v
    return clone


def _print_report(title: str, rep) -> None:
    print(title)
    print(f"{'class':>13s} {'before':>7s} {'after':>7s} {'|delta|':>8s}")
    for name, b, a, d in rep.rows():
        print(f"{name:>13s} {b:7.3f} {a:7.3f} {d:8.3f}")
    print(f"{'total':>13s} {'':7s} {'':7s} {rep.total_abs_delta:8.3f}")


def cmd_eval(args, cfg) -> int:
    from .report import write_eval_csv

    model = _override_padding(load_checkpoint(args.model), args.conv_pad)
    _, te = _test_split(args, cfg, _dataset(args, cfg))
    meta = {"model": model.config_dict(), "dataset": te.manifest.get("config", {})}
    if args.doppler:
        (lo, hi), seed = doppler_range(args, cfg)
        f_d = draw_doppler(len(te), (lo, hi), seed)
        fs = te.manifest.get("config", {}).get("sample_rate_hz", 1e6)
        rep = doppler_report(model, te, f_d, fs, {"experiment": "random_doppler", "f_range_hz": [lo, hi],
                                                   "seed": seed, "sample_rate_hz": fs})
    elif args.bins is not None:
        if not isinstance(model, InvariantModel):
            raise UsageError("--bins needs an invariant-model checkpoint")
        rep = run_pure_shift_experiment(model, te, args.bins)
    else:
        pred = model.predict(te.iq)
        rep = compare_predictions(te.labels, pred, pred, te.snr_db, {"experiment": "clean"})
    _print_report("evaluation", rep)
    if args.out:
        write_eval_csv(rep, args.out, meta)
        print(f"wrote {args.out}")
    return 0


def cmd_shift_test(args, cfg) -> int:
    from .report import write_eval_csv

    model = _override_padding(load_checkpoint(args.model), args.conv_pad)
    if not isinstance(model, InvariantModel):
        raise UsageError("shift-test needs an invariant-model checkpoint")
    _, te = _test_split(args, cfg, _dataset(args, cfg))
    out = _out_dir(args.out_dir) if args.out_dir else None
    meta = {"model": model.config_dict(), "dataset": te.manifest.get("config", {})}
    rep = run_pure_shift_experiment(model, te, args.bins)
    _print_report(f"pure shift, {args.bins} bins", rep)
    print(f"changed predictions: {rep.changed_predictions} of {len(te)}")
    if out:
        write_eval_csv(rep, out / "pure_shift.csv", meta)
    if args.vanilla:
        van = load_checkpoint(args.vanilla)
        (lo, hi), seed = doppler_range(args, cfg)
        fs = te.manifest.get("config", {}).get("sample_rate_hz", 1e6)
        cmp = run_random_doppler_experiment(model, van, te, (lo, hi), fs, seed)
        _print_report(f"random Doppler {lo:g}-{hi:g} Hz, invariant", cmp.invariant)
        _print_report(f"random Doppler {lo:g}-{hi:g} Hz, vanilla", cmp.vanilla)
        if out:
            write_eval_csv(cmp.invariant, out / "doppler_invariant.csv", meta)
            write_eval_csv(cmp.vanilla, out / "doppler_vanilla.csv", {**meta, "model": van.config_dict()})
    return 0


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.replace(",", " ").split()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected integers, got {text!r}") from exc


def cmd_sweep(args, cfg) -> int:
    from .report import write_runtime_csv, write_runtime_svg, write_sweep_csv, write_sweep_svgs

    ds = _dataset(args, cfg)
    tcfg = train_config(args, cfg)
    tr, te = split_dataset(ds, tcfg.split, tcfg.seed)
    out = _out_dir(args.out_dir)
    conv_pad = _pick(args, "conv_pad", cfg["model"], "conv_padding", "zero")
    meta = {"dataset": ds.manifest.get("config", {}), "train": dataclasses.asdict(tcfg),
            "conv_padding": conv_pad}
    if args.runtime:
        cells = measure_runtime(args.paddings, args.strides, tr, epochs=max(3, args.runtime_epochs),
                                batches_per_epoch=args.runtime_batches, batch_size=tcfg.batch_size,
                                seed=tcfg.seed, conv_padding=conv_pad)
        for c in cells:
            print(f"p={c.padding:4d} s={c.stride} mean epoch {c.mean_seconds:.3f}s")
        write_runtime_csv(cells, out / "runtime.csv", meta)
        write_runtime_svg(cells, out / "runtime.svg")
        return 0
    (lo, hi), seed = doppler_range(args, cfg)
    fs = ds.manifest.get("config", {}).get("sample_rate_hz", 1e6)
    rep = run_sweep(args.paddings, args.strides, tr, te, tcfg, conv_pad, (lo, hi), fs, seed, args.jobs)
    for c in rep.cells:
        print(f"p={c.padding:4d} s={c.stride} total|delta|={c.total_abs_delta:.3f} "
              f"condition={'yes' if c.condition_ok else 'no'}")
    print(f"mean total |delta|: condition holds {rep.mean_delta(True):.3f}, "
          f"violated {rep.mean_delta(False):.3f}")
    write_sweep_csv(rep, out / "sweep.csv", meta)
    write_sweep_svgs(rep, out)
    print(f"wrote {out / 'sweep.csv'} and SVG plots")
    return 0


def cmd_report(args, cfg) -> int:
    from .report import write_sweep_svgs, read_sweep_csv, write_runtime_svg
    from .experiments import RuntimeCell
    import csv

    out = _out_dir(args.out_dir)
    with open(args.input, encoding="utf-8") as fh:
        header = next((line for line in fh if not line.startswith("#")), "")
    if header.startswith("padding,stride,total_abs_delta"):
        paths = write_sweep_svgs(read_sweep_csv(args.input), out)
    elif header.startswith("padding,stride,mean_epoch_seconds"):
        with open(args.input, encoding="utf-8") as fh:
            rows = list(csv.DictReader(line for line in fh if not line.startswith("#")))
        cells = [RuntimeCell(int(r["padding"]), int(r["stride"]), [float(r["mean_epoch_seconds"])])
                 for r in rows]
        paths = [write_runtime_svg(cells, out / "runtime.svg")]
    else:
        raise UsageError(f"{args.input}: not a sweep or runtime CSV")
    for p in paths:
        print(f"wrote {p}")
    return 0


def cmd_selftest(args, cfg) -> int:
    from . import selftest

    return 0 if selftest.run() else 1


# --------------------------------------------------------------------- parser

def _add_data_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", help="dataset file written by 'generate' (default: generate in memory)")
    p.add_argument("--seed", type=int, help="generator master seed")
    p.add_argument("--frames", type=int, help="frames per (class, SNR)")
    p.add_argument("--snr-min", type=int)
    p.add_argument("--snr-max", type=int)
    p.add_argument("--snr-step", type=int)
    p.add_argument("--sample-rate", type=float, help="sample rate in Hz")
    p.add_argument("--desk-scale", action="store_true",
                   help="200 frames per (class, SNR) at -10, 0, 10, 20 dB unless overridden")


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--train-seed", type=int, help="seed for the split, initialisation and shuffling")
    p.add_argument("--split", type=float, help="training fraction")


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--padding", type=int, help="zero padding p per side")
    p.add_argument("--stride", type=int, help="APS stride s")
    p.add_argument("--conv-pad", choices=("zero", "circular"))


def _add_doppler_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--doppler-min", type=float, help="smallest |f_d| in Hz")
    p.add_argument("--doppler-max", type=float, help="largest |f_d| in Hz")
    p.add_argument("--doppler-seed", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="doppler-cnn", description="Doppler-invariant RF classifier toolkit")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--config", help=f"INI config file (default: ${CONFIG_ENV})")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("generate", help="synthesise and save a labelled dataset")
    _add_data_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="train a model and write a checkpoint plus history CSV")
    _add_data_flags(p)
    _add_train_flags(p)
    _add_model_flags(p)
    p.add_argument("--model", choices=("invariant", "vanilla"), default="invariant")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--history", help="history CSV path (default: <out>.history.csv)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on the held-out split")
    _add_data_flags(p)
    _add_train_flags(p)
    _add_doppler_flags(p)
    p.add_argument("--model", required=True, help="checkpoint path")
    p.add_argument("--conv-pad", choices=("zero", "circular"))
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--bins", type=int, help="pure shift by this many bins")
    mode.add_argument("--doppler", action="store_true", help="random time-domain Doppler")
    p.add_argument("--out", help="CSV path")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("shift-test", help="pure-shift and random-Doppler experiments")
    _add_data_flags(p)
    _add_train_flags(p)
    _add_doppler_flags(p)
    p.add_argument("--model", required=True, help="invariant-model checkpoint")
    p.add_argument("--vanilla", help="baseline checkpoint for the random-Doppler comparison")
    p.add_argument("--bins", type=int, default=20)
    p.add_argument("--conv-pad", choices=("zero", "circular"))
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_shift_test)

    p = sub.add_parser("sweep", help="train one invariant model per (padding, stride) cell")
    _add_data_flags(p)
    _add_train_flags(p)
    _add_doppler_flags(p)
    p.add_argument("--paddings", type=_int_list, default=[0, 20, 30, 40, 80])
    p.add_argument("--strides", type=_int_list, default=[2, 3])
    p.add_argument("--conv-pad", choices=("zero", "circular"))
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--runtime", action="store_true", help="measure epoch times instead of accuracy")
    p.add_argument("--runtime-epochs", type=int, default=3)
    p.add_argument("--runtime-batches", type=int, default=4)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="render a sweep or runtime CSV as SVG plots")
    p.add_argument("input")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("selftest", help="run the built-in oracle checks")
    p.set_defaults(func=cmd_selftest)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config or os.environ.get(CONFIG_ENV))
        return args.func(args, cfg)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"doppler-cnn: error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, FloatingPointError) as exc:
        print(f"doppler-cnn: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
