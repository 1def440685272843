"""Command-line entry point: ``fmricnn <subcommand> ...``.

Exit codes: 0 ok, 2 usage error, 3 data/format error, 4 numeric failure.
Errors are printed to stderr as one line: ``error: <ErrorClass>: <message>``.
"""
from __future__ import annotations

import argparse
import contextlib
import hashlib
import json
import os
import platform
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, nifti
from .crossval import DISJOINT, RESHUFFLED, run_cv
from .dataset import (
    PIXEL_F32,
    PIXEL_U8,
    MeanImage,
    SliceRecordStore,
    SplitSpec,
    compute_mean_image,
    generate_synthetic,
    iter_slices,
    load_idx_pair,
    split,
)
from .errors import FmriCnnError, GradientCheckFailed, UsageError
from .inspect import dump_filters, layer_statistics, stats_csv
from .nn import build_network, gradient_check, kernels, lenet5, small_lenet
from .nn import checkpoint as ckpt
from .trainer import TrainConfig, evaluate, iterations_for, train

DATA_DIR_ENV = "FMRICNN_DATA_DIR"


# -- helpers ------------------------------------------------------------------

def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def resolve_input(path: str) -> Path:
    """Relative paths missing from the cwd are looked up in $FMRICNN_DATA_DIR."""
    p = Path(path)
    base = os.environ.get(DATA_DIR_ENV)
    if not p.is_absolute() and not p.exists() and base:
        return Path(base) / p
    return p


def parse_size(text: str) -> tuple[int, int] | None:
    if text.lower() == "none":
        return None
    try:
        h, w = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected HxW, got {text!r}") from None
    return h, w


def parse_floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.split(","))


def parse_ints(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.split(","))


def parse_keep(text: str) -> dict[int, int]:
    out = {}
    for item in text.split(","):
        src, _, dst = item.partition(":")
        out[int(src)] = int(dst) if dst else int(src)
    return out


def write_manifest(path: Path, args, config: dict, inputs=(), outputs=(), started=None, **extra) -> None:
    manifest = {
        "subcommand": args.command,
        "version": __version__,
        "kernel_backend": kernels.BACKEND,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "config": config,
        "inputs": {str(p): sha256(p) for p in inputs},
        "outputs": {str(p): sha256(p) for p in outputs},
        "started": started,
        "finished": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        **extra,
    }
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n")


def _now() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%S%z")


@contextlib.contextmanager
def blas_threads(n: int):
    """Pin BLAS to ``n`` threads; 1 is the bitwise-reference mode."""
    from threadpoolctl import threadpool_limits

    with threadpool_limits(limits=max(1, n)):
        yield


def _pixel_format(name: str) -> int:
    return PIXEL_U8 if name == "u8" else PIXEL_F32


def _net_config(args, store: SliceRecordStore):
    return lenet5((1, store.height, store.width), conv=args.conv, kernels=args.kernels, hidden=args.hidden)


def _train_config(args) -> TrainConfig:
    return TrainConfig(
        epochs=args.epochs, batch_size=args.batch, base_lr=args.lr, lr_gamma=args.gamma,
        lr_step_epochs=args.lr_step, momentum=args.momentum, seed=args.seed, eval_every=args.eval_every,
    )


def _save_mean(path: Path, mean: MeanImage) -> None:
    with open(path, "wb") as fh:
        np.save(fh, mean.pixels)


def _load_mean(path) -> MeanImage:
    return MeanImage(np.load(path))


PARTS = ("train", "val", "test")


def _save_split(path: Path, n: int, parts) -> None:
    """Per-record part index (0 train, 1 val, 2 test, -1 unused)."""
    side = np.full(n, -1, dtype=np.int8)
    for i, idx in enumerate(parts):
        side[np.asarray(idx, dtype=np.intp)] = i
    with open(path, "wb") as fh:
        np.save(fh, side)


# -- subcommands --------------------------------------------------------------

def cmd_synth(args) -> int:
    started = _now()
    h, w = args.size
    store = generate_synthetic(args.subjects, args.slices, h, w, args.seed, args.amplitude,
                               args.noise, _pixel_format(args.pixel_format))
    out = Path(args.out)
    store.write(out)
    write_manifest(Path(str(out) + ".run.json"), args, vars_config(args), outputs=[out], started=started,
                   records=len(store))
    print(f"wrote {len(store)} records to {out}")
    return 0


def cmd_convert(args) -> int:
    started = _now()
    slices = []
    inputs = []
    for item in args.inputs:
        path, label = item, args.label
        head, sep, tail = item.rpartition(":")
        if sep and tail in ("0", "1"):
            path, label = head, int(tail)
        if label is None:
            raise UsageError(f"no label for {path}; use --label or PATH:LABEL")
        path = resolve_input(path)
        inputs.append(path)
        subject = args.subject if (args.subject and len(args.inputs) == 1) else path.name.split(".")[0]
        vol = nifti.load(path)
        slices.extend(iter_slices(vol, args.drop_slices, args.resize, label, subject))
    store = SliceRecordStore.from_slices(slices, _pixel_format(args.pixel_format), args.seed)
    out = Path(args.out)
    if args.append and out.exists():
        store = SliceRecordStore.concat([SliceRecordStore.read(out), store])
    store.write(out)
    write_manifest(Path(str(out) + ".run.json"), args, vars_config(args), inputs, [out], started,
                   records=len(store))
    print(f"wrote {len(store)} records to {out}")
    return 0


def cmd_import_idx(args) -> int:
    started = _now()
    images, labels = resolve_input(args.images), resolve_input(args.labels)
    store = load_idx_pair(images, labels, args.keep, args.limit)
    out = Path(args.out)
    store.write(out)
    write_manifest(Path(str(out) + ".run.json"), args, vars_config(args), [images, labels], [out], started,
                   records=len(store))
    print(f"wrote {len(store)} records to {out}")
    return 0


def cmd_train(args) -> int:
    started = _now()
    config = _train_config(args)
    store_path = resolve_input(args.store)
    store = SliceRecordStore.read(store_path)
    inputs = [store_path]

    if args.val_store:
        val_path = resolve_input(args.val_store)
        inputs.append(val_path)
        val_store = SliceRecordStore.read(val_path)
        n_train = len(store)
        combined = SliceRecordStore.concat([store, val_store])
        parts = (np.arange(n_train), np.arange(n_train, len(combined)), np.arange(0))
        store = combined
    else:
        parts = split(store, SplitSpec(args.split, args.seed, args.granularity))
    n_train = len(parts[0])
    planned = iterations_for(n_train, config.batch_size, config.epochs)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _save_split(out / "split.npy", len(store), parts)
    summary = {"n_train": n_train, "n_val": len(parts[1]), "n_test": len(parts[2]),
               "total_iterations": planned}

    if args.dry_run:
        write_manifest(out / "run_manifest.json", args, config.to_dict(), inputs, [out / "split.npy"],
                       started, dry_run=True, **summary)
        print(json.dumps(summary))
        return 0

    net_config = _net_config(args, store)
    net = build_network(net_config, seed=args.seed)
    mean = compute_mean_image(store, parts[0])
    _save_mean(out / "mean.npy", mean)

    def progress(row):
        if not args.quiet:
            print(f"iter {row.iteration:>7} epoch {row.epoch:>3} lr {row.learning_rate:.0e} "
                  f"train_loss {row.train_loss:.4f} val_loss {row.val_loss:.4f} val_acc {row.val_accuracy:.2f}",
                  file=sys.stderr)

    with blas_threads(args.threads):
        net, log = train(net, store, parts, mean, config, progress)
        results = {"iterations_run": log.iterations, "best_val_accuracy": log.best_val_accuracy,
                   "best_iteration": log.best_iteration}
        if len(parts[2]):
            _, results["test_accuracy_final"] = evaluate(net, store, parts[2], mean)
            if net.best_state is not None:
                final = net.state_dict()
                net.load_state_dict(net.best_state)
                _, results["test_accuracy_best"] = evaluate(net, store, parts[2], mean)
                net.load_state_dict(final)

    log.write_csv(out / "metrics.csv")
    ckpt.save(out / "model_final.lnt5", net)
    ckpt.save(out / "model_best.lnt5", net, net.best_state)
    outputs = [out / n for n in ("metrics.csv", "model_final.lnt5", "model_best.lnt5", "mean.npy", "split.npy")]
    write_manifest(out / "run_manifest.json", args, config.to_dict(), inputs, outputs, started,
                   network=[vars(s) for s in net_config.layers], **summary, **results)
    print(json.dumps({**summary, **results}))
    return 0


def cmd_eval(args) -> int:
    started = _now()
    net = ckpt.load(resolve_input(args.checkpoint))
    store_path = resolve_input(args.store)
    store = SliceRecordStore.read(store_path)
    mean = _load_mean(args.mean) if args.mean else MeanImage(np.zeros((store.height, store.width)))
    if args.split_file:
        indices = np.flatnonzero(np.load(args.split_file) == PARTS.index(args.part))
    else:
        indices = np.arange(len(store))
    with blas_threads(args.threads):
        loss, acc = evaluate(net, store, indices, mean)
    result = {"loss": loss, "accuracy": acc, "count": int(len(indices))}
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "eval.json").write_text(json.dumps(result, indent=2) + "\n")
        write_manifest(out / "run_manifest.json", args, vars_config(args), [store_path], [out / "eval.json"],
                       started, **result)
    print(json.dumps(result))
    return 0


def cmd_cv(args) -> int:
    started = _now()
    config = _train_config(args)
    store_path = resolve_input(args.store)
    store = SliceRecordStore.read(store_path)
    net_config = _net_config(args, store)
    with blas_threads(1):  # parallel folds run in worker processes
        summary, results = run_cv(store, args.folds, config, args.mode, net_config, args.threads,
                                  args.reference_mean)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    summary.write_csv(out / "cv_report.csv")
    for r in results:
        r.metrics.write_csv(out / f"metrics_run{r.run_index + 1}.csv")
    outputs = [out / "cv_report.csv"] + [out / f"metrics_run{r.run_index + 1}.csv" for r in results]
    write_manifest(out / "run_manifest.json", args, config.to_dict(), [store_path], outputs, started,
                   mode=args.mode, folds=args.folds, mean=summary.mean, std=summary.std)
    sys.stdout.write(summary.to_csv())
    return 0


def cmd_gradcheck(args) -> int:
    rng = np.random.default_rng(args.seed)
    config = small_lenet((1, args.size, args.size))
    net = build_network(config, seed=args.seed)
    x = rng.normal(size=(args.batch, 1, args.size, args.size))
    y = rng.integers(0, 2, size=args.batch)
    report = gradient_check(net, x, y, args.step, args.tol)
    print("\n".join(report.lines()))
    if not report.passed:
        raise GradientCheckFailed(f"max relative error {report.max_rel_error:.3e} > {args.tol:g}")
    return 0


def cmd_inspect(args) -> int:
    started = _now()
    net = ckpt.load(resolve_input(args.checkpoint))
    store_path = resolve_input(args.store)
    store = SliceRecordStore.read(store_path)
    mean = _load_mean(args.mean) if args.mean else None
    stats = layer_statistics(net, store.slice(args.index), mean)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "stats.csv").write_text(stats_csv(stats))
    written = sum(dump_filters(net, name, out / "filters") for name in args.layers)
    write_manifest(out / "run_manifest.json", args, vars_config(args), [store_path], [out / "stats.csv"],
                   started, filters_written=written)
    print(f"wrote stats for {len(stats)} tensors and {written} filter images to {out}")
    return 0


def vars_config(args) -> dict:
    return {k: v for k, v in vars(args).items() if k not in ("func",)}


# -- parser -------------------------------------------------------------------

def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--epochs", type=int, default=30, help="training epochs (default: %(default)s)")
    p.add_argument("--batch", type=int, default=64, help="mini-batch size (default: %(default)s)")
    p.add_argument("--lr", type=float, default=0.01, help="base learning rate (default: %(default)s)")
    p.add_argument("--lr-step", type=int, default=10, help="epochs between LR drops (default: %(default)s)")
    p.add_argument("--gamma", type=float, default=0.1, help="LR multiplier per drop (default: %(default)s)")
    p.add_argument("--momentum", type=float, default=0.9, help="SGD momentum (default: %(default)s)")
    p.add_argument("--eval-every", type=int, default=0,
                   help="iterations between validation passes; 0 = epoch ends only (default: %(default)s)")
    p.add_argument("--seed", type=int, default=0, help="master seed (default: %(default)s)")
    p.add_argument("--conv", type=parse_ints, default=(20, 50), help="conv filter counts (default: 20,50)")
    p.add_argument("--kernels", type=parse_ints, default=(5, 5), help="conv filter sizes (default: 5,5)")
    p.add_argument("--hidden", type=int, default=500, help="hidden fc width (default: %(default)s)")
    p.add_argument("--threads", type=int, default=1,
                   help="worker threads; 1 is the bitwise-reference mode (default: %(default)s)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fmricnn", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("convert", help="NIfTI volumes -> slice record store")
    p.add_argument("inputs", nargs="+", help="NIfTI files, optionally PATH:LABEL")
    p.add_argument("--out", required=True, help="output store path")
    p.add_argument("--label", type=int, choices=(0, 1), help="label for inputs without :LABEL (1 = AD)")
    p.add_argument("--subject", help="subject id (single input only; default: file stem)")
    p.add_argument("--drop-slices", type=int, default=10, help="lowest z-slices to drop (default: %(default)s)")
    p.add_argument("--resize", type=parse_size, default=(28, 28), help="HxW or 'none' (default: 28x28)")
    p.add_argument("--pixel-format", choices=("f32", "u8"), default="f32", help="(default: %(default)s)")
    p.add_argument("--append", action="store_true", help="append to an existing store")
    p.add_argument("--seed", type=int, default=0, help="recorded in the manifest (default: %(default)s)")
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("synth", help="generate a synthetic two-class store")
    p.add_argument("--out", required=True)
    p.add_argument("--subjects", type=int, default=20, help="(default: %(default)s)")
    p.add_argument("--slices", type=int, default=200, help="slices per subject (default: %(default)s)")
    p.add_argument("--size", type=parse_size, default=(28, 28), help="HxW (default: 28x28)")
    p.add_argument("--amplitude", type=float, default=0.3, help="class-1 attenuation (default: %(default)s)")
    p.add_argument("--noise", type=float, default=0.08, help="noise std (default: %(default)s)")
    p.add_argument("--pixel-format", choices=("f32", "u8"), default="f32", help="(default: %(default)s)")
    p.add_argument("--seed", type=int, default=0, help="(default: %(default)s)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("import-idx", help="IDX digit images -> two-class store")
    p.add_argument("--images", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--keep", type=parse_keep, default={0: 0, 1: 1},
                   help="digit:class pairs (default: 0:0,1:1)")
    p.add_argument("--limit", type=int, help="keep only the first N selected images")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_import_idx)

    p = sub.add_parser("train", help="train LeNet-5 on a store")
    p.add_argument("--store", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--split", type=parse_floats, default=(0.6, 0.2, 0.2),
                   help="train,val,test fractions (default: 0.6,0.2,0.2)")
    p.add_argument("--granularity", choices=("slice", "subject"), default="slice", help="(default: %(default)s)")
    p.add_argument("--val-store", help="separate validation store; --store is then used whole for training")
    p.add_argument("--dry-run", action="store_true", help="plan splits and iterations only")
    p.add_argument("--quiet", action="store_true")
    _add_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--store", required=True)
    p.add_argument("--mean", help="mean image (.npy) written by train")
    p.add_argument("--split-file", help="split.npy written by train")
    p.add_argument("--part", choices=PARTS, default="test", help="(default: %(default)s)")
    p.add_argument("--out", help="directory for eval.json and manifest")
    p.add_argument("--threads", type=int, default=1, help="(default: %(default)s)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("cv", help="k-fold / repeated-split evaluation")
    p.add_argument("--store", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--folds", type=int, default=5, help="(default: %(default)s)")
    p.add_argument("--mode", choices=(DISJOINT, RESHUFFLED), default=DISJOINT, help="(default: %(default)s)")
    p.add_argument("--reference-mean", type=float, help="published mean to compare against")
    _add_train_flags(p)
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("gradcheck", help="finite-difference check on a small LeNet")
    p.add_argument("--seed", type=int, default=0, help="(default: %(default)s)")
    p.add_argument("--batch", type=int, default=4, help="(default: %(default)s)")
    p.add_argument("--size", type=int, default=12, help="input side length (default: %(default)s)")
    p.add_argument("--step", type=float, default=1e-5, help="(default: %(default)s)")
    p.add_argument("--tol", type=float, default=1e-4, help="(default: %(default)s)")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("inspect", help="layer statistics and filter images")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--store", required=True)
    p.add_argument("--index", type=int, default=0, help="record to push through (default: %(default)s)")
    p.add_argument("--mean", help="mean image (.npy) written by train")
    p.add_argument("--layers", nargs="+", default=["conv1"], help="conv layers to dump (default: conv1)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_inspect)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FmriCnnError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except (OSError, KeyError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
