"""Command-line entry point tying the pipeline together.

Subcommands: ``prepare`` (raw KDD text -> columnar datasets), ``train``,
``evaluate``, ``analyze svd|pca``, ``gradcheck``. Exit codes: 0 ok, 2 input
error, 3 numerical failure, 4 compatibility error.

Every run stages its outputs in a temporary directory and renames them into
place only on success, so failures never leave partial output, and emits
exactly one manifest (resolved flags, seed, input digests, toolkit version,
wall-clock timings) alongside the outputs. All randomness flows from
--seed; --deterministic forces the single-threaded double-precision path
and zeroes recorded timings so reruns are byte-identical.
"""

from __future__ import annotations

import argparse
import contextlib
import os
import shutil
import sys
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import threadpoolctl

from . import __version__, analysis, evaluation, preprocess
from .checkpoint import load_checkpoint, restore_model, save_checkpoint
from .errors import (CavkddError, CompatibilityError, InputError,
                     NumericalError)
from .gradsuite import run_suite
from .ingest import (CLASS_NAMES, Dataset, class_distribution, file_sha256,
                     load_dataset, load_kdd_dataset, save_dataset)
from .models import build_model
from .train import TrainConfig, train as run_training

TRAIN_DATASET = "train.cds"
TEST_DATASET = "test.cds"

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERICAL = 3
EXIT_COMPAT = 4


@dataclass
class RunManifest:
    subcommand: str
    flags: dict
    seed: int
    input_digests: dict = field(default_factory=dict)
    outputs: list = field(default_factory=list)
    extras: dict = field(default_factory=dict)
    toolkit_version: str = __version__
    seconds: float = 0.0

    def to_text(self) -> str:
        lines = [
            f"subcommand: {self.subcommand}",
            f"toolkit_version: {self.toolkit_version}",
            f"seed: {self.seed}",
        ]
        for key in sorted(self.flags):
            lines.append(f"flag.{key}: {self.flags[key]}")
        for path in sorted(self.input_digests):
            lines.append(f"input.{path}: {self.input_digests[path]}")
        for key in sorted(self.extras):
            lines.append(f"{key}: {self.extras[key]}")
        for name in self.outputs:
            lines.append(f"output: {name}")
        lines.append(f"wall_seconds: {self.seconds:.3f}")
        return "\n".join(lines) + "\n"


@contextlib.contextmanager
def _staged_outputs(out_dir: Path):
    """Write into a stage directory; commit into ``out_dir`` only on success."""
    out_dir.mkdir(parents=True, exist_ok=True)
    stage = Path(tempfile.mkdtemp(dir=out_dir, prefix=".stage-"))
    try:
        yield stage
        for path in sorted(stage.iterdir()):
            os.replace(path, out_dir / path.name)
    finally:
        shutil.rmtree(stage, ignore_errors=True)


@contextlib.contextmanager
def _thread_cap(threads):
    if threads is None:
        yield
    else:
        with threadpoolctl.threadpool_limits(limits=int(threads)):
            yield


def _flag_dict(args: argparse.Namespace, skip=("func",)) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _print_count_table(train_ds: Dataset, test_ds: Dataset) -> None:
    print(f"{'class':<10}{'train':>12}{'test':>12}")
    for i, name in enumerate(CLASS_NAMES):
        print(f"{name:<10}{int(train_ds.class_counts[i]):>12}"
              f"{int(test_ds.class_counts[i]):>12}")
    print(f"{'total':<10}{len(train_ds):>12}{len(test_ds):>12}")


def _cmd_prepare(args) -> int:
    started = time.perf_counter()
    keep = set(args.classes)
    out_dir = Path(args.out)
    train_ds = load_kdd_dataset(args.train_in, keep=keep, split="train")
    test_ds = load_kdd_dataset(args.test_in, keep=keep, split="test")
    present = {CLASS_NAMES[i] for i in np.unique(train_ds.labels)}
    if len(present) < 2:
        print(f"warning: training data contains {len(present)} class(es); "
              f"training needs >= 2", file=sys.stderr)
    counts = {}
    for split, ds in (("train", train_ds), ("test", test_ds)):
        for i, name in enumerate(CLASS_NAMES):
            counts[f"count.{split}.{name}"] = int(ds.class_counts[i])
    manifest = RunManifest(
        subcommand="prepare", flags=_flag_dict(args), seed=args.seed,
        input_digests={str(args.train_in): file_sha256(args.train_in),
                       str(args.test_in): file_sha256(args.test_in)},
        outputs=[TRAIN_DATASET, TEST_DATASET], extras=counts)
    with _staged_outputs(out_dir) as stage:
        save_dataset(train_ds, stage / TRAIN_DATASET)
        save_dataset(test_ds, stage / TEST_DATASET)
        manifest.seconds = time.perf_counter() - started
        (stage / "manifest.txt").write_text(manifest.to_text(), encoding="ascii")
    _print_count_table(train_ds, test_ds)
    if len(train_ds):
        fractions = class_distribution(train_ds)
        pretty = ", ".join(f"{k}={v:.2%}" for k, v in fractions.items())
        print(f"train distribution: {pretty}")
    return EXIT_OK


def _cmd_train(args) -> int:
    started = time.perf_counter()
    data_dir = Path(args.data)
    train_path = data_dir / TRAIN_DATASET
    if not train_path.is_file():
        raise InputError(f"no prepared training dataset at {train_path} "
                         f"(run `cavkdd prepare` first)")
    deterministic = args.deterministic
    precision = "double" if deterministic else args.precision
    threads = 1 if deterministic else args.threads

    config = TrainConfig(
        epochs=args.epochs, batch_size=args.batch,
        validation_fraction=args.val_frac, eval_batch_size=args.eval_batch,
        seed=args.seed, learning_rate=args.lr, optimizer=args.optimizer,
        precision=precision, resample=args.resample,
        log_steps=args.log_steps, record_timings=not deterministic)

    ds = load_dataset(train_path)
    if len(ds) == 0:
        raise InputError(f"{train_path}: dataset is empty")
    state = preprocess.fit(ds, standardize_onehot=args.standardize_onehot)
    matrix = preprocess.transform(state, ds, dtype=config.dtype)
    kind = args.model.replace("-", "_")
    model = build_model(kind, state.feature_length, seed=args.seed,
                        dtype=config.dtype)

    with _thread_cap(threads):
        ckpt, log = run_training(model, matrix.values, matrix.labels,
                                 config, preprocessor=state)

    ckpt_name = f"{kind}.ckpt"
    manifest = RunManifest(
        subcommand="train", flags=_flag_dict(args), seed=args.seed,
        input_digests={str(train_path): file_sha256(train_path)},
        outputs=[ckpt_name, "trainlog.csv"])
    out_dir = Path(args.out)
    with _staged_outputs(out_dir) as stage:
        save_checkpoint(ckpt, stage / ckpt_name)
        log.to_csv(stage / "trainlog.csv")
        manifest.seconds = (time.perf_counter() - started) if not deterministic else 0.0
        (stage / "manifest.txt").write_text(manifest.to_text(), encoding="ascii")

    for entry in log.epochs:
        print(f"epoch {entry.epoch}: train_loss={entry.train_loss:.4f} "
              f"train_acc={entry.train_acc:.4f} val_loss={entry.val_loss:.4f} "
              f"val_acc={entry.val_acc:.4f} ({entry.seconds:.1f}s)")
    best = log.best_epoch()
    print(f"best: epoch {best.epoch} val_acc={best.val_acc:.4f} "
          f"-> {out_dir / ckpt_name}")
    return EXIT_OK


def _cmd_evaluate(args) -> int:
    started = time.perf_counter()
    ckpt = load_checkpoint(args.model_file)
    test_path = Path(args.data) / TEST_DATASET
    if not test_path.is_file():
        raise InputError(f"no prepared test dataset at {test_path}")
    ds = load_dataset(test_path)
    if ckpt.preprocessor is None:
        raise CompatibilityError(f"{args.model_file}: checkpoint carries no "
                                 f"preprocessor state; cannot transform data")
    state = ckpt.preprocessor
    if state.feature_length != ckpt.descriptor.feature_length:
        raise CompatibilityError(
            f"checkpoint internally inconsistent: preprocessor F="
            f"{state.feature_length}, model F={ckpt.descriptor.feature_length}")
    model = restore_model(ckpt)
    matrix = preprocess.transform(state, ds,
                                  dtype=next(iter(ckpt.arrays.values())).dtype)
    with _thread_cap(args.threads):
        report = evaluation.evaluate(model, matrix.values, matrix.labels,
                                     batch_size=args.batch)

    manifest = RunManifest(
        subcommand="evaluate", flags=_flag_dict(args), seed=args.seed,
        input_digests={str(args.model_file): file_sha256(args.model_file),
                       str(test_path): file_sha256(test_path)},
        outputs=["report.txt", "confusion.csv"])
    out_dir = Path(args.report)
    with _staged_outputs(out_dir) as stage:
        (stage / "report.txt").write_text(evaluation.report_text(report),
                                          encoding="ascii")
        (stage / "confusion.csv").write_text(
            evaluation.confusion_csv(report.confusion), encoding="ascii")
        manifest.seconds = time.perf_counter() - started
        (stage / "manifest.txt").write_text(manifest.to_text(), encoding="ascii")

    print(f"{'model':<10}{'precision':>10}{'recall':>10}{'f1':>10}"
          f"{'auc':>10}{'accuracy':>10}")
    print(f"{ckpt.descriptor.kind:<10}{report.macro[0]:>10.4f}"
          f"{report.macro[1]:>10.4f}{report.macro[2]:>10.4f}"
          f"{report.auc.macro:>10.4f}{report.accuracy:>10.4f}")
    if matrix.unknown_category_count:
        print(f"note: {matrix.unknown_category_count} unseen category value(s) "
              f"mapped to all-zero blocks")
    return EXIT_OK


def _load_standardized_train(args):
    train_path = Path(args.data) / TRAIN_DATASET
    if not train_path.is_file():
        raise InputError(f"no prepared training dataset at {train_path}")
    ds = load_dataset(train_path)
    if len(ds) < 2:
        raise InputError(f"{train_path}: need at least 2 rows for analysis")
    state = preprocess.fit(ds)
    matrix = preprocess.transform(state, ds)
    return train_path, matrix


def _cmd_analyze_svd(args) -> int:
    started = time.perf_counter()
    train_path, matrix = _load_standardized_train(args)
    values = matrix.values
    if args.samples is not None and args.samples < len(values):
        rng = np.random.default_rng(args.seed)
        idx = np.sort(rng.choice(len(values), size=args.samples, replace=False))
        values = values[idx]
    with _thread_cap(args.threads):
        profile = analysis.svd_variance(values, top_k=args.top_k)
    manifest = RunManifest(
        subcommand="analyze svd", flags=_flag_dict(args), seed=args.seed,
        input_digests={str(train_path): file_sha256(train_path)},
        outputs=["variance.csv"])
    out_dir = Path(args.out)
    with _staged_outputs(out_dir) as stage:
        analysis.export_csv(profile, stage / "variance.csv")
        manifest.seconds = time.perf_counter() - started
        (stage / "manifest.txt").write_text(manifest.to_text(), encoding="ascii")
    k = min(4, profile.top_k)
    print(f"top-{k} cumulative explained variance: "
          f"{profile.top_cumulative(k):.4f}")
    return EXIT_OK


def _cmd_analyze_pca(args) -> int:
    started = time.perf_counter()
    train_path, matrix = _load_standardized_train(args)
    with _thread_cap(args.threads):
        projection = analysis.pca_project(matrix.values, matrix.labels,
                                          n_samples=args.samples,
                                          seed=args.seed)
    manifest = RunManifest(
        subcommand="analyze pca", flags=_flag_dict(args), seed=args.seed,
        input_digests={str(train_path): file_sha256(train_path)},
        outputs=["projection.csv"])
    out_dir = Path(args.out)
    with _staged_outputs(out_dir) as stage:
        analysis.export_csv(projection, stage / "projection.csv")
        manifest.seconds = time.perf_counter() - started
        (stage / "manifest.txt").write_text(manifest.to_text(), encoding="ascii")
    print(f"projected {len(projection.coordinates)} rows onto 2 components")
    return EXIT_OK


def _cmd_gradcheck(args) -> int:
    started = time.perf_counter()
    with _thread_cap(args.threads):
        entries = run_suite(seed=args.seed)
    width = max(len(e.name) for e in entries)
    lines = []
    for e in entries:
        status = "ok" if e.passed else "FAIL"
        lines.append(f"{e.name:<{width}}  {e.error:.3e}  (< {e.tolerance:.0e})  {status}")
    table = "\n".join(lines) + "\n"
    print(table, end="")
    failures = [e for e in entries if e.error >= 1e-4]
    worst = max(e.error for e in entries)
    print(f"max relative error: {worst:.3e} over {len(entries)} checks")
    if args.out is not None:
        manifest = RunManifest(subcommand="gradcheck", flags=_flag_dict(args),
                               seed=args.seed, outputs=["gradcheck.txt"])
        with _staged_outputs(Path(args.out)) as stage:
            (stage / "gradcheck.txt").write_text(table, encoding="ascii")
            manifest.seconds = time.perf_counter() - started
            (stage / "manifest.txt").write_text(manifest.to_text(),
                                                encoding="ascii")
    if failures:
        raise NumericalError(
            f"gradient check failed for {len(failures)} case(s); worst "
            f"{max(e.error for e in failures):.3e} >= 1e-4")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cavkdd",
        description="Three-class KDD traffic classification toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="parse raw KDD files into columnar datasets")
    p.add_argument("--train-in", required=True, help="raw KDD training file")
    p.add_argument("--test-in", required=True, help="raw KDD test file")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--classes", nargs="+", default=list(CLASS_NAMES),
                   help="class names to keep (default: normal neptune smurf)")
    p.add_argument("--seed", type=int, default=42)
    p.set_defaults(func=_cmd_prepare)

    p = sub.add_parser("train", help="fit preprocessor and train one model")
    p.add_argument("--data", required=True, help="prepared dataset directory")
    p.add_argument("--model", required=True,
                   choices=["dnn", "cnn", "lstm", "cnn-lstm"])
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--batch", type=int, default=500)
    p.add_argument("--val-frac", type=float, default=0.30)
    p.add_argument("--eval-batch", type=int, default=20)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--optimizer", choices=["adam", "sgd"], default="adam")
    p.add_argument("--precision", choices=["single", "double"], default="single")
    p.add_argument("--resample", choices=["none", "upsample", "downsample"],
                   default="none",
                   help="balance training classes (default: keep the skew)")
    p.add_argument("--standardize-onehot", action="store_true",
                   help="also standardize one-hot columns (comparison flag)")
    p.add_argument("--log-steps", action="store_true",
                   help="record the per-step loss trace in memory")
    p.add_argument("--threads", type=int, default=None,
                   help="cap internal BLAS parallelism")
    p.add_argument("--deterministic", action="store_true",
                   help="single-threaded double-precision run with zeroed timings")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("evaluate", help="run a checkpoint over the test split")
    p.add_argument("--model-file", required=True, help="checkpoint path")
    p.add_argument("--data", required=True, help="prepared dataset directory")
    p.add_argument("--batch", type=int, default=20)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--report", required=True, help="report output directory")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("analyze", help="dataset diagnostics")
    asub = p.add_subparsers(dest="analysis", required=True)
    ps = asub.add_parser("svd", help="explained variance of singular values")
    ps.add_argument("--data", required=True)
    ps.add_argument("--top-k", type=int, default=None)
    ps.add_argument("--samples", type=int, default=100_000,
                    help="row sample cap for the SVD (default 100000)")
    ps.add_argument("--seed", type=int, default=42)
    ps.add_argument("--threads", type=int, default=None)
    ps.add_argument("--out", required=True)
    ps.set_defaults(func=_cmd_analyze_svd)
    pp = asub.add_parser("pca", help="two-component projection")
    pp.add_argument("--data", required=True)
    pp.add_argument("--samples", type=int, default=90_000)
    pp.add_argument("--seed", type=int, default=42)
    pp.add_argument("--threads", type=int, default=None)
    pp.add_argument("--out", required=True)
    pp.set_defaults(func=_cmd_analyze_pca)

    p = sub.add_parser("gradcheck", help="run the finite-difference gradient suite")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--out", default=None,
                   help="optional directory for the result table + manifest")
    p.set_defaults(func=_cmd_gradcheck)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InputError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except NumericalError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    except CompatibilityError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_COMPAT
    except CavkddError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
