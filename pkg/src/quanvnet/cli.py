"""Batch command line: train, eval, analyze, resources, synth.

Exit codes: 0 success, 2 configuration errors, 3 data errors, 4 numerical
divergence. Every run writes only under ``--out`` and echoes its effective
configuration there; command-line flags override config-file values.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import analysis, circuits, dataio
from . import model as qm
from .errors import ConfigError, DataError, DivergenceError

METRICS_HEADER = "epoch,l_ce,l_mse,loss,train_acc,val_loss,val_acc"
CONFIG_FORMAT_VERSION = 1
_MODEL_KEYS = tuple(f.name for f in fields(qm.ModelConfig))
_RUN_ONLY_KEYS = ("data", "out", "deterministic", "train_fraction", "minority", "pad_to")


def _parse_minority(text: str):
    cls, _, frac = text.partition(":")
    try:
        return int(cls), float(frac)
    except ValueError as exc:
        raise ConfigError(f"--minority expects CLASS:FRACTION, got {text!r}") from exc


def _load_config_file(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"no config file at {path}")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed config file: {exc}") from exc
    if raw.get("format_version", CONFIG_FORMAT_VERSION) != CONFIG_FORMAT_VERSION:
        raise ConfigError(f"unsupported config format_version {raw.get('format_version')}")
    unknown = set(raw) - set(_MODEL_KEYS) - set(_RUN_ONLY_KEYS) - {"format_version"}
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return raw

def _run_config(args) -> dict:
    """Merge defaults <- config file <- flags into one flat dict."""
    merged = {f.name: f.default for f in fields(qm.ModelConfig)}
    merged.update({"data": None, "out": None, "deterministic": False,
                   "train_fraction": None, "minority": None, "pad_to": None})
    if getattr(args, "config", None):
        merged.update(_load_config_file(args.config))
    overrides = {
        "image_size": args.image_size, "patch_size": args.patch_size,
        "features": args.features, "blocks": args.blocks, "kernels": args.kernels,
        "channels": args.channels, "num_classes": args.classes,
        "alpha": args.alpha, "learning_rate": args.lr, "batch_size": args.batch_size,
        "epochs": args.epochs, "runs": args.runs, "seed": args.seed,
        "data": args.data, "out": args.out,
        "train_fraction": args.train_fraction,
        "minority": _parse_minority(args.minority) if args.minority else None,
        "pad_to": args.pad_to,
    }
    for key, value in overrides.items():
        if value is not None:
            merged[key] = value
    if args.no_reconstruction:
        merged["reconstruction_enabled"] = False
    if args.no_lwm:
        merged["lwm_enabled"] = False
    if args.deterministic:
        merged["deterministic"] = True
    return merged


def _model_config(merged: dict) -> qm.ModelConfig:
    return qm.ModelConfig(**{k: merged[k] for k in _MODEL_KEYS})


def _echo_config(merged: dict, out: Path) -> None:
    echo = {"format_version": CONFIG_FORMAT_VERSION}
    echo.update({k: merged[k] for k in _MODEL_KEYS})
    echo.update({k: merged[k] for k in _RUN_ONLY_KEYS})
    echo["data"] = str(echo["data"]) if echo["data"] is not None else None
    echo["out"] = str(out)
    echo["minority"] = list(echo["minority"]) if echo["minority"] else None
    (out / "config.json").write_text(json.dumps(echo, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _require_out(merged: dict) -> Path:
    if not merged.get("out"):
        raise ConfigError("--out is required")
    out = Path(merged["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_data(merged: dict):
    if not merged.get("data"):
        raise ConfigError("--data is required")
    data_dir = Path(merged["data"])
    if not data_dir.is_dir():
        raise DataError(f"dataset directory {data_dir} does not exist")
    return dataio.load_dataset(
        data_dir,
        train_fraction=merged.get("train_fraction"),
        minority=merged.get("minority"),
        seed=merged.get("seed") or 0,
        pad_to=merged.get("pad_to"),
    )


def _write_metrics_csv(path: Path, rows) -> None:
    lines = [METRICS_HEADER]
    for r in rows:
        lines.append(f"{r.epoch},{r.l_ce!r},{r.l_mse!r},{r.loss!r},{r.train_acc!r},{r.val_loss!r},{r.val_acc!r}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_train(args) -> int:
    merged = _run_config(args)
    config = _model_config(merged)
    out = _require_out(merged)
    data = _load_data(merged)
    model = qm.HybridModel(config)
    _echo_config(merged, out)
    accuracies = []
    for r in range(config.runs):
        try:
            result = qm.train_single_run(model, data["train"], data["validation"], config.seed + r, r)
        except DivergenceError as exc:
            _write_metrics_csv(out / f"run{r}_metrics.csv", getattr(exc, "partial_rows", []))
            raise
        _write_metrics_csv(out / f"run{r}_metrics.csv", result.rows)
        qm.save_checkpoint(out / f"run{r}.ckpt", result.best_store, config)
        metrics = qm.evaluate(model, result.best_store, *data["test"])
        accuracies.append(metrics.accuracy)
        print(f"run {r}: best epoch {result.best_epoch}, val loss {result.best_val_loss:.6f}, "
              f"test accuracy {metrics.accuracy:.4f}")
    summary = {
        "runs": config.runs,
        "test_accuracy_per_run": accuracies,
        "test_accuracy_mean": float(np.mean(accuracies)),
        "test_accuracy_std": float(np.std(accuracies)),
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(f"test accuracy {summary['test_accuracy_mean']:.4f} +/- {summary['test_accuracy_std']:.4f}")
    return 0


def cmd_eval(args) -> int:
    merged = _run_config(args)
    out = _require_out(merged)
    store, config = qm.load_checkpoint(args.checkpoint)
    data = _load_data(merged)
    images, labels = data[args.split]
    model = qm.HybridModel(config)
    if images.shape[1:] != (config.image_size, config.image_size, config.channels):
        raise ConfigError(
            f"checkpoint expects {(config.image_size, config.image_size, config.channels)} images, "
            f"dataset provides {images.shape[1:]}"
        )
    if int(labels.max()) >= config.num_classes:
        raise ConfigError("dataset has more classes than the checkpoint")
    metrics = qm.evaluate(model, store, images, labels)
    lines = ["metric,class,value", f"accuracy,,{metrics.accuracy!r}"]
    for c in range(config.num_classes):
        lines.append(f"precision,{c},{float(metrics.precision[c])!r}")
        lines.append(f"recall,{c},{float(metrics.recall[c])!r}")
        lines.append(f"f1,{c},{float(metrics.f1[c])!r}")
    (out / "eval.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"accuracy {metrics.accuracy:.4f}")
    return 0


def cmd_analyze(args) -> int:
    merged = _run_config(args)
    out = _require_out(merged)
    store, config = qm.load_checkpoint(args.checkpoint)
    data = _load_data(merged)
    images, labels = data[args.split]
    model = qm.HybridModel(config)
    model.check_store(store)
    features = []
    processed = []
    for start in range(0, images.shape[0], config.batch_size):
        fw = model.forward_batch(images[start : start + config.batch_size], store)
        features.append(fw["features"])
        processed.append(fw["processed"].reshape(fw["processed"].shape[0], -1))
    features = np.concatenate(features)
    processed = np.concatenate(processed)

    magnitudes = analysis.feature_magnitudes(features)
    lines = ["rank,magnitude"]
    lines += [f"{i},{float(m)!r}" for i, m in enumerate(magnitudes)]
    (out / "magnitudes.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")

    if args.ami:
        seed = merged.get("seed") or 0
        truth = analysis.Labeling(labels, config.num_classes)
        ami_processed = analysis.ami(
            analysis.kmeans(processed, config.num_classes, seed), truth
        )
        ami_features = analysis.ami(
            analysis.kmeans(features, config.num_classes, seed), truth
        )
        content = "configuration,processed_image_ami,feature_vector_ami\n"
        content += f"{Path(args.checkpoint).stem},{ami_processed!r},{ami_features!r}\n"
        (out / "ami.csv").write_text(content, encoding="utf-8")
        print(f"ami processed={ami_processed:.4f} features={ami_features:.4f}")
    return 0


def cmd_resources(args) -> int:
    merged = _run_config(args)
    config = _model_config(merged)
    report = circuits.resource_report(config.circuit_config())
    for line in report.as_lines():
        print(line)
    return 0


def cmd_synth(args) -> int:
    merged = _run_config(args)
    out = _require_out(merged)
    spec = dataio.SyntheticSpec(
        num_classes=args.classes if args.classes is not None else 4,
        image_size=args.image_size if args.image_size is not None else 32,
        channels=args.channels if args.channels is not None else 4,
        train_samples=args.train_samples,
        validation_samples=args.validation_samples,
        test_samples=args.test_samples,
        noise=args.noise,
        seed=merged.get("seed") or 0,
    )
    dataio.generate_synthetic(spec, out)
    print(f"wrote synthetic dataset to {out}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file; flags override its values")
    parser.add_argument("--data", help="dataset directory")
    parser.add_argument("--out", help="output directory (all artifacts land here)")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--deterministic", action="store_true",
                        help="force sequential reductions (evaluation order is already sequential)")
    parser.add_argument("--alpha", type=float, help="reconstruction loss weight")
    parser.add_argument("--train-fraction", type=float, dest="train_fraction")
    parser.add_argument("--minority", help="CLASS:FRACTION subsampling of one training class")
    parser.add_argument("--pad-to", type=int, dest="pad_to",
                        help="zero-pad images up to this spatial size at load time")
    parser.add_argument("--no-reconstruction", action="store_true", dest="no_reconstruction")
    parser.add_argument("--no-lwm", action="store_true", dest="no_lwm")
    parser.add_argument("--image-size", type=int, dest="image_size")
    parser.add_argument("--patch-size", type=int, dest="patch_size")
    parser.add_argument("--features", type=int, help="encoder features per superpixel (multiple of 3)")
    parser.add_argument("--blocks", type=int, help="quantum convolution blocks")
    parser.add_argument("--kernels", type=int, help="kernels per block (power of 2)")
    parser.add_argument("--channels", type=int)
    parser.add_argument("--classes", type=int)
    parser.add_argument("--lr", type=float)
    parser.add_argument("--batch-size", type=int, dest="batch_size")
    parser.add_argument("--epochs", type=int)
    parser.add_argument("--runs", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="quanvnet", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train on a dataset directory")
    _add_common(p_train)
    p_train.set_defaults(handler=cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint")
    _add_common(p_eval)
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--split", default="test", choices=dataio.SPLIT_ORDER)
    p_eval.set_defaults(handler=cmd_eval)

    p_analyze = sub.add_parser("analyze", help="representation analyses on a checkpoint")
    _add_common(p_analyze)
    p_analyze.add_argument("--checkpoint", required=True)
    p_analyze.add_argument("--split", default="test", choices=dataio.SPLIT_ORDER)
    p_analyze.add_argument("--ami", action="store_true", help="also write k-means AMI scores")
    p_analyze.set_defaults(handler=cmd_analyze)

    p_res = sub.add_parser("resources", help="print the quantum resource report")
    _add_common(p_res)
    p_res.set_defaults(handler=cmd_resources)

    p_synth = sub.add_parser("synth", help="generate a synthetic dataset")
    _add_common(p_synth)
    p_synth.add_argument("--train-samples", type=int, default=200, dest="train_samples")
    p_synth.add_argument("--validation-samples", type=int, default=100, dest="validation_samples")
    p_synth.add_argument("--test-samples", type=int, default=100, dest="test_samples")
    p_synth.add_argument("--noise", type=float, default=0.1)
    p_synth.set_defaults(handler=cmd_synth)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except DivergenceError as exc:
        print(f"numerical divergence: {exc}", file=sys.stderr)
        return 4
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
