"""Command-line surface: train, eval, predict, gradcheck, summarize.

Exit codes are a stable contract: 0 ok, 2 input/config error, 3 training
divergence, 4 model/data incompatibility, 5 verification failure.  Errors go
to stderr with a machine-readable prefix `error[<category>]:`.

The train command takes a single JSON config document (see README for the
schema); scalar fields can be overridden by flags.  All artifacts land under
the run's output directory and re-running with the same inputs and seed
reproduces them byte for byte.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import dataset as ds
from . import gradcheck, metrics, models, training
from .numerics import SeededRng

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_DIVERGENCE = 3
EXIT_INCOMPATIBLE = 4
EXIT_VERIFY = 5

RUN_SCHEMA = "kandet-run/1"


def _fail(category: str, message: str, code: int) -> int:
    print(f"error[{category}]: {message}", file=sys.stderr)
    return code


def read_dataset(path: str) -> list[ds.EmbeddingRecord]:
    """Load either format, sniffing the binary magic."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
    if magic == ds.BIN_MAGIC:
        return ds.load_bin(path)
    return ds.load_jsonl(path)


def _build_model(arch: str, hp: dict, rng: SeededRng) -> models.Model:
    if arch == "hybrid":
        return models.HybridKanMlp.initialized(
            rng,
            in_dim=int(hp.get("in_dim", 512)),
            hidden1=int(hp.get("hidden1", 128)),
            hidden2=int(hp.get("hidden2", 64)),
            grid_size=int(hp.get("grid_size", 10)),
            spline_order=int(hp.get("spline_order", 3)),
            dropout_rate=float(hp.get("dropout_rate", 0.5)),
        )
    if arch == "baseline":
        dims = tuple(int(d) for d in hp.get("layer_dims", (512, 256, 128, 2)))
        return models.BaselineMlp.initialized(rng, dims)
    raise ValueError(f"unknown architecture {arch!r} (expected 'hybrid' or 'baseline')")


def cmd_train(args) -> int:
    try:
        with open(args.config, "r", encoding="utf-8") as fh:
            config = json.load(fh)
    except OSError as exc:
        return _fail("config", f"cannot read config: {exc}", EXIT_INPUT)
    except json.JSONDecodeError as exc:
        return _fail("config", f"config is not valid JSON: {exc}", EXIT_INPUT)
    if config.get("schema") != RUN_SCHEMA:
        return _fail("config", f"config schema must be {RUN_SCHEMA!r}, got {config.get('schema')!r}", EXIT_INPUT)

    arch = config.get("architecture", "hybrid")
    hp = dict(config.get("model", {}))
    train_cfg = dict(config.get("train", {}))
    data_path = args.data or config.get("data")
    out_dir = args.out or config.get("out_dir")
    for flag in ("seed", "epochs", "batch_size", "learning_rate"):
        value = getattr(args, flag)
        if value is not None:
            train_cfg[flag] = value
    if not data_path:
        return _fail("config", "no dataset path given (config key 'data' or --data)", EXIT_INPUT)
    if not os.path.exists(data_path):
        return _fail("data", f"dataset path does not exist: {data_path}", EXIT_INPUT)

    try:
        cfg = training.TrainConfig(**train_cfg)
    except (TypeError, ValueError) as exc:
        return _fail("config", f"bad train config: {exc}", EXIT_INPUT)
    if out_dir is None:
        stem = os.path.splitext(os.path.basename(args.config))[0]
        out_dir = os.path.join("runs", f"{stem}-seed{cfg.seed}")

    try:
        records = read_dataset(data_path)
    except ds.DatasetFormatError as exc:
        return _fail("data", str(exc), EXIT_INPUT)

    try:
        model = _build_model(arch, hp, SeededRng(cfg.seed))
    except ValueError as exc:
        return _fail("config", str(exc), EXIT_INPUT)

    try:
        report = training.fit(model, records, cfg)
    except training.DivergenceError as exc:
        return _fail("divergence", str(exc), EXIT_DIVERGENCE)
    except training.TrainingError as exc:
        return _fail("data", str(exc), EXIT_INPUT)

    os.makedirs(out_dir, exist_ok=True)
    models.save_params_file(model, os.path.join(out_dir, "params.kanm"))
    report.to_csv(os.path.join(out_dir, "train_report.csv"))
    manifest = {
        "schema": RUN_SCHEMA,
        "architecture": arch,
        "model": hp,
        "train": {
            "learning_rate": cfg.learning_rate,
            "batch_size": cfg.batch_size,
            "epochs": cfg.epochs,
            "seed": cfg.seed,
            "val_fraction": cfg.val_fraction,
            "patience": cfg.patience,
        },
        "data": data_path,
        "parameter_count": models.parameter_count(model),
        "format_versions": {"params": models.FORMAT_VERSION, "embeddings_bin": ds.BIN_VERSION},
    }
    with open(os.path.join(out_dir, "run_manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if report.epochs:
        last = report.epochs[-1]
        print(f"trained {arch} for {len(report.epochs)} epochs: "
              f"train_loss={last.train_loss:.6f} val_loss={last.val_loss:.6f} val_f1={last.val_f1:.4f}")
    else:
        print(f"trained {arch} for 0 epochs (no-op)")
    print(f"artifacts in {out_dir}")
    return EXIT_OK


def _load_model_and_data(model_path: str, data_path: str):
    if not os.path.exists(model_path):
        raise FileNotFoundError(f"model path does not exist: {model_path}")
    if not os.path.exists(data_path):
        raise FileNotFoundError(f"dataset path does not exist: {data_path}")
    model = models.load_params_file(model_path)
    records = read_dataset(data_path)
    return model, records


def cmd_eval(args) -> int:
    try:
        model, records = _load_model_and_data(args.model, args.data)
    except FileNotFoundError as exc:
        return _fail("data", str(exc), EXIT_INPUT)
    except (models.ModelFormatError, models.ArchitectureError, ds.DatasetFormatError) as exc:
        return _fail("data", str(exc), EXIT_INPUT)
    x, y = ds.to_arrays(records)
    if x.shape[0] == 0:
        return _fail("data", "dataset is empty", EXIT_INPUT)
    if x.shape[1] != model.in_dim:
        return _fail(
            "incompat",
            f"model expects {model.in_dim}-dim embeddings, dataset has {x.shape[1]}",
            EXIT_INCOMPATIBLE,
        )
    scores = models.generated_probability(model, x)
    labels = models.predict_label(models.forward(model, x))
    report = metrics.per_class_report(y, labels)
    os.makedirs(args.out, exist_ok=True)
    metrics.report_to_csv(report, os.path.join(args.out, "report.csv"),
                          dataset=args.dataset_name, approach=args.approach)
    metrics.confusion_to_csv(report.confusion, os.path.join(args.out, "confusion.csv"))
    try:
        curve = metrics.roc_curve(scores, y)
    except metrics.UndefinedAucError as exc:
        return _fail("data", str(exc), EXIT_INPUT)
    metrics.roc_to_csv(curve, os.path.join(args.out, "roc.csv"))
    with open(os.path.join(args.out, "auc.txt"), "w") as fh:
        fh.write(f"{curve.auc!r}\n")
    print(f"accuracy={report.accuracy:.4f} auc={curve.auc:.4f}")
    for stats in report.per_class:
        print(f"{metrics.LABEL_NAMES[stats.label]:<10} precision={stats.precision:.4f} "
              f"recall={stats.recall:.4f} f1={stats.f1:.4f} support={stats.support}")
    print(f"artifacts in {args.out}")
    return EXIT_OK


def cmd_predict(args) -> int:
    try:
        model, records = _load_model_and_data(args.model, args.data)
    except FileNotFoundError as exc:
        return _fail("data", str(exc), EXIT_INPUT)
    except (models.ModelFormatError, models.ArchitectureError, ds.DatasetFormatError) as exc:
        return _fail("data", str(exc), EXIT_INPUT)
    x, _ = ds.to_arrays(records)
    if records and x.shape[1] != model.in_dim:
        return _fail(
            "incompat",
            f"model expects {model.in_dim}-dim embeddings, dataset has {x.shape[1]}",
            EXIT_INCOMPATIBLE,
        )
    lines = ["id,p_generated,label"]
    if records:
        p = models.generated_probability(model, x)
        labels = models.predict_label(models.forward(model, x), args.threshold)
        for rec, prob, lab in zip(records, p, labels):
            lines.append(f"{rec.id},{float(prob)!r},{ds.LABEL_TO_NAME[int(lab)]}")
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w", newline="") as fh:
            fh.write(text)
        print(f"wrote {len(lines) - 1} predictions to {args.out}")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    results = gradcheck.run_all(seed=args.seed or 0, instances=args.instances,
                                inject_fault=args.inject_fault)
    failed = []
    for res in results:
        status = "PASS" if res.passed else "FAIL"
        print(f"{res.component:<24} worst_rel_err={res.worst_rel_err:.3e} tol={res.tolerance:.0e} {status}")
        if not res.passed:
            failed.append(res.component)
    if failed:
        return _fail("verify", f"gradient check failed for: {', '.join(failed)}", EXIT_VERIFY)
    return EXIT_OK


def cmd_summarize(args) -> int:
    if not os.path.exists(args.data):
        return _fail("data", f"dataset path does not exist: {args.data}", EXIT_INPUT)
    try:
        records = read_dataset(args.data)
    except ds.DatasetFormatError as exc:
        return _fail("data", str(exc), EXIT_INPUT)
    manifest = ds.summarize(records)
    print(manifest.as_table())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kandet",
        description="Train and evaluate real-vs-generated image classifiers on embedding files.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a classifier from a JSON run config")
    p.add_argument("--config", required=True, help="run config JSON (schema kandet-run/1)")
    p.add_argument("--data", help="override the config's dataset path")
    p.add_argument("--out", help="override the config's output directory")
    p.add_argument("--seed", type=int, help="override the run seed")
    p.add_argument("--epochs", type=int, help="override the epoch count")
    p.add_argument("--batch-size", dest="batch_size", type=int, help="override the batch size")
    p.add_argument("--learning-rate", dest="learning_rate", type=float, help="override the learning rate")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="evaluate a trained model on a labeled dataset")
    p.add_argument("--model", required=True, help="params.kanm file")
    p.add_argument("--data", required=True, help="labeled embedding dataset")
    p.add_argument("--out", required=True, help="output directory for CSVs")
    p.add_argument("--dataset-name", default="-", help="dataset column for report.csv")
    p.add_argument("--approach", default="-", help="approach column for report.csv")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("predict", help="per-record probabilities and labels as CSV")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", help="output CSV path (default: stdout)")
    p.add_argument("--threshold", type=float, default=0.5)
    p.set_defaults(fn=cmd_predict)

    p = sub.add_parser("gradcheck", help="finite-difference conformance suite for all gradients")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--instances", type=int, default=20, help="random instances per component")
    p.add_argument("--inject-fault", action="store_true",
                   help="harness self-test: add a deliberately broken component (must fail)")
    p.set_defaults(fn=cmd_gradcheck)

    p = sub.add_parser("summarize", help="per-source record counts for a dataset file")
    p.add_argument("--data", required=True)
    p.set_defaults(fn=cmd_summarize)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
