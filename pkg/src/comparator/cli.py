"""Command-line entry point: ``comparator generate|train|eval|report``.

Configuration is a YAML (or JSON) file with optional ``cohort:`` and
``train:`` sections; any field can be overridden with
``--set section.field=value``.  Exit codes: 0 success, 1 usage or
configuration error, 2 data error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import yaml

from .checkpoint import CheckpointFormatError
from .data import (
    CohortConfig,
    DatasetError,
    generate_cohort,
    load_dataset,
    load_truth,
    save_dataset,
    save_truth,
    truth_path,
)
from .optim import NumericalError
from .report import evaluate_scores, load_report, merge_reports, write_report
from .training import MANIFEST_NAME, Scorer, TrainConfig, Trainer

RUN_DIR_ENV = "COMPARATOR_RUN_DIR"
EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("comparator")


class ConfigError(ValueError):
    pass


def load_config(path, overrides=()) -> dict:
    cfg: dict = {}
    if path is not None:
        try:
            cfg = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        if not isinstance(cfg, dict):
            raise ConfigError(f"config {path} must be a mapping")
        for key in cfg:
            if key not in ("cohort", "train"):
                raise ConfigError(f"unknown config section {key!r}")
    for item in overrides:
        key, sep, raw = item.partition("=")
        section, dot, name = key.partition(".")
        if not sep or not dot or section not in ("cohort", "train") or not name:
            raise ConfigError(f"bad override {item!r}; expected section.field=value")
        cfg.setdefault(section, {})[name] = yaml.safe_load(raw)
    return cfg


def _cohort_config(cfg: dict) -> CohortConfig:
    try:
        return CohortConfig.from_dict(cfg.get("cohort") or {})
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def _train_config(cfg: dict) -> TrainConfig:
    try:
        return TrainConfig.from_dict(cfg.get("train") or {})
    except TypeError as exc:
        raise ConfigError(f"train: {exc}") from None
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def cmd_generate(args) -> int:
    cfg = load_config(args.config, args.set)
    if args.seed is not None:
        cfg.setdefault("cohort", {})["seed"] = args.seed
    cohort = _cohort_config(cfg)
    dataset, latent = generate_cohort(cohort)
    out = save_dataset(dataset, args.out)
    save_truth(dataset, latent, truth_path(out))
    print(json.dumps({"dataset": str(out), "truth": str(truth_path(out)),
                      **dataset.summary()}, indent=2))
    return EXIT_OK


def _default_run_dir(name: str) -> Path:
    return Path(os.environ.get(RUN_DIR_ENV, "runs")) / name


def cmd_train(args) -> int:
    cfg = load_config(args.config, args.set)
    train_section = cfg.setdefault("train", {})
    for flag, key in (("batches", "total_batches"), ("seed", "seed"), ("loss", "loss"),
                      ("name", "name"), ("eval_interval", "eval_interval")):
        value = getattr(args, flag)
        if value is not None:
            train_section[key] = value
    if args.channels:
        train_section["channels"] = args.channels.split(",")
    tcfg = _train_config(cfg)
    dataset = load_dataset(args.data)
    run_dir = Path(args.run_dir) if args.run_dir else _default_run_dir(tcfg.name)
    try:
        trainer = Trainer(tcfg, dataset, run_dir, dataset_path=args.data)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    def progress(rec):
        mark = " (saved)" if rec["improved"] else ""
        print(f"batch {rec['batch']:>7}  loss {rec['train_loss']:.5g}  "
              f"val_acc {rec['val_accuracy']:.4f}{mark}", flush=True)

    try:
        manifest = trainer.run(resume=args.resume, progress=None if args.quiet else progress)
    except DatasetError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    best = manifest["best"]
    print(f"run dir: {run_dir}")
    if best:
        print(f"best checkpoint: {best['path']} (batch {best['batch']}, "
              f"val_acc {best['val_accuracy']:.4f})")
    return EXIT_OK


def _resolve_checkpoint(args) -> Path:
    if args.checkpoint:
        return Path(args.checkpoint)
    if args.run_dir:
        return Path(args.run_dir) / "checkpoints" / "best.ckpt"
    raise ConfigError("eval needs --checkpoint or --run-dir")


def cmd_eval(args) -> int:
    ckpt = _resolve_checkpoint(args)
    if not ckpt.exists():
        raise DatasetError(f"checkpoint not found: {ckpt}")
    scorer = Scorer.from_checkpoint(ckpt)
    dataset = load_dataset(args.data)
    latent = None
    tpath = Path(args.truth) if args.truth else truth_path(args.data)
    if tpath.exists() and not args.no_truth:
        latent = load_truth(dataset, tpath)
    idx = dataset.split_indices(args.split if args.split != "all" else None)
    if idx.size == 0:
        raise DatasetError(f"split {args.split!r} is empty")
    sub = dataset.subset(args.split) if args.split != "all" else dataset
    scores = scorer.scores(sub.features)
    system = args.system or scorer.metadata.get("name") or ckpt.stem
    rep = evaluate_scores(scores, sub, None if latent is None else latent[idx],
                          system=system, split=args.split)
    if args.report_dir:
        out = Path(args.report_dir)
    elif args.run_dir:
        out = Path(args.run_dir) / "reports"
    else:
        out = ckpt.parent / "reports"
    write_report(rep, out)
    print((out / "report.txt").read_text(), end="")
    print(f"report written to {out}")
    return EXIT_OK


def cmd_report(args) -> int:
    reports = []
    missing = []
    for run in args.runs:
        path = Path(run)
        if (path / MANIFEST_NAME).exists():
            candidate = path / "reports" / "report.json"
        else:
            candidate = path / "report.json"
        if not path.is_dir() or not candidate.exists():
            missing.append(str(path))
            continue
        reports.append(load_report(candidate))
    if missing:
        raise DatasetError("missing run or report directory: " + ", ".join(missing))
    out = merge_reports(reports, args.out)
    print((out / "comparison.txt").read_text(), end="")
    print(f"comparison written to {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="comparator", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="simulate a synthetic longitudinal cohort")
    g.add_argument("--config")
    g.add_argument("--out", required=True, help="dataset file (.jsonl)")
    g.add_argument("--seed", type=int)
    g.add_argument("--set", action="append", default=[], metavar="SECTION.FIELD=VALUE")
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", help="train a scoring model with early stopping")
    t.add_argument("--config")
    t.add_argument("--data", required=True)
    t.add_argument("--run-dir", help=f"defaults to ${RUN_DIR_ENV}/<name> or runs/<name>")
    t.add_argument("--batches", type=int)
    t.add_argument("--eval-interval", type=int)
    t.add_argument("--seed", type=int)
    t.add_argument("--loss")
    t.add_argument("--name")
    t.add_argument("--channels", help="comma-separated ordering names")
    t.add_argument("--resume", action="store_true")
    t.add_argument("--quiet", action="store_true")
    t.add_argument("--set", action="append", default=[], metavar="SECTION.FIELD=VALUE")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint on a dataset split")
    e.add_argument("--checkpoint")
    e.add_argument("--run-dir")
    e.add_argument("--data", required=True)
    e.add_argument("--split", default="test", choices=("train", "validation", "test", "all"))
    e.add_argument("--report-dir")
    e.add_argument("--truth", help="latent-severity sidecar (default: <data>.truth.jsonl)")
    e.add_argument("--no-truth", action="store_true")
    e.add_argument("--system", help="row label in comparison tables")
    e.set_defaults(func=cmd_eval)

    r = sub.add_parser("report", help="merge evaluated runs into one comparison table")
    r.add_argument("runs", nargs="+", help="run directories (or report directories)")
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DatasetError, CheckpointFormatError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
