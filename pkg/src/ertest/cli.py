"""Command line: generate, train, evaluate, sweep, report.

Exit codes: 0 success, 1 run failure, 2 configuration (or input) error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from . import datagen
from .config import ConfigError, RunConfig, load_config
from .data import DatasetError, Vocab, ingest_jsonl, write_jsonl
from .evaluation import accuracy, macro_f1, write_predictions
from .model import load_checkpoint, predict
from .report import render_report
from .runner import SWEEPS, EvalReport, RunFailure, prepare_data, run_experiment, run_sweep

EXIT_OK, EXIT_RUN, EXIT_CONFIG = 0, 1, 2


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="RunConfig JSON file; flags override its fields")
    p.add_argument("--name")
    p.add_argument("--mode", choices=["sequence", "token"])
    p.add_argument("--extractor", choices=["ixg", "attention", "learned"])
    p.add_argument("--criterion", choices=["mse", "mae", "huber", "bce", "kldiv", "order"])
    p.add_argument("--lambda-er", type=float)
    p.add_argument("--gamma-er", type=float)
    p.add_argument("--budget-k", type=float)
    p.add_argument("--budget-count", type=int)
    p.add_argument("--strategy", choices=["random", "lc", "hc", "lis", "his"])
    p.add_argument("--rationale-source", choices=["instance_level", "task_level"])
    p.add_argument("--seeds", type=lambda s: [int(x) for x in s.split(",")], help="comma-separated, e.g. 0,1,2")
    p.add_argument("--lr", type=float)
    p.add_argument("--optimizer", choices=["sgd", "adam"])
    p.add_argument("--batch-size", type=int)
    p.add_argument("--max-epochs", type=int)
    p.add_argument("--patience", type=int)
    p.add_argument("--train-size", type=int)
    p.add_argument("--data-dir", help="directory with train/dev/test.jsonl (optional: ood/*.jsonl, contrast.jsonl, pool.jsonl, lexicon.tsv)")
    p.add_argument("--out-dir")
    p.add_argument("--workers", type=int)


def config_from_args(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    er = {k: v for k, v in (("extractor", args.extractor), ("criterion", args.criterion),
                            ("lambda_er", args.lambda_er), ("gamma_er", args.gamma_er)) if v is not None}
    tr = {k: v for k, v in (("lr", args.lr), ("optimizer", args.optimizer), ("batch_size", args.batch_size),
                            ("max_epochs", args.max_epochs), ("patience", args.patience)) if v is not None}
    top = {k: v for k, v in (("name", args.name), ("mode", args.mode), ("budget_k", args.budget_k),
                             ("budget_count", args.budget_count), ("strategy", args.strategy),
                             ("rationale_source", args.rationale_source), ("seeds", args.seeds),
                             ("out_dir", args.out_dir), ("workers", args.workers)) if v is not None}
    data = cfg.data
    if args.train_size is not None:
        data = dataclasses.replace(data, train_size=args.train_size)
    if args.data_dir:
        data = dataclasses.replace(data, paths=_paths_from_dir(Path(args.data_dir)))
    try:
        return dataclasses.replace(
            cfg,
            er=dataclasses.replace(cfg.er, **er),
            train=dataclasses.replace(cfg.train, **tr),
            data=data,
            **top,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _paths_from_dir(d: Path) -> dict:
    paths = {}
    for split in ("train", "dev", "test", "pool"):
        f = d / f"{split}.jsonl"
        if f.exists():
            paths[split] = str(f)
    paths["ood"] = {f.stem: str(f) for f in sorted((d / "ood").glob("*.jsonl"))}
    if (d / "contrast.jsonl").exists():
        paths["contrast"] = str(d / "contrast.jsonl")
    if (d / "lexicon.tsv").exists():
        paths["lexicon"] = str(d / "lexicon.tsv")
    missing = {"train", "dev", "test"} - set(paths)
    if missing:
        raise ConfigError(f"{d}: missing {sorted(missing)} JSONL files")
    return paths


def cmd_generate(args) -> int:
    cfg = config_from_args(args)
    splits = prepare_data(cfg.data, cfg.mode)
    out = Path(args.out)
    write_jsonl(splits.train, out / "train.jsonl")
    write_jsonl(splits.dev, out / "dev.jsonl")
    write_jsonl(splits.test, out / "test.jsonl")
    if splits.pool:
        write_jsonl(splits.pool, out / "pool.jsonl")
    for name, data in splits.ood.items():
        write_jsonl(data, out / "ood" / f"{name}.jsonl")
    if splits.contrast_instances:
        write_jsonl(splits.contrast_instances, out / "contrast.jsonl")
    for suite in splits.suites:
        for sub in suite.subtests:
            write_jsonl(sub.instances, out / "functional" / f"{suite.category.value}.{sub.name}.jsonl")
    if splits.task_spec is not None:
        from .rationales import save_lexicon

        save_lexicon(datagen.task_lexicon(splits.task_spec), out / "lexicon.tsv")
    print(f"wrote splits to {out}")
    return EXIT_OK


def _finish(report: EvalReport) -> None:
    table, _ = render_report(report)
    print(table, end="")


def cmd_train(args) -> int:
    cfg = config_from_args(args)
    try:
        report = run_experiment(cfg)
    except RunFailure as exc:
        _finish(exc.report)
        return EXIT_RUN
    _finish(report)
    print(f"report: {Path(cfg.out_dir) / report.config_hash}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = config_from_args(args)
    try:
        report = run_sweep(args.kind, cfg)
    except RunFailure as exc:
        _finish(exc.report)
        return EXIT_RUN
    _finish(report)
    print(f"report: {Path(cfg.out_dir) / report.config_hash}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    params, doc = load_checkpoint(args.checkpoint)
    if "vocab" not in doc:
        raise ConfigError("checkpoint carries no vocabulary")
    vocab = Vocab.from_json(doc["vocab"])
    data = ingest_jsonl(args.data)
    preds = predict(params, data, vocab)
    gold = [x.label for x in data]
    result = {"n": len(data), "accuracy": accuracy(preds, gold), "macro_f1": macro_f1(preds, gold)}
    if args.predictions:
        rows = [{"instance_id": x.id, "gold": x.label, "pred": p, "split": Path(args.data).stem,
                 "group_tags": x.group_tags} for x, p in zip(data, preds)]
        write_predictions(rows, args.predictions)
    print(json.dumps(result, indent=2))
    return EXIT_OK


def cmd_report(args) -> int:
    path = Path(args.report)
    if path.is_dir():
        path = path / "report.json"
    try:
        report = EvalReport.from_json(json.loads(path.read_text()))
    except (OSError, json.JSONDecodeError, TypeError, KeyError) as exc:
        raise ConfigError(f"cannot read report {path}: {exc}") from None
    table, csv_text = render_report(report)
    print(table, end="")
    if args.csv:
        Path(args.csv).write_text(csv_text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ertest", description="Explanation regularization test bench")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write synthetic splits, contrast set and functional suites as JSONL")
    _add_run_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_generate)

    p = sub.add_parser("train", help="train a configuration and its No-ER baseline, evaluate, write the report")
    _add_run_flags(p)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("evaluate", help="score a saved checkpoint on a JSONL dataset")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--predictions", help="write a prediction table CSV here")
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("sweep", help="run a research-question sweep")
    p.add_argument("kind", choices=sorted(SWEEPS))
    _add_run_flags(p)
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("report", help="render a saved report")
    p.add_argument("report", help="report.json or its directory")
    p.add_argument("--csv", help="also write the plot-data CSV here")
    p.set_defaults(fn=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.fn(args)
    except (ConfigError, DatasetError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
