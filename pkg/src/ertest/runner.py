"""Experiment orchestration: data preparation, per-seed training, evaluation and reports.

A run compares one or more model configurations against the No-ER baseline
trained on the same data with the same seeds. Every (model, seed) cell is
trained with dev-set early stopping only; OOD data is never looked at before
the final evaluation.
"""

from __future__ import annotations

import dataclasses
import datetime as _dt
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import datagen
from .config import SCHEMA_VERSION, ConfigError, DataConfig, ERConfig, RunConfig, Strategy, stable_hash
from .criteria import Criterion
from .data import Instance, Vocab, ingest_jsonl
from .evaluation import (
    ContrastGroup,
    FunctionalSuite,
    accuracy,
    contrast_consistency,
    failure_rate,
    fprd,
    macro_f1,
    normalize_failure_rates,
    write_predictions,
)
from .model import ModelParams, TrainingError, fit, init_params, load_checkpoint, predict, save_checkpoint
from .rationales import RationaleSource, apply_lexicon, load_lexicon
from .selection import rank, score_instances, select, write_manifest
from .stats import welch_t_test

log = logging.getLogger(__name__)

ID_DATASET = "id_test"


class RunFailure(RuntimeError):
    """At least one (model, seed) cell failed; the partial report is attached."""

    def __init__(self, report: "EvalReport"):
        super().__init__(f"{len(report.failures)} training cell(s) failed")
        self.report = report


# ---------------------------------------------------------------------------
# data


@dataclass
class Splits:
    train: list[Instance]
    dev: list[Instance]
    test: list[Instance]
    ood: dict[str, list[Instance]]
    pool: list[Instance] = field(default_factory=list)
    contrast_groups: list[ContrastGroup] = field(default_factory=list)
    contrast_instances: list[Instance] = field(default_factory=list)
    suites: list[FunctionalSuite] = field(default_factory=list)
    task_spec: datagen.TaskSpec | None = None
    lexicon_path: str | None = None

    @property
    def n_classes(self) -> int:
        labels = set()
        for part in (self.train, self.dev, self.test):
            for x in part:
                labels.update(x.label if isinstance(x.label, list) else [x.label])
        return max(2, max(labels) + 1)


def task_spec_from(data: DataConfig) -> datagen.TaskSpec:
    overrides = {k: tuple(v) if isinstance(v, list) else v for k, v in data.task.items()}
    try:
        return datagen.TaskSpec(**overrides)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad task grammar: {exc}") from None


def shift_from(entry: dict) -> datagen.Shift:
    entry = {k: v for k, v in entry.items() if k != "name"}
    new = entry.pop("new_distractors", ())
    if new == "default":
        new = datagen.OOD_DISTRACTORS
    try:
        return datagen.Shift(new_distractors=tuple(new or ()), **entry)
    except TypeError as exc:
        raise ConfigError(f"bad OOD shift: {exc}") from None


def prepare_data(data: DataConfig, mode: str = "sequence") -> Splits:
    """Generate (or load) every split; deterministic in ``data``."""
    if data.paths is not None:
        p = data.paths
        splits = Splits(
            ingest_jsonl(p["train"]),
            ingest_jsonl(p["dev"]),
            ingest_jsonl(p["test"]),
            {name: ingest_jsonl(path) for name, path in sorted(p.get("ood", {}).items())},
            ingest_jsonl(p["pool"]) if "pool" in p else [],
            lexicon_path=p.get("lexicon"),
        )
        if "contrast" in p:
            splits.contrast_instances = ingest_jsonl(p["contrast"])
            splits.contrast_groups = contrast_groups_from(splits.test, splits.contrast_instances)
        return splits
    spec = task_spec_from(data)
    base = data.data_seed * 1000
    if mode == "token":
        gen = datagen.generate_token_dataset
    else:
        gen = datagen.generate_id_dataset
    train = gen(spec, data.train_size, base + 1, "train")
    dev = gen(spec, data.dev_size, base + 2, "dev")
    test = gen(spec, data.test_size, base + 3, "test")
    pool = gen(spec, data.pool_size, base + 4, "pool") if data.pool_size else []
    ood = {}
    for k, entry in enumerate(data.ood):
        try:
            shifted = datagen.shifted_spec(spec, shift_from(entry))
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        ood[entry["name"]] = gen(shifted, data.ood_size, base + 10 + k, entry["name"])
    splits = Splits(train, dev, test, ood, pool, task_spec=spec)
    if mode == "sequence":
        if data.contrast:
            splits.contrast_groups, splits.contrast_instances = datagen.generate_contrast_set(test, spec, seed=base + 5)
        if data.functional:
            splits.suites = datagen.generate_functional_suites(spec, size=data.suite_size, seed=base + 6)
    return splits


def contrast_groups_from(originals: Sequence[Instance], contrasts: Sequence[Instance]) -> list[ContrastGroup]:
    """Rebuild contrast groups from the ``contrast_of``/``perturbation`` fields."""
    by_orig: dict[str, list] = {}
    for c in contrasts:
        if c.contrast_of is None or c.perturbation is None:
            raise ConfigError(f"contrast instance {c.id} lacks contrast_of/perturbation")
        by_orig.setdefault(c.contrast_of, []).append((c.id, c.label, c.perturbation))
    groups = []
    for x in originals:
        if x.id in by_orig:
            groups.append(ContrastGroup(x.id, x.label, by_orig.pop(x.id)))
    if by_orig:
        raise ConfigError(f"contrast instances refer to unknown originals: {sorted(by_orig)[:5]}")
    return groups


def _strip(instances: Sequence[Instance]) -> list[Instance]:
    return [dataclasses.replace(x, rationale=None) for x in instances]


def rationale_view(cfg: RunConfig, splits: Splits) -> list[Instance]:
    """Training instances whose rationales come from the configured source."""
    train = list(splits.train)
    if cfg.rationale_source is RationaleSource.TASK_LEVEL:
        if splits.lexicon_path is not None:
            lexicon = load_lexicon(splits.lexicon_path)
        elif splits.task_spec is not None:
            lexicon = datagen.task_lexicon(splits.task_spec, cfg.lexicon_fraction, seed=cfg.data.data_seed)
        else:
            raise ConfigError("task-level rationales need a lexicon file")
        train = apply_lexicon(lexicon, train)
    return train


# ---------------------------------------------------------------------------
# training cells


def baseline_of(cfg: RunConfig) -> RunConfig:
    return dataclasses.replace(
        cfg,
        name="No-ER",
        er=ERConfig(lambda_er=0.0),
        budget_k=100.0,
        budget_count=None,
        strategy=Strategy.RANDOM,
        rationale_source=RationaleSource.INSTANCE_LEVEL,
        lexicon_fraction=1.0,
        extra_train=0,
        extra_annotated=False,
    )


def is_baseline(cfg: RunConfig) -> bool:
    a, b = cfg.semantic(), baseline_of(cfg).semantic()
    a.pop("name")
    b.pop("name")
    return a == b


@dataclass
class Cell:
    label: str
    cfg: RunConfig
    seed: int
    train: list[Instance]
    annotated: list[str] | None
    vocab: Vocab
    n_classes: int
    checkpoint: Path | None
    cell_hash: str


def _train_cell(cell: Cell, dev: list[Instance]) -> tuple[ModelParams, dict]:
    if cell.checkpoint is not None and cell.checkpoint.exists():
        params, doc = load_checkpoint(cell.checkpoint)
        if doc.get("config_hash") == cell.cell_hash:
            return params, doc.get("training", {})
    cfg = cell.cfg
    params = init_params(
        len(cell.vocab),
        cell.n_classes,
        embed_dim=cfg.train.embed_dim,
        mode=cfg.mode,
        seed=cell.seed,
        max_len=cfg.train.max_len,
    )
    annotated = None if cell.annotated is None else set(cell.annotated)
    params, history = fit(params, cell.train, dev, cfg.er, cfg.train, cell.vocab, annotated_ids=annotated, seed=cell.seed)
    summary = {
        "best_epoch": history.best_epoch,
        "epochs_run": len(history.epochs) - 1,
        "stopped_early": history.stopped_early,
        "best_dev_total": history.best.dev_total,
    }
    if cell.checkpoint is not None:
        save_checkpoint(params, cell.checkpoint, config_hash=cell.cell_hash, vocab=cell.vocab)
        doc = json.loads(cell.checkpoint.read_text())
        doc["training"] = summary
        cell.checkpoint.write_text(json.dumps(doc))
    return params, summary


def _run_cell(args) -> tuple[str, int, ModelParams | None, dict]:
    cell, dev = args
    try:
        params, summary = _train_cell(cell, dev)
        return cell.label, cell.seed, params, summary
    except (TrainingError, ValueError, FloatingPointError) as exc:
        log.error("cell %s seed %d failed: %s", cell.label, cell.seed, exc)
        return cell.label, cell.seed, None, {"error": f"{type(exc).__name__}: {exc}"}


def _map(fn, jobs, workers: int):
    if workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs))


# ---------------------------------------------------------------------------
# reports


@dataclass
class MetricRow:
    model: str
    dataset: str
    metric: str
    per_seed: list[float]
    mean: float
    std: float | None
    p_value: float | None = None
    significant: bool | None = None

    def to_json(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class EvalReport:
    config_hash: str
    baseline: str
    models: list[str]
    seeds: list[int]
    rows: list[MetricRow]
    configs: dict[str, dict] = field(default_factory=dict)
    training: dict[str, dict] = field(default_factory=dict)
    selections: dict[str, dict] = field(default_factory=dict)
    failures: list[dict] = field(default_factory=list)
    started_at: str = ""
    finished_at: str = ""
    schema_version: int = SCHEMA_VERSION

    def row(self, model: str, dataset: str, metric: str) -> MetricRow:
        for r in self.rows:
            if (r.model, r.dataset, r.metric) == (model, dataset, metric):
                return r
        raise KeyError((model, dataset, metric))

    def to_json(self) -> dict:
        doc = dataclasses.asdict(self)
        doc["rows"] = [r.to_json() for r in self.rows]
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> "EvalReport":
        doc = dict(doc)
        doc["rows"] = [MetricRow(**r) for r in doc["rows"]]
        return cls(**doc)


def summarize(per_seed: Sequence[float]) -> tuple[float, float | None]:
    vals = [float(v) for v in per_seed]
    mean = math.fsum(vals) / len(vals)
    if len(vals) < 2:
        return mean, None
    return mean, float(np.std(vals, ddof=1))


def lower_is_better(metric: str) -> bool:
    return metric in ("fprd", "norm_failure_rate") or metric.startswith("failure_rate")


def compare(
    values: Sequence[float], baseline: Sequence[float], metric: str = "accuracy", alpha: float = 0.05
) -> tuple[float | None, bool | None]:
    """One-sided Welch test that the model improves on the baseline.

    "Improves" means a larger mean, or a smaller one for failure rates and
    FPRD. Returns (None, None) when the test is undefined (n < 2 or no
    variance in either sample).
    """
    alternative = "less" if lower_is_better(metric) else "greater"
    try:
        res = welch_t_test(values, baseline, alternative=alternative, alpha=alpha)
    except ValueError:
        return None, None
    return res.p_value, res.significant


def _ordered_datasets(names) -> list[str]:
    fixed = [ID_DATASET]
    ood = sorted(n for n in names if n not in (ID_DATASET, "contrast") and not n.startswith("functional"))
    rest = ["contrast"] + sorted(n for n in names if n.startswith("functional"))
    return [n for n in fixed + ood + rest if n in names]


def _evaluate_seed(params: ModelParams, vocab: Vocab, splits: Splits) -> tuple[dict, dict]:
    """Raw metrics {(dataset, metric): value} and raw functional failure rates {(category, subtest): value}."""
    out: dict[tuple[str, str], float] = {}
    sets = {ID_DATASET: splits.test, **splits.ood}
    preds_by_set = {}
    for name, data in sets.items():
        preds = predict(params, data, vocab)
        preds_by_set[name] = preds
        gold = [x.label for x in data]
        out[(name, "accuracy")] = accuracy(preds, gold)
        out[(name, "macro_f1")] = macro_f1(preds, gold)
        if params.mode == "sequence" and any(x.group_tags for x in data) and any(g != 1 for g in gold):
            out[(name, "fprd")] = fprd(preds, gold, [x.group_tags for x in data])
    if splits.contrast_groups:
        ids = [x.id for x in splits.test]
        pmap = dict(zip(ids, preds_by_set[ID_DATASET]))
        pmap.update(zip([x.id for x in splits.contrast_instances], predict(params, splits.contrast_instances, vocab)))
        res = contrast_consistency(splits.contrast_groups, pmap)
        out[("contrast", "original_acc")] = res.original_acc
        out[("contrast", "contrast_acc")] = res.contrast_acc
        out[("contrast", "consistency")] = res.consistency
    fails = {}
    for suite in splits.suites:
        for sub in suite.subtests:
            fails[(suite.category.value, sub.name)] = failure_rate(sub, predict(params, sub.instances, vocab))
    return out, fails


def run_models(configs: Sequence[RunConfig], *, out_dir=None, write: bool = True) -> EvalReport:
    """Train the No-ER baseline plus every config, evaluate, and write the report.

    All configs must share data, task mode, training settings and seeds.
    """
    if not configs:
        raise ConfigError("no configurations given")
    first = configs[0]
    for c in configs[1:]:
        if (c.data, c.mode, c.train, c.seeds) != (first.data, first.mode, first.train, first.seeds):
            raise ConfigError("configs in one run must share data, mode, training settings and seeds")
    base_cfg = baseline_of(first)
    models = [c for c in configs if not is_baseline(c)]
    labels = [base_cfg.label] + [c.label for c in models]
    if len(set(labels)) != len(labels):
        raise ConfigError(f"duplicate model labels: {labels}")
    run_hash = stable_hash([base_cfg.semantic()] + [c.semantic() for c in models])
    root = Path(out_dir if out_dir is not None else first.out_dir) / run_hash
    started = _now()

    splits = prepare_data(first.data, first.mode)
    vocab = Vocab.build([splits.train + splits.pool])
    n_classes = splits.n_classes
    workers = max(c.workers for c in configs)

    def cell_for(cfg: RunConfig, seed: int, train, annotated) -> Cell:
        h = stable_hash([cfg.semantic(), seed, annotated])
        ckpt = root / "models" / f"{_slug(cfg.label)}-s{seed}.json" if write else None
        return Cell(cfg.label, cfg, seed, train, annotated, vocab, n_classes, ckpt, h)

    trained: dict[str, dict[int, ModelParams]] = {}
    training: dict[str, dict] = {}
    failures: list[dict] = []

    def run_phase(cells: list[Cell]):
        for label, seed, params, summary in _map(_run_cell, [(c, splits.dev) for c in cells], workers):
            training.setdefault(label, {})[str(seed)] = summary
            if params is None:
                failures.append({"model": label, "seed": seed, "error": summary["error"]})
            else:
                trained.setdefault(label, {})[seed] = params

    # baseline first: score-based selection needs it
    base_train = _strip(splits.train)
    run_phase([cell_for(base_cfg, s, base_train, None) for s in first.seeds])

    selections: dict[str, dict] = {}
    cells = []
    for cfg in models:
        train_view = rationale_view(cfg, splits)
        extra = splits.pool[: cfg.extra_train]
        if cfg.extra_train and len(extra) < cfg.extra_train:
            raise ConfigError(f"{cfg.label}: pool holds only {len(extra)} instances")
        scores = None
        if cfg.er.enabled and cfg.strategy is not Strategy.RANDOM and not cfg.extra_annotated:
            baselines = [trained[base_cfg.label][s] for s in first.seeds if s in trained.get(base_cfg.label, {})]
            if not baselines:
                raise ConfigError(f"{cfg.label}: no trained baseline available for score-based selection")
            scores = score_instances(baselines, train_view, vocab, cfg.strategy, cfg.k_prime, gamma=cfg.er.gamma_er)
        for seed in cfg.seeds:
            if not cfg.er.enabled:
                train = _strip(train_view) + _strip(extra)
                annotated = None
            elif cfg.extra_annotated:
                train = _strip(train_view) + list(extra)
                annotated = [x.id for x in extra if x.has_rationale]
            else:
                eligible = [x for x in train_view if x.has_rationale]
                if not eligible:
                    raise ConfigError(f"{cfg.label}: no training instance has a rationale")
                train = list(train_view) + _strip(extra)
                annotated = _choose(cfg, train_view, scores, seed)
                selections.setdefault(cfg.label, {})[str(seed)] = {"count": len(annotated)}
                if write:
                    write_manifest(root / "manifests" / f"{_slug(cfg.label)}-s{seed}.json", cfg.strategy,
                                   cfg.budget_k, seed, annotated)
            cells.append(cell_for(cfg, seed, train, annotated))
    run_phase(cells)

    # evaluation
    raw: dict[str, dict[int, dict]] = {}
    fails: dict[str, dict[int, dict]] = {}
    for label in labels:
        for seed, params in sorted(trained.get(label, {}).items()):
            metrics, frates = _evaluate_seed(params, vocab, splits)
            raw.setdefault(label, {})[seed] = metrics
            fails.setdefault(label, {})[seed] = frates
            if write:
                _write_predictions(root / "predictions" / f"{_slug(label)}-s{seed}.csv", params, vocab, splits)
    _add_functional(raw, fails, labels, first.seeds)

    rows = _rows(raw, labels, base_cfg.label)
    report = EvalReport(
        config_hash=run_hash,
        baseline=base_cfg.label,
        models=labels,
        seeds=list(first.seeds),
        rows=rows,
        configs={base_cfg.label: base_cfg.to_json(), **{c.label: c.to_json() for c in models}},
        training=training,
        selections=selections,
        failures=failures,
        started_at=started,
        finished_at=_now(),
    )
    if write:
        write_report(report, root)
    if failures:
        raise RunFailure(report)
    return report


def _choose(cfg: RunConfig, train_view: list[Instance], scores, seed: int) -> list[str]:
    eligible = [x for x in train_view if x.has_rationale]
    if scores is not None:
        by_id = {s.instance_id: s for s in scores}
        scores = [by_id[x.id] for x in eligible]
    if cfg.budget_count is None:
        return select(eligible, cfg.budget_k, cfg.strategy, scores=scores, seed=seed)
    size = min(cfg.budget_count, len(eligible))
    if size == len(eligible):
        return [x.id for x in eligible]
    if cfg.strategy is Strategy.RANDOM:
        rng = np.random.default_rng(seed)
        picked = np.sort(rng.choice(len(eligible), size=size, replace=False))
    else:
        picked = np.sort(rank(scores, cfg.strategy)[:size])
    return [eligible[i].id for i in picked]


def _add_functional(raw, fails, labels, seeds) -> None:
    """Failure rates per subtest plus min-max normalized rates across the compared models."""
    present = [m for m in labels if m in fails]
    keys = sorted({k for m in present for s in fails[m] for k in fails[m][s]})
    if not keys:
        return
    for m in present:
        for s, frates in fails[m].items():
            for (cat, sub), v in frates.items():
                raw[m][s][(f"functional/{cat}", f"failure_rate:{sub}")] = v
    common = [s for s in seeds if all(s in fails[m] for m in present)]
    if len(present) < 2:
        return
    by_cat: dict[str, list[tuple[str, str]]] = {}
    for cat, sub in keys:
        by_cat.setdefault(cat, []).append((cat, sub))
    for s in common:
        normed = {m: {} for m in present}
        for key in keys:
            vals = normalize_failure_rates([fails[m][s][key] for m in present])
            for m, v in zip(present, vals):
                normed[m][key] = v
        for m in present:
            allv = []
            for cat, ks in by_cat.items():
                vals = [normed[m][k] for k in ks]
                raw[m][s][(f"functional/{cat}", "norm_failure_rate")] = math.fsum(vals) / len(vals)
                allv.extend(vals)
            raw[m][s][("functional/all", "norm_failure_rate")] = math.fsum(allv) / len(allv)


def _rows(raw, labels, baseline: str) -> list[MetricRow]:
    keys = []
    for m in labels:
        for metrics in raw.get(m, {}).values():
            for k in metrics:
                if k not in keys:
                    keys.append(k)
    order = _ordered_datasets({d for d, _ in keys})
    keys.sort(key=lambda k: (order.index(k[0]), k[1]))
    rows = []
    for m in labels:
        for dataset, metric in keys:
            per = [raw[m][s][(dataset, metric)] for s in sorted(raw.get(m, {})) if (dataset, metric) in raw[m][s]]
            if not per:
                continue
            mean, std = summarize(per)
            row = MetricRow(m, dataset, metric, per, mean, std)
            if m != baseline and baseline in raw:
                base = [raw[baseline][s][(dataset, metric)] for s in sorted(raw[baseline]) if (dataset, metric) in raw[baseline][s]]
                row.p_value, row.significant = compare(per, base, metric)
            rows.append(row)
    return rows


def _write_predictions(path: Path, params: ModelParams, vocab: Vocab, splits: Splits) -> None:
    rows = []
    for name, data in {ID_DATASET: splits.test, **splits.ood}.items():
        for x, p in zip(data, predict(params, data, vocab)):
            rows.append({"instance_id": x.id, "gold": x.label, "pred": p, "split": name, "group_tags": x.group_tags})
    write_predictions(rows, path)


def write_report(report: EvalReport, root) -> Path:
    from .report import render_report

    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    (root / "report.json").write_text(json.dumps(report.to_json(), indent=2, sort_keys=True))
    table, csv_text = render_report(report)
    (root / "report.txt").write_text(table)
    (root / "report.csv").write_text(csv_text)
    return root


def run_experiment(config: RunConfig, *, out_dir=None, write: bool = True) -> EvalReport:
    """Train and evaluate one configuration next to its No-ER baseline."""
    return run_models([config], out_dir=out_dir, write=write)


# ---------------------------------------------------------------------------
# research-question sweeps

RQ4_PRESETS = {
    "label_only": (4, 13, 128, 615, 1229),
    "expl_only": (5, 16, 163, 783, 1556),
    "label_expl": (2, 7, 68, 328, 657),
}
RQ3_BUDGETS = (5.0, 15.0, 50.0)


def rq1_configs(base: RunConfig, extractors=("ixg", "attention", "learned")) -> list[RunConfig]:
    """Every rationale alignment criterion for each extractor."""
    return [
        dataclasses.replace(base, name="", er=dataclasses.replace(base.er, extractor=e, criterion=c))
        for e in extractors
        for c in Criterion
    ]


def rq2_configs(base: RunConfig, extractors=("ixg", "attention"), criteria=("mae", "huber")) -> list[RunConfig]:
    """Instance-level versus task-level rationales."""
    return [
        dataclasses.replace(base, name="", er=dataclasses.replace(base.er, extractor=e, criterion=c), rationale_source=src)
        for e in extractors
        for c in criteria
        for src in RationaleSource
    ]


def rq3_configs(base: RunConfig, budgets=RQ3_BUDGETS, strategies=tuple(Strategy)) -> list[RunConfig]:
    """Annotation budgets crossed with instance-selection strategies (IxG+MAE)."""
    er = dataclasses.replace(base.er, extractor="ixg", criterion="mae")
    return [dataclasses.replace(base, name="", er=er, budget_k=k, strategy=s) for k in budgets for s in strategies]


def rq4_configs(base: RunConfig, presets=RQ4_PRESETS, d_init: int = 1000) -> list[RunConfig]:
    """Label Only / Expl Only / Label+Expl at the published instance counts.

    Expl Only annotates a subset of the initial training set, so its counts are
    capped at the initial set size.
    """
    er = dataclasses.replace(base.er, extractor="ixg", criterion="mae")
    need = max(max(presets.get("label_only", (0,))), max(presets.get("label_expl", (0,))))
    data = dataclasses.replace(base.data, train_size=d_init, pool_size=max(base.data.pool_size, need))
    base = dataclasses.replace(base, data=data)
    out = []
    for n in presets.get("label_only", ()):
        out.append(dataclasses.replace(base, name=f"Label Only {n}", er=ERConfig(lambda_er=0.0), extra_train=n))
    for n in presets.get("expl_only", ()):
        n_eff = min(n, d_init)
        out.append(dataclasses.replace(base, name=f"Expl Only {n}", er=er, budget_count=n_eff))
    for n in presets.get("label_expl", ()):
        out.append(
            dataclasses.replace(base, name=f"Label+Expl {n}", er=er, extra_train=n, extra_annotated=True)
        )
    return out


SWEEPS = {"rq1": rq1_configs, "rq2": rq2_configs, "rq3": rq3_configs, "rq4": rq4_configs}


def run_sweep(kind: str, base: RunConfig, *, out_dir=None, write: bool = True, **kwargs) -> EvalReport:
    if kind not in SWEEPS:
        raise ConfigError(f"unknown sweep {kind!r}; choose from {sorted(SWEEPS)}")
    return run_models(SWEEPS[kind](base, **kwargs), out_dir=out_dir, write=write)


def _slug(label: str) -> str:
    return "".join(ch if ch.isalnum() or ch in "-_." else "_" for ch in label)


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
