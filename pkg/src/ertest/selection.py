"""Choosing which training instances receive rationale annotations, and batching them."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .config import Strategy
from .data import Instance, Vocab
from .extractors import DEFAULT_GAMMA, extract_batch, topk_count
from .model import ModelParams, class_probabilities

# strategies that select the lowest scores first
_ASCENDING = {Strategy.LC, Strategy.LIS}
_PAIRS = {Strategy.HC: Strategy.LC, Strategy.HIS: Strategy.LIS}


@dataclass
class SelectionScore:
    instance_id: str
    score: float
    strategy: Strategy
    seed_scores: list[float] = field(default_factory=list)


def top_mean(probs: Sequence[float], k_prime: float) -> float:
    """Mean of the top-k'% importance probabilities."""
    arr = np.sort(np.asarray(probs, dtype=np.float64))[::-1]
    keep = topk_count(k_prime, arr.size)
    return float(arr[:keep].mean())


def score_instances(
    no_er_models: Sequence[ModelParams],
    train_set: Sequence[Instance],
    vocab: Vocab,
    strategy: Strategy | str,
    k_prime: float = 10.0,
    *,
    gamma: float = DEFAULT_GAMMA,
) -> list[SelectionScore]:
    """Per-instance selection scores averaged over the baseline models (one per seed).

    LC/HC score is the gold-class probability; LIS/HIS score is the mean of the
    top-k'% IxG importance probabilities computed toward the gold class.
    Random sampling needs no scores and returns an empty list.
    """
    strategy = Strategy(strategy)
    if strategy is Strategy.RANDOM:
        return []
    if not no_er_models:
        raise ValueError("score_instances: at least one trained baseline model is required")
    if any(m.steps == 0 for m in no_er_models):
        raise ValueError("score_instances: baseline model has never been trained")
    if not 0 < k_prime < 100:
        raise ValueError("k' must lie strictly between 0 and 100")
    per_seed: list[list[float]] = []
    for params in no_er_models:
        if strategy in (Strategy.LC, Strategy.HC):
            probs = class_probabilities(params, train_set, vocab)
            gold = np.asarray([x.label for x in train_set])
            per_seed.append(probs[np.arange(len(train_set)), gold].tolist())
        else:
            rats = extract_batch(params, train_set, vocab, "ixg", target="gold", gamma=gamma)
            per_seed.append([top_mean(r.probs, k_prime) for r in rats])
    out = []
    for i, inst in enumerate(train_set):
        vals = [s[i] for s in per_seed]
        out.append(SelectionScore(inst.id, math.fsum(vals) / len(vals), strategy, vals))
    return out


def budget_size(k_percent: float, n: int) -> int:
    if not 0 < k_percent <= 100:
        raise ValueError(f"annotation budget must be in (0, 100], got {k_percent}")
    if k_percent == 100:
        return n
    return max(1, min(n, math.floor(k_percent / 100.0 * n + 0.5)))


def rank(scores: Sequence[SelectionScore], strategy: Strategy | str) -> list[int]:
    """Positions in selection order; ties keep the lower position first."""
    strategy = Strategy(strategy)
    vals = np.asarray([s.score for s in scores])
    pos = np.arange(len(vals))
    key = vals if strategy in _ASCENDING else -vals
    return [int(i) for i in np.lexsort((pos, key))]


def select(
    train_set: Sequence[Instance],
    k_percent: float,
    strategy: Strategy | str,
    *,
    scores: Sequence[SelectionScore] | None = None,
    seed: int = 0,
) -> list[str]:
    """Ids of the instances to annotate, in dataset order."""
    strategy = Strategy(strategy)
    size = budget_size(k_percent, len(train_set))
    if size == len(train_set):
        return [x.id for x in train_set]
    if strategy is Strategy.RANDOM:
        rng = np.random.default_rng(seed)
        picked = np.sort(rng.choice(len(train_set), size=size, replace=False))
    else:
        if scores is None or len(scores) != len(train_set):
            raise ValueError(f"strategy {strategy.value} needs one score per training instance")
        picked = np.sort(rank(scores, strategy)[:size])
    return [train_set[i].id for i in picked]


def compose_batches(
    train_set: Sequence[Instance],
    annotated_ids,
    batch_size: int,
    rng: np.random.Generator,
) -> list[list[Instance]]:
    """One epoch of batches in which at least a third of each batch is annotated.

    Unannotated instances appear exactly once; annotated ones fill the remaining
    slots, cycling (reshuffled) when there are too few of them.
    """
    annotated_ids = set(annotated_ids)
    ann = [x for x in train_set if x.id in annotated_ids]
    rest = [x for x in train_set if x.id not in annotated_ids]
    if not ann:
        raise ValueError("compose_batches: no annotated instances")
    if not rest:
        order = rng.permutation(len(ann))
        return [[ann[i] for i in order[s : s + batch_size]] for s in range(0, len(order), batch_size)]
    quota = math.ceil(batch_size / 3)
    free = batch_size - quota
    if free == 0:
        # a batch of one cannot hold both an annotated and an unannotated instance
        raise ValueError("compose_batches: partial annotation needs batch_size >= 2")
    n_batches = max(math.ceil(len(rest) / free), math.ceil(len(train_set) / batch_size), 1)
    rest_order = rng.permutation(len(rest))
    chunks = np.array_split(rest_order, n_batches)

    def ann_stream():
        while True:
            for i in rng.permutation(len(ann)):
                yield ann[i]

    stream = ann_stream()
    batches = []
    for chunk in chunks:
        batch = [rest[i] for i in chunk]
        batch += [next(stream) for _ in range(batch_size - len(batch))]
        perm = rng.permutation(len(batch))
        batches.append([batch[i] for i in perm])
    return batches


def write_manifest(path, strategy: Strategy | str, k_percent: float, seed: int, selected_ids: Sequence[str]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = {
        "schema_version": 1,
        "strategy": Strategy(strategy).value,
        "k": k_percent,
        "seed": seed,
        "selected_ids": list(selected_ids),
    }
    path.write_text(json.dumps(doc, indent=2))
    return path


def read_manifest(path) -> dict:
    return json.loads(Path(path).read_text())
