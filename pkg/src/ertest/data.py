"""Instances, vocabularies, padded batches and the dataset JSONL format."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

SCHEMA_VERSION = 1
PAD, UNK = "<pad>", "<unk>"


class DatasetError(ValueError):
    """Malformed dataset input; ``problems`` holds (line number, message) pairs."""

    def __init__(self, path, problems: list[tuple[int, str]]):
        self.path = str(path)
        self.problems = problems
        lines = "; ".join(f"line {ln}: {msg}" for ln, msg in problems[:20])
        more = f" (+{len(problems) - 20} more)" if len(problems) > 20 else ""
        super().__init__(f"{self.path}: {len(problems)} bad line(s): {lines}{more}")


@dataclass
class Instance:
    id: str
    tokens: list[str]
    label: int | list[int]
    rationale: list[int] | None = None
    group_tags: list[str] = field(default_factory=list)
    contrast_of: str | None = None
    perturbation: str | None = None

    def __post_init__(self):
        if not self.tokens:
            raise ValueError(f"instance {self.id}: empty token sequence")
        if isinstance(self.label, list) and len(self.label) != len(self.tokens):
            raise ValueError(f"instance {self.id}: {len(self.label)} token labels for {len(self.tokens)} tokens")
        if self.rationale is not None:
            if len(self.rationale) != len(self.tokens):
                raise ValueError(
                    f"instance {self.id}: rationale length {len(self.rationale)} != token length {len(self.tokens)}"
                )
            if any(v not in (0, 1) for v in self.rationale):
                raise ValueError(f"instance {self.id}: rationale values must be 0 or 1")

    @property
    def has_rationale(self) -> bool:
        return self.rationale is not None

    def to_json(self) -> dict:
        row: dict = {"schema_version": SCHEMA_VERSION, "id": self.id, "tokens": self.tokens, "label": self.label}
        if self.rationale is not None:
            row["rationale"] = self.rationale
        if self.group_tags:
            row["group_tags"] = self.group_tags
        if self.contrast_of is not None:
            row["contrast_of"] = self.contrast_of
        if self.perturbation is not None:
            row["perturbation"] = self.perturbation
        return row


class Vocab:
    """Token to id map; id 0 is padding and id 1 stands in for unseen tokens."""

    def __init__(self, tokens: Iterable[str] = ()):
        self.itos: list[str] = [PAD, UNK]
        self.stoi: dict[str, int] = {PAD: 0, UNK: 1}
        for tok in tokens:
            self.add(tok)

    def add(self, tok: str) -> int:
        if tok not in self.stoi:
            self.stoi[tok] = len(self.itos)
            self.itos.append(tok)
        return self.stoi[tok]

    @classmethod
    def build(cls, datasets: Iterable[Sequence[Instance]]) -> "Vocab":
        vocab = cls()
        for ds in datasets:
            for inst in ds:
                for tok in inst.tokens:
                    vocab.add(tok)
        return vocab

    def encode(self, tokens: Sequence[str]) -> list[int]:
        return [self.stoi.get(t, 1) for t in tokens]

    def __len__(self) -> int:
        return len(self.itos)

    def to_json(self) -> list[str]:
        return list(self.itos)

    @classmethod
    def from_json(cls, itos: list[str]) -> "Vocab":
        if itos[:2] != [PAD, UNK]:
            raise ValueError("vocabulary must start with the pad and unk tokens")
        vocab = cls()
        for tok in itos[2:]:
            vocab.add(tok)
        return vocab


@dataclass
class Batch:
    """Padded arrays for a list of instances.

    ``labels`` is (B,) for sequence mode and (B, L) for token mode; ``human``
    holds rationale masks (zeros where absent) and ``annotated`` says which rows
    carry one.
    """

    ids: np.ndarray
    mask: np.ndarray
    labels: np.ndarray
    human: np.ndarray
    annotated: np.ndarray
    instance_ids: list[str]

    def __len__(self) -> int:
        return self.ids.shape[0]


def make_batch(
    instances: Sequence[Instance],
    vocab: Vocab,
    *,
    annotated: Iterable[str] | None = None,
    max_len: int | None = None,
) -> Batch:
    """Pad ``instances`` into a :class:`Batch`.

    When ``annotated`` is given, only rationales of those instance ids count;
    otherwise every instance with a rationale is annotated.
    """
    if not instances:
        raise ValueError("make_batch: no instances")
    allowed = None if annotated is None else set(annotated)
    lengths = [len(x.tokens) for x in instances]
    if max_len is not None and max(lengths) > max_len:
        raise ValueError(f"sequence of length {max(lengths)} exceeds max_len={max_len}")
    width = max(lengths)
    size = len(instances)
    ids = np.zeros((size, width), dtype=np.int64)
    mask = np.zeros((size, width))
    human = np.zeros((size, width))
    flags = np.zeros(size, dtype=bool)
    token_mode = isinstance(instances[0].label, list)
    labels = np.zeros((size, width) if token_mode else size, dtype=np.int64)
    for row, inst in enumerate(instances):
        n = len(inst.tokens)
        ids[row, :n] = vocab.encode(inst.tokens)
        mask[row, :n] = 1.0
        if token_mode:
            labels[row, :n] = inst.label
        else:
            labels[row] = inst.label
        if inst.rationale is not None and (allowed is None or inst.id in allowed):
            human[row, :n] = inst.rationale
            flags[row] = True
    return Batch(ids, mask, labels, human, flags, [x.id for x in instances])


# ---------------------------------------------------------------------------
# JSONL


def _parse_row(obj, lineno: int) -> Instance:
    if not isinstance(obj, dict):
        raise ValueError("expected a JSON object")
    missing = [k for k in ("tokens", "label") if k not in obj]
    if missing:
        raise ValueError(f"missing required field(s): {', '.join(missing)}")
    tokens = obj["tokens"]
    if not isinstance(tokens, list) or not tokens or not all(isinstance(t, str) for t in tokens):
        raise ValueError("'tokens' must be a nonempty list of strings")
    label = obj["label"]
    if isinstance(label, bool) or not (
        isinstance(label, int) or (isinstance(label, list) and all(isinstance(v, int) for v in label))
    ):
        raise ValueError("'label' must be an int or a list of ints")
    rationale = obj.get("rationale")
    if rationale is not None and not (isinstance(rationale, list) and all(v in (0, 1) for v in rationale)):
        raise ValueError("'rationale' must be a list of 0/1")
    return Instance(
        id=str(obj.get("id", lineno - 1)),
        tokens=list(tokens),
        label=label if isinstance(label, int) else list(label),
        rationale=None if rationale is None else [int(v) for v in rationale],
        group_tags=list(obj.get("group_tags", [])),
        contrast_of=None if obj.get("contrast_of") is None else str(obj["contrast_of"]),
        perturbation=obj.get("perturbation"),
    )


def ingest_jsonl(path) -> list[Instance]:
    """Parse a dataset file; every malformed line is reported together."""
    path = Path(path)
    instances: list[Instance] = []
    problems: list[tuple[int, str]] = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                instances.append(_parse_row(json.loads(line), lineno))
            except (ValueError, TypeError) as exc:
                problems.append((lineno, str(exc)))
    if problems:
        raise DatasetError(path, problems)
    return instances


def write_jsonl(instances: Iterable[Instance], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for inst in instances:
            fh.write(json.dumps(inst.to_json(), sort_keys=True) + "\n")
    return path
