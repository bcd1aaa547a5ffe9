"""Human rationale sources: per-instance annotations and task-level lexicon matching."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .data import Instance

log = logging.getLogger(__name__)

MAX_NGRAM = 3


class Polarity(str, Enum):
    IMPORTANT_IF_MATCHED = "important_if_matched"
    UNIMPORTANT_IF_MATCHED = "unimportant_if_matched"


class RationaleSource(str, Enum):
    INSTANCE_LEVEL = "instance_level"
    TASK_LEVEL = "task_level"


@dataclass(frozen=True)
class HumanRationale:
    mask: tuple[int, ...]
    source: RationaleSource

    def __post_init__(self):
        if any(v not in (0, 1) for v in self.mask):
            raise ValueError("human rationale values must be 0 or 1")

    def __len__(self) -> int:
        return len(self.mask)


def _key(ngram: str | Sequence[str]) -> tuple[str, ...]:
    parts = ngram.split() if isinstance(ngram, str) else list(ngram)
    return tuple(p.lower() for p in parts)


class Lexicon:
    """Immutable set of 1-3 token n-grams, each with a tag (e.g. a sentiment sign).

    Tags only matter when merging; matching uses membership alone.
    """

    def __init__(self, entries: Mapping[str | tuple[str, ...], str] | Iterable[str], polarity: Polarity | str, name: str = ""):
        if isinstance(entries, Mapping):
            items = [(_key(k), str(v)) for k, v in entries.items()]
        else:
            items = [(_key(k), "") for k in entries]
        table: dict[tuple[str, ...], str] = {}
        for key, tag in items:
            if not 1 <= len(key) <= MAX_NGRAM:
                raise ValueError(f"lexicon entries must have 1-{MAX_NGRAM} tokens: {' '.join(key)!r}")
            if key in table and table[key] != tag:
                raise ValueError(f"conflicting tags for {' '.join(key)!r}; resolve before construction")
            table[key] = tag
        if not table:
            raise ValueError("lexicon has no entries")
        self._entries = table
        self.polarity = Polarity(polarity)
        self.name = name

    @property
    def entries(self) -> dict[tuple[str, ...], str]:
        return dict(self._entries)

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, ngram) -> bool:
        return _key(ngram) in self._entries

    def __eq__(self, other) -> bool:
        return isinstance(other, Lexicon) and self._entries == other._entries and self.polarity == other.polarity

    def __repr__(self) -> str:
        return f"Lexicon({self.name!r}, {len(self)} entries, {self.polarity.value})"

    def flipped(self) -> "Lexicon":
        other = (
            Polarity.UNIMPORTANT_IF_MATCHED
            if self.polarity is Polarity.IMPORTANT_IF_MATCHED
            else Polarity.IMPORTANT_IF_MATCHED
        )
        return Lexicon(self._entries, other, self.name)


def matched_positions(lexicon: Lexicon, tokens: Sequence[str]) -> list[int]:
    """Indicator per token: 1 if it lies inside any occurrence of a lexicon n-gram."""
    low = [t.lower() for t in tokens]
    hit = [0] * len(low)
    keys = lexicon._entries
    for size in range(MAX_NGRAM, 0, -1):
        for start in range(len(low) - size + 1):
            if tuple(low[start : start + size]) in keys:
                for j in range(start, start + size):
                    hit[j] = 1
    return hit


def match_lexicon(lexicon: Lexicon, tokens: Sequence[str]) -> HumanRationale | None:
    """Task-level rationale for one token sequence.

    Returns None when an important-if-matched lexicon finds nothing; such an
    instance trains on the task loss only.
    """
    if not tokens:
        raise ValueError("match_lexicon: empty token sequence")
    hit = matched_positions(lexicon, tokens)
    if lexicon.polarity is Polarity.IMPORTANT_IF_MATCHED:
        if not any(hit):
            return None
        return HumanRationale(tuple(hit), RationaleSource.TASK_LEVEL)
    return HumanRationale(tuple(1 - h for h in hit), RationaleSource.TASK_LEVEL)


def merge_lexicons(a: Lexicon, b: Lexicon, name: str | None = None) -> Lexicon:
    """Union of two lexicons minus n-grams the sources tag differently."""
    if a.polarity is not b.polarity:
        raise ValueError("cannot merge lexicons with different polarity conventions")
    ea, eb = a._entries, b._entries
    merged: dict[tuple[str, ...], str] = {}
    dropped = 0
    for key in sorted(set(ea) | set(eb)):
        if key in ea and key in eb and ea[key] != eb[key]:
            dropped += 1
            continue
        merged[key] = ea.get(key, eb.get(key))
    if dropped:
        log.info("merge_lexicons: discarded %d conflicting entries", dropped)
    return Lexicon(merged, a.polarity, name if name is not None else f"{a.name}+{b.name}")


def coverage(lexicon: Lexicon, dataset: Sequence[Instance] | Sequence[Sequence[str]]) -> float:
    """Fraction of instances with at least one lexicon match."""
    if not dataset:
        raise ValueError("coverage: empty dataset")
    hits = 0
    for item in dataset:
        tokens = item.tokens if isinstance(item, Instance) else item
        hits += any(matched_positions(lexicon, tokens))
    return hits / len(dataset)


def apply_lexicon(lexicon: Lexicon, dataset: Sequence[Instance]) -> list[Instance]:
    """Copies of ``dataset`` whose rationales come from the lexicon (absent when unmatched)."""
    out = []
    for inst in dataset:
        r = match_lexicon(lexicon, inst.tokens)
        out.append(
            Instance(
                inst.id,
                list(inst.tokens),
                inst.label,
                None if r is None else list(r.mask),
                list(inst.group_tags),
                inst.contrast_of,
                inst.perturbation,
            )
        )
    return out


# ---------------------------------------------------------------------------
# files: one "ngram<TAB>tag" per line; an optional "#polarity=<value>" header


def load_lexicon(path, polarity: Polarity | str | None = None, name: str | None = None) -> Lexicon:
    """Read a lexicon file; n-grams listed with conflicting tags are dropped."""
    path = Path(path)
    found_polarity = None
    table: dict[tuple[str, ...], str] = {}
    conflicted: set[tuple[str, ...]] = set()
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if body.startswith("polarity="):
                found_polarity = body.split("=", 1)[1].strip()
            continue
        ngram, _, tag = line.partition("\t")
        key = _key(ngram.strip())
        if not key:
            raise ValueError(f"{path}:{lineno}: empty n-gram")
        tag = tag.strip()
        if key in table and table[key] != tag:
            conflicted.add(key)
        table.setdefault(key, tag)
    for key in conflicted:
        del table[key]
    pol = polarity or found_polarity or Polarity.IMPORTANT_IF_MATCHED
    return Lexicon(table, pol, name if name is not None else path.stem)


def save_lexicon(lexicon: Lexicon, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"#polarity={lexicon.polarity.value}"]
    lines += [f"{' '.join(k)}\t{v}" for k, v in sorted(lexicon._entries.items())]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path
