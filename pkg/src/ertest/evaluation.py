"""Task metrics and the three out-of-distribution test families.

Accuracy and macro F1 for unseen-dataset tests, contrast consistency for
contrast sets, (normalized) failure rates for functional suites, FPRD for
group fairness, plus the prediction-table CSV.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .data import Instance
from .stats import SignificanceResult, welch_t_test

__all__ = [
    "Category",
    "ContrastGroup",
    "ContrastResult",
    "FunctionalSuite",
    "Subtest",
    "SignificanceResult",
    "accuracy",
    "contrast_consistency",
    "failure_rate",
    "fprd",
    "fprd_detail",
    "macro_f1",
    "normalize_failure_rates",
    "read_predictions",
    "welch_t_test",
    "write_predictions",
]

PERTURBATION_KINDS = ("inversion", "number_mod", "entity_replace")


def _flatten(values) -> list[int]:
    out: list[int] = []
    for v in values:
        if isinstance(v, (list, tuple)):
            out.extend(int(x) for x in v)
        else:
            out.append(int(v))
    return out


def _paired(predictions, gold) -> tuple[list[int], list[int]]:
    if len(predictions) != len(gold):
        raise ValueError(f"length mismatch: {len(predictions)} predictions vs {len(gold)} gold labels")
    p, g = _flatten(predictions), _flatten(gold)
    if len(p) != len(g):
        raise ValueError("token-level length mismatch between predictions and gold")
    if not g:
        raise ValueError("no instances")
    return p, g


def accuracy(predictions, gold) -> float:
    """Fraction correct; token-level lists are flattened."""
    p, g = _paired(predictions, gold)
    return sum(a == b for a, b in zip(p, g)) / len(g)


def macro_f1(predictions, gold) -> float:
    """Unweighted mean per-class F1 over classes seen in gold or predictions."""
    p, g = _paired(predictions, gold)
    scores = []
    for c in sorted(set(p) | set(g)):
        tp = sum(1 for a, b in zip(p, g) if a == c and b == c)
        fp = sum(1 for a, b in zip(p, g) if a == c and b != c)
        fn = sum(1 for a, b in zip(p, g) if a != c and b == c)
        scores.append(2 * tp / (2 * tp + fp + fn))
    return sum(scores) / len(scores)


# ---------------------------------------------------------------------------
# contrast sets


@dataclass
class ContrastGroup:
    original_id: str
    original_label: int
    contrasts: list[tuple[str, int, str]]

    def __post_init__(self):
        if not self.contrasts:
            raise ValueError(f"contrast group {self.original_id} has no contrasts")
        for _, _, kind in self.contrasts:
            if kind not in PERTURBATION_KINDS:
                raise ValueError(f"unknown perturbation kind {kind!r}")


@dataclass(frozen=True)
class ContrastResult:
    original_acc: float
    contrast_acc: float
    consistency: float


def contrast_consistency(groups: Sequence[ContrastGroup], predictions: Mapping[str, int]) -> ContrastResult:
    if not groups:
        raise ValueError("no contrast groups")

    def pred(iid: str) -> int:
        try:
            return predictions[iid]
        except KeyError:
            raise KeyError(f"missing prediction for instance {iid!r}") from None

    orig_ok = contrast_ok = n_contrast = consistent = 0
    for grp in groups:
        o = pred(grp.original_id) == grp.original_label
        cs = [pred(cid) == lab for cid, lab, _ in grp.contrasts]
        orig_ok += o
        contrast_ok += sum(cs)
        n_contrast += len(cs)
        consistent += o and all(cs)
    n = len(groups)
    return ContrastResult(orig_ok / n, contrast_ok / n_contrast, consistent / n)


# ---------------------------------------------------------------------------
# functional tests


class Category(str, Enum):
    VOCABULARY = "vocabulary"
    ROBUSTNESS = "robustness"
    LOGIC = "logic"
    ENTITY = "entity"


@dataclass
class Subtest:
    """Templated probe; ``invariance`` marks tests whose expected label equals the unperturbed one."""

    name: str
    instances: list[Instance]
    invariance: bool

    def __post_init__(self):
        if not self.instances:
            raise ValueError(f"subtest {self.name} is empty")

    @property
    def expected(self) -> list[int]:
        return [x.label for x in self.instances]


@dataclass
class FunctionalSuite:
    category: Category
    subtests: list[Subtest] = field(default_factory=list)


def failure_rate(subtest: Subtest, predictions: Sequence[int] | Mapping[str, int]) -> float:
    """Fraction of the subtest's instances predicted differently from the expected label."""
    if isinstance(predictions, Mapping):
        preds = [predictions[x.id] for x in subtest.instances]
    else:
        preds = list(predictions)
    return 1.0 - accuracy(preds, subtest.expected)


def normalize_failure_rates(rates: Sequence[float]) -> list[float]:
    """Min-max scale one subtest's failure rates across compared models; all-equal maps to zeros."""
    if len(rates) < 2:
        raise ValueError("normalization needs at least two models")
    lo, hi = min(rates), max(rates)
    if hi == lo:
        return [0.0] * len(rates)
    return [(r - lo) / (hi - lo) for r in rates]


# ---------------------------------------------------------------------------
# fairness


@dataclass(frozen=True)
class FPRDDetail:
    value: float
    overall_fpr: float
    group_fpr: dict[str, float]
    excluded: list[str]


def _fpr(pairs: Iterable[tuple[int, int]], positive: int) -> float | None:
    fp = tn = 0
    for p, g in pairs:
        if g != positive:
            if p == positive:
                fp += 1
            else:
                tn += 1
    return None if fp + tn == 0 else fp / (fp + tn)


def fprd_detail(
    predictions: Sequence[int],
    gold: Sequence[int],
    group_membership: Sequence[Iterable[str]] | Mapping[str, Sequence[int]],
    *,
    positive: int = 1,
) -> FPRDDetail:
    """Sum over groups of |FPR_group - FPR_overall|.

    ``group_membership`` is either per-instance tag collections or a map from
    group name to instance indices. Groups without gold negatives are skipped
    and listed in ``excluded``.
    """
    p, g = _paired(predictions, gold)
    overall = _fpr(zip(p, g), positive)
    if overall is None:
        raise ValueError("fprd: no gold negatives in the data")
    if isinstance(group_membership, Mapping):
        members = {str(k): list(v) for k, v in group_membership.items()}
    else:
        if len(group_membership) != len(p):
            raise ValueError("fprd: one group tag collection per instance required")
        members = {}
        for i, tags in enumerate(group_membership):
            for tag in tags:
                members.setdefault(str(tag), []).append(i)
    per_group: dict[str, float] = {}
    excluded: list[str] = []
    for name in sorted(members):
        rate = _fpr(((p[i], g[i]) for i in members[name]), positive)
        if rate is None:
            excluded.append(name)
        else:
            per_group[name] = rate
    value = sum(abs(r - overall) for r in per_group.values())
    return FPRDDetail(value, overall, per_group, excluded)


def fprd(predictions, gold, group_membership, *, positive: int = 1) -> float:
    return fprd_detail(predictions, gold, group_membership, positive=positive).value


# ---------------------------------------------------------------------------
# prediction tables

PREDICTION_FIELDS = ("instance_id", "gold", "pred", "split", "group_tags")


def _cell(v) -> str:
    return " ".join(str(x) for x in v) if isinstance(v, (list, tuple)) else str(v)


def _uncell(s: str):
    parts = s.split()
    return int(parts[0]) if len(parts) == 1 else [int(x) for x in parts]


def write_predictions(rows: Iterable[Mapping], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(PREDICTION_FIELDS)
        for r in rows:
            writer.writerow(
                [r["instance_id"], _cell(r["gold"]), _cell(r["pred"]), r.get("split", ""), "|".join(r.get("group_tags", []))]
            )
    return path


def read_predictions(path) -> list[dict]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        return [
            {
                "instance_id": r["instance_id"],
                "gold": _uncell(r["gold"]),
                "pred": _uncell(r["pred"]),
                "split": r["split"],
                "group_tags": [t for t in r["group_tags"].split("|") if t],
            }
            for r in reader
        ]
