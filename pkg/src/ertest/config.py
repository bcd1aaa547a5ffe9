"""Configuration records and their stable hashes."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, fields
from enum import Enum
from typing import Any

from .criteria import Criterion
from .rationales import RationaleSource

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Invalid configuration values (CLI exit code 2)."""


class Extractor(str, Enum):
    IXG = "ixg"
    ATTENTION = "attention"
    LEARNED = "learned"


class Strategy(str, Enum):
    RANDOM = "random"
    LC = "lc"
    HC = "hc"
    LIS = "lis"
    HIS = "his"


@dataclass(frozen=True)
class ERConfig:
    """What the regularizer compares and how strongly."""

    extractor: Extractor = Extractor.IXG
    criterion: Criterion = Criterion.MAE
    lambda_er: float = 1.0
    gamma_er: float = 100.0
    huber_delta: float = 1.0
    two_term_bce: bool = False

    def __post_init__(self):
        object.__setattr__(self, "extractor", _enum(Extractor, self.extractor, "extractor"))
        object.__setattr__(self, "criterion", _enum(Criterion, self.criterion, "criterion"))
        if self.lambda_er < 0:
            raise ConfigError("lambda_er must be >= 0")
        if self.gamma_er <= 0:
            raise ConfigError("gamma_er must be > 0")
        if self.huber_delta <= 0:
            raise ConfigError("huber_delta must be > 0")

    @property
    def enabled(self) -> bool:
        return self.lambda_er > 0


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-2
    optimizer: str = "sgd"
    batch_size: int = 32
    max_epochs: int = 25
    patience: int = 10
    clip_norm: float | None = None
    embed_dim: int = 16
    max_len: int = 64

    def __post_init__(self):
        if self.optimizer not in ("sgd", "adam"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")
        if self.lr < 0:
            raise ConfigError("lr must be >= 0")
        if self.batch_size < 1 or self.max_epochs < 1 or self.patience < 0:
            raise ConfigError("batch_size and max_epochs must be positive, patience nonnegative")
        if self.max_len < 1 or self.max_len > 4096:
            raise ConfigError("max_len must be in [1, 4096]")


def to_jsonable(obj: Any) -> Any:
    if isinstance(obj, Enum):
        return obj.value
    if hasattr(obj, "__dataclass_fields__"):
        return {f.name: to_jsonable(getattr(obj, f.name)) for f in fields(obj)}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    return obj


def stable_hash(obj: Any, length: int = 16) -> str:
    blob = json.dumps(to_jsonable(obj), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:length]


DEFAULT_OOD = (
    {
        "name": "ood_shift",
        "new_distractors": "default",
        "distractor_ratio": 0.5,
        "spurious_rate": 0.0,
    },
)


@dataclass(frozen=True)
class DataConfig:
    """Where the splits come from: the synthetic generator (default) or JSONL paths.

    ``task`` overrides generator grammar fields; ``ood`` lists named shifts
    (``new_distractors`` may be ``"default"`` for the built-in unseen filler
    vocabulary). ``pool_size`` extra labeled instances back the annotation-count
    study. ``paths`` holds ``train``/``dev``/``test`` files, an ``ood`` name->file
    map and an optional ``lexicon`` file.
    """

    task: dict = field(default_factory=lambda: {"spurious_rate": 1.0})
    train_size: int = 1000
    dev_size: int = 300
    test_size: int = 500
    ood_size: int = 500
    pool_size: int = 0
    ood: tuple = DEFAULT_OOD
    suite_size: int = 100
    contrast: bool = True
    functional: bool = True
    data_seed: int = 0
    paths: dict | None = None

    def __post_init__(self):
        object.__setattr__(self, "ood", tuple(dict(o) for o in self.ood))
        if self.paths is None:
            for name in ("train_size", "dev_size", "test_size", "ood_size", "suite_size"):
                if getattr(self, name) < 1:
                    raise ConfigError(f"{name} must be >= 1")
        elif not {"train", "dev", "test"} <= set(self.paths):
            raise ConfigError("paths needs train, dev and test files")
        if self.pool_size < 0:
            raise ConfigError("pool_size must be >= 0")
        names = [o.get("name") for o in self.ood]
        if any(not n for n in names) or len(set(names)) != len(names):
            raise ConfigError("every OOD shift needs a unique name")


@dataclass(frozen=True)
class RunConfig:
    """One trained model family (all seeds) plus the data it is trained and tested on.

    ``budget_k`` is the percentage of training instances given rationales;
    ``budget_count`` overrides it with an absolute count. ``extra_train`` adds
    that many pool instances to the training set, annotated when
    ``extra_annotated`` (in which case only they carry rationales).
    """

    name: str = ""
    mode: str = "sequence"
    er: ERConfig = field(default_factory=ERConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    budget_k: float = 100.0
    budget_count: int | None = None
    strategy: Strategy = Strategy.RANDOM
    k_prime: float = 10.0
    rationale_source: RationaleSource = RationaleSource.INSTANCE_LEVEL
    lexicon_fraction: float = 1.0
    extra_train: int = 0
    extra_annotated: bool = False
    seeds: tuple[int, ...] = (0, 1, 2)
    data: DataConfig = field(default_factory=DataConfig)
    out_dir: str = "runs"
    workers: int = 1
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        if isinstance(self.er, dict):
            object.__setattr__(self, "er", ERConfig(**self.er))
        if isinstance(self.train, dict):
            object.__setattr__(self, "train", TrainConfig(**self.train))
        if isinstance(self.data, dict):
            object.__setattr__(self, "data", DataConfig(**self.data))
        object.__setattr__(self, "strategy", _enum(Strategy, self.strategy, "strategy"))
        object.__setattr__(self, "rationale_source", _enum(RationaleSource, self.rationale_source, "rationale_source"))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if self.mode not in ("sequence", "token"):
            raise ConfigError(f"mode must be 'sequence' or 'token', got {self.mode!r}")
        if not self.seeds:
            raise ConfigError("seeds must be nonempty")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("seeds must be distinct")
        if not 0 < self.budget_k <= 100:
            raise ConfigError("budget_k must lie in (0, 100]")
        if self.budget_count is not None and self.budget_count < 1:
            raise ConfigError("budget_count must be >= 1")
        if not 0 < self.k_prime < 100:
            raise ConfigError("k_prime must lie in (0, 100)")
        if not 0 < self.lexicon_fraction <= 1:
            raise ConfigError("lexicon_fraction must lie in (0, 1]")
        if self.extra_train < 0:
            raise ConfigError("extra_train must be >= 0")
        if self.extra_train > self.data.pool_size and self.data.paths is None:
            raise ConfigError(f"extra_train={self.extra_train} exceeds the pool of {self.data.pool_size}")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")

    @property
    def label(self) -> str:
        if self.name:
            return self.name
        if not self.er.enabled:
            return "No-ER" if self.extra_train == 0 else f"No-ER+{self.extra_train}"
        parts = [f"{_EXTRACTOR_NAMES[self.er.extractor]}+{_CRITERION_NAMES[self.er.criterion]}"]
        if self.rationale_source is RationaleSource.TASK_LEVEL:
            parts.append("task")
        if self.budget_count is not None:
            parts.append(f"n={self.budget_count}")
        elif self.budget_k < 100:
            parts.append(f"k={self.budget_k:g}%")
        if self.budget_count is not None or self.budget_k < 100:
            parts.append(self.strategy.value)
        if self.extra_train:
            parts.append(f"+{self.extra_train}")
        return " ".join(parts)

    def semantic(self) -> dict:
        """Fields that change results; output location and worker count do not."""
        doc = to_jsonable(self)
        doc.pop("out_dir")
        doc.pop("workers")
        return doc

    @property
    def hash(self) -> str:
        return stable_hash(self.semantic())

    def to_json(self) -> dict:
        return to_jsonable(self)

    @classmethod
    def from_json(cls, doc: dict) -> "RunConfig":
        doc = dict(doc)
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        try:
            return cls(**doc)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from None


_EXTRACTOR_NAMES = {Extractor.IXG: "IxG", Extractor.ATTENTION: "Attention", Extractor.LEARNED: "Learned"}
_CRITERION_NAMES = {
    Criterion.MSE: "MSE",
    Criterion.MAE: "MAE",
    Criterion.HUBER: "Huber",
    Criterion.BCE: "BCE",
    Criterion.KLDIV: "KLDiv",
    Criterion.ORDER: "Order",
}


def _enum(kind, value, what):
    try:
        return kind(value)
    except ValueError:
        raise ConfigError(f"invalid {what}: {value!r}") from None


def load_config(path) -> RunConfig:
    from pathlib import Path

    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return RunConfig.from_json(doc)
