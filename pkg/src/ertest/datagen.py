"""Synthetic sentiment-like corpora with planted rationales, and their OOD probes.

An instance is a shuffled mix of signal tokens (positive or negative words,
optionally preceded by a negator that flips them) and filler: neutral words,
number words, names and, when enabled, a class-correlated cue token. The
label is the majority effective polarity of the signal tokens, so the gold
rationale (signal tokens plus their negators) is exact by construction and the
cue is a pure shortcut.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .data import Instance
from .evaluation import Category, ContrastGroup, FunctionalSuite, Subtest
from .rationales import Lexicon, Polarity

POSITIVE = ("good", "great", "excellent", "superb", "wonderful", "brilliant", "lovely", "pleasant")
NEGATIVE = ("bad", "awful", "terrible", "poor", "dreadful", "boring", "nasty", "dull")
DISTRACTORS = (
    "the", "a", "movie", "film", "plot", "actor", "scene", "story", "was", "is",
    "and", "of", "this", "that", "it", "with", "music", "ending", "cast", "script",
    "director", "camera", "dialogue", "pace", "setting", "theme", "sequel", "studio",
)
OOD_DISTRACTORS = (
    "dish", "waiter", "menu", "table", "service", "kitchen", "price", "meal", "order", "chef",
    "bill", "dessert", "wine", "lunch", "dinner", "booth", "staff", "room", "hotel", "parking",
    "product", "package", "delivery", "seller", "battery", "screen", "cable", "device",
)
NUMBERS = ("one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten")
NAMES = ("alice", "bob", "carol", "dave", "erin", "frank", "grace", "heidi", "ivan", "judy")
INTENSIFIERS = ("very", "really", "extremely")
PUNCTUATION = ("!", ".", ",", "?")


@dataclass(frozen=True)
class TaskSpec:
    """Grammar of the planted-rationale task.

    ``positive[i]`` and ``negative[i]`` are antonyms (used by inversion).
    ``cues`` are the shortcut tokens for class 0 and class 1; with
    ``spurious_rate=p`` every instance carries one cue, the one matching its
    label with probability p. ``alt_distractors``/``alt_ratio`` mix a second
    filler vocabulary in (the OOD distractor shift).
    """

    positive: tuple[str, ...] = POSITIVE
    negative: tuple[str, ...] = NEGATIVE
    distractors: tuple[str, ...] = DISTRACTORS
    numbers: tuple[str, ...] = NUMBERS
    names: tuple[str, ...] = NAMES
    negator: str = "not"
    intensifiers: tuple[str, ...] = INTENSIFIERS
    cues: tuple[str, str] = ("honestly", "frankly")
    min_len: int = 8
    max_len: int = 14
    signal_counts: tuple[int, ...] = (1, 2, 3)
    negation_rate: float = 0.0
    number_rate: float = 0.3
    name_rate: float = 0.3
    spurious_rate: float | None = None
    alt_distractors: tuple[str, ...] = ()
    alt_ratio: float = 0.0
    noise: float = 0.0

    def __post_init__(self):
        if len(self.positive) != len(self.negative):
            raise ValueError("positive and negative vocabularies must pair up")
        signal = set(self.positive) | set(self.negative) | {self.negator}
        filler = set(self.distractors) | set(self.numbers) | set(self.names) | set(self.cues) | set(self.alt_distractors)
        if signal & filler:
            raise ValueError(f"signal and distractor vocabularies overlap: {sorted(signal & filler)}")
        if not self.signal_counts or min(self.signal_counts) < 1:
            raise ValueError("signal_counts must be positive")
        if self.min_len < 1 or self.max_len < self.min_len:
            raise ValueError("bad length range")
        if self.spurious_rate is not None and not 0 <= self.spurious_rate <= 1:
            raise ValueError("spurious_rate must lie in [0, 1]")

    @property
    def polarity(self) -> dict[str, int]:
        out = {t: 1 for t in self.positive}
        out.update({t: 0 for t in self.negative})
        return out

    @property
    def antonym(self) -> dict[str, str]:
        out = dict(zip(self.positive, self.negative))
        out.update(zip(self.negative, self.positive))
        return out


SIGNAL_FIELDS = ("positive", "negative", "negator", "signal_counts", "negation_rate")


def label_rule(tokens: Sequence[str], spec: TaskSpec) -> int | None:
    """Majority effective polarity; a negator flips the signal token right after it.

    Returns None when there is no signal or the vote ties.
    """
    pol = spec.polarity
    votes = [0, 0]
    for i, tok in enumerate(tokens):
        if tok in pol:
            p = pol[tok]
            if i > 0 and tokens[i - 1] == spec.negator:
                p = 1 - p
            votes[p] += 1
    if votes[0] == votes[1]:
        return None
    return int(votes[1] > votes[0])


def signal_mask(tokens: Sequence[str], spec: TaskSpec) -> list[int]:
    """1 on signal tokens and on negators directly preceding one."""
    pol = spec.polarity
    mask = [0] * len(tokens)
    for i, tok in enumerate(tokens):
        if tok in pol:
            mask[i] = 1
            if i > 0 and tokens[i - 1] == spec.negator:
                mask[i - 1] = 1
    return mask


def _signal_units(label: int, rng: np.random.Generator, spec: TaskSpec) -> list[list[str]]:
    m = int(rng.choice(spec.signal_counts))
    # number of label-polarity tokens: a strict majority
    lo = m // 2 + 1
    j = int(rng.integers(lo, m + 1))
    units = []
    for k in range(m):
        effective = label if k < j else 1 - label
        negated = spec.negation_rate > 0 and rng.random() < spec.negation_rate
        surface = 1 - effective if negated else effective
        vocab = spec.positive if surface == 1 else spec.negative
        tok = str(rng.choice(vocab))
        units.append([spec.negator, tok] if negated else [tok])
    return units


def _filler(rng: np.random.Generator, spec: TaskSpec) -> str:
    if spec.alt_distractors and rng.random() < spec.alt_ratio:
        return str(rng.choice(spec.alt_distractors))
    return str(rng.choice(spec.distractors))


def _make_instance(iid: str, rng: np.random.Generator, spec: TaskSpec) -> Instance:
    label = int(rng.integers(0, 2))
    units = _signal_units(label, rng, spec)
    n_signal = sum(len(u) for u in units)
    length = max(int(rng.integers(spec.min_len, spec.max_len + 1)), n_signal + 1)
    extras: list[list[str]] = []
    tags: list[str] = []
    if spec.noise > 0 and rng.random() < spec.noise:
        label = 1 - label
    if spec.spurious_rate is not None:
        cue_class = label if rng.random() < spec.spurious_rate else 1 - label
        extras.append([spec.cues[cue_class]])
        tags.append(spec.cues[cue_class])
    if spec.numbers and rng.random() < spec.number_rate:
        extras.append([str(rng.choice(spec.numbers))])
    if spec.names and rng.random() < spec.name_rate:
        extras.append([str(rng.choice(spec.names))])
    n_fill = max(0, length - n_signal - sum(len(u) for u in extras))
    pieces = units + extras + [[_filler(rng, spec)] for _ in range(n_fill)]
    order = rng.permutation(len(pieces))
    tokens = [tok for i in order for tok in pieces[i]]
    return Instance(iid, tokens, label, signal_mask(tokens, spec), tags)


def generate_id_dataset(spec: TaskSpec, size: int, seed: int, prefix: str = "id") -> list[Instance]:
    """``size`` instances with exact rationales; bit-reproducible per seed."""
    if size < 1:
        raise ValueError("size must be >= 1")
    rng = np.random.default_rng(seed)
    width = len(str(size - 1))
    return [_make_instance(f"{prefix}-{i:0{width}d}", rng, spec) for i in range(size)]


@dataclass(frozen=True)
class Shift:
    """Non-signal distribution shift.

    ``new_distractors`` replaces the neutral filler for a ``distractor_ratio``
    fraction of filler slots; ``length_factor`` scales the length range;
    ``spurious_rate`` re-sets the cue/label alignment (None keeps it, use
    ``drop_cues`` to remove cues entirely).
    """

    new_distractors: tuple[str, ...] = ()
    distractor_ratio: float = 1.0
    length_factor: float = 1.0
    spurious_rate: float | None = None
    drop_cues: bool = False
    overrides: dict = field(default_factory=dict)


def shifted_spec(spec: TaskSpec, shift: Shift) -> TaskSpec:
    touched = set(shift.overrides) & set(SIGNAL_FIELDS)
    if touched:
        raise ValueError(f"a distribution shift may not touch the signal vocabulary: {sorted(touched)}")
    changes = dict(shift.overrides)
    if shift.new_distractors:
        changes["alt_distractors"] = tuple(shift.new_distractors)
        changes["alt_ratio"] = shift.distractor_ratio
    if shift.length_factor != 1.0:
        changes["min_len"] = max(1, round(spec.min_len * shift.length_factor))
        changes["max_len"] = max(changes["min_len"], round(spec.max_len * shift.length_factor))
    if shift.drop_cues:
        changes["spurious_rate"] = None
    elif shift.spurious_rate is not None:
        changes["spurious_rate"] = shift.spurious_rate
    return dataclasses.replace(spec, **changes)


def generate_ood_variant(spec: TaskSpec, shift: Shift, size: int, seed: int, prefix: str = "ood") -> list[Instance]:
    return generate_id_dataset(shifted_spec(spec, shift), size, seed, prefix)


# ---------------------------------------------------------------------------
# contrast sets


def invert(inst: Instance, spec: TaskSpec, new_id: str | None = None) -> Instance:
    """Swap every signal token for its antonym and flip the label."""
    ant = spec.antonym
    tokens = [ant.get(t, t) for t in inst.tokens]
    return Instance(
        new_id or inst.id,
        tokens,
        1 - inst.label,
        signal_mask(tokens, spec),
        list(inst.group_tags),
        inst.id,
        "inversion",
    )


def _replace_from(tokens, pool, rng) -> list[str] | None:
    pool_set = set(pool)
    hits = [i for i, t in enumerate(tokens) if t in pool_set]
    if not hits or len(pool) < 2:
        return None
    out = list(tokens)
    for i in hits:
        choices = [p for p in pool if p != tokens[i]]
        out[i] = str(rng.choice(choices))
    return out


def generate_contrast_set(dataset: Sequence[Instance], spec: TaskSpec, seed: int = 0) -> tuple[list[ContrastGroup], list[Instance]]:
    """Contrast groups plus the contrast instances themselves.

    Inversion flips the label; number and entity replacement keep it. A
    perturbation that does not apply to an instance is skipped, and an
    instance with no applicable perturbation is omitted.
    """
    rng = np.random.default_rng(seed)
    groups: list[ContrastGroup] = []
    made: list[Instance] = []
    for inst in dataset:
        entries = []
        if label_rule(inst.tokens, spec) is not None:
            c = invert(inst, spec, f"{inst.id}~inv")
            made.append(c)
            entries.append((c.id, c.label, "inversion"))
        for kind, pool in (("number_mod", spec.numbers), ("entity_replace", spec.names)):
            toks = _replace_from(inst.tokens, pool, rng)
            if toks is not None:
                c = Instance(f"{inst.id}~{kind}", toks, inst.label, list(inst.rationale or signal_mask(toks, spec)),
                             list(inst.group_tags), inst.id, kind)
                made.append(c)
                entries.append((c.id, c.label, kind))
        if entries:
            groups.append(ContrastGroup(inst.id, inst.label, entries))
    return groups, made


# ---------------------------------------------------------------------------
# functional suites


def _typo(tok: str, rng: np.random.Generator) -> str:
    if len(tok) < 2:
        return tok + tok
    i = int(rng.integers(0, len(tok) - 1))
    chars = list(tok)
    chars[i], chars[i + 1] = chars[i + 1], chars[i]
    out = "".join(chars)
    return out if out != tok else tok + tok[-1]


def _derived(base: Instance, tokens: list[str], spec: TaskSpec, iid: str, label: int | None = None) -> Instance:
    lab = label_rule(tokens, spec) if label is None else label
    if lab is None:
        raise AssertionError(f"template produced an unlabeled instance: {tokens}")
    return Instance(iid, tokens, lab, signal_mask(tokens, spec), [], base.id, None)


def _insert(tokens: list[str], piece: list[str], rng: np.random.Generator, spec: TaskSpec) -> list[str]:
    """Insert ``piece`` at a random boundary that does not split a negator from its target."""
    spots = [i for i in range(len(tokens) + 1) if i == 0 or tokens[i - 1] != spec.negator]
    at = int(rng.choice(spots))
    return tokens[:at] + piece + tokens[at:]


def _bases(spec: TaskSpec, rng: np.random.Generator, count: int, want=None, tries: int = 100000) -> list[Instance]:
    out = []
    for k in range(tries):
        inst = _make_instance(f"base-{k}", rng, spec)
        if want is None or want(inst):
            out.append(inst)
            if len(out) == count:
                return out
    raise RuntimeError("could not generate enough template bases; vocabulary too small")


def generate_functional_suites(spec: TaskSpec, size: int = 100, seed: int = 0) -> list[FunctionalSuite]:
    """Four categories of templated probes, each with at least two subtests of ``size`` instances."""
    rng = np.random.default_rng(seed)
    base_spec = dataclasses.replace(spec, spurious_rate=None, noise=0.0)
    pol = spec.polarity

    def signal_positions(tokens):
        return [i for i, t in enumerate(tokens) if t in pol]

    def suite_vocab():
        tests = []
        # extra words agreeing with the label keep it
        items = []
        for k, b in enumerate(_bases(base_spec, rng, size)):
            toks = list(b.tokens)
            for _ in range(2):
                vocab = spec.positive if b.label == 1 else spec.negative
                toks = _insert(toks, [str(rng.choice(vocab))], rng, spec)
            items.append(_derived(b, toks, spec, f"vocab.add_sentiment_words-{k}"))
        tests.append(Subtest("add_sentiment_words", items, invariance=False))
        items = []
        for k, b in enumerate(_bases(base_spec, rng, size)):
            toks = []
            for i, t in enumerate(b.tokens):
                if t in pol and not (i > 0 and b.tokens[i - 1] == spec.negator):
                    toks.append(str(rng.choice(spec.intensifiers)))
                toks.append(t)
            items.append(_derived(b, toks, spec, f"vocab.add_intensifiers-{k}"))
        tests.append(Subtest("add_intensifiers", items, invariance=False))
        # enough opposing words to overturn the majority
        items = []
        for k, b in enumerate(_bases(base_spec, rng, size)):
            toks = list(b.tokens)
            votes = sum(1 if pol[t] == b.label else -1 for t in toks if t in pol)
            vocab = spec.negative if b.label == 1 else spec.positive
            for _ in range(votes + 1):
                toks = _insert(toks, [str(rng.choice(vocab))], rng, spec)
            items.append(_derived(b, toks, spec, f"vocab.add_opposing_words-{k}"))
        tests.append(Subtest("add_opposing_words", items, invariance=False))
        return FunctionalSuite(Category.VOCABULARY, tests)

    def suite_robustness():
        tests = []
        filler = set(spec.distractors)
        for name, n_typos in (("add_one_typo", 1), ("add_two_typos", 2)):
            items = []
            for k, b in enumerate(_bases(base_spec, rng, size, lambda x: sum(t in filler for t in x.tokens) >= 2)):
                toks = list(b.tokens)
                spots = [i for i, t in enumerate(toks) if t in filler]
                for i in rng.choice(spots, size=n_typos, replace=False):
                    toks[int(i)] = _typo(toks[int(i)], rng)
                items.append(_derived(b, toks, spec, f"robust.{name}-{k}", label=b.label))
            tests.append(Subtest(name, items, invariance=True))
        items = []
        for k, b in enumerate(_bases(base_spec, rng, size)):
            toks = list(b.tokens)
            for _ in range(int(rng.integers(1, 3))):
                toks = _insert(toks, [str(rng.choice(PUNCTUATION))], rng, spec)
            items.append(_derived(b, toks, spec, f"robust.add_punctuation-{k}", label=b.label))
        tests.append(Subtest("add_punctuation", items, invariance=True))
        return FunctionalSuite(Category.ROBUSTNESS, tests)

    def suite_logic():
        tests = []
        for name, src in (("positive_to_negative", 1), ("negative_to_positive", 0)):
            items = []
            single = lambda x, src=src: x.label == src and len(signal_positions(x.tokens)) == 1
            for k, b in enumerate(_bases(base_spec, rng, size, single)):
                (i,) = signal_positions(b.tokens)
                toks = b.tokens[:i] + [spec.negator] + b.tokens[i:]
                items.append(_derived(b, toks, spec, f"logic.{name}-{k}"))
            tests.append(Subtest(name, items, invariance=False))
        items = []
        single = lambda x: x.label == 1 and len(signal_positions(x.tokens)) == 1
        for k, b in enumerate(_bases(base_spec, rng, size, single)):
            (i,) = signal_positions(b.tokens)
            toks = b.tokens[:i] + [spec.negator] + b.tokens[i:]
            for _ in range(3):
                toks = _insert(toks, [str(rng.choice(spec.distractors))], rng, spec)
            items.append(_derived(b, toks, spec, f"logic.positive_to_negative_distractors-{k}"))
        tests.append(Subtest("positive_to_negative_distractors", items, invariance=False))
        return FunctionalSuite(Category.LOGIC, tests)

    def suite_entity():
        tests = []
        for name, pool in (("replace_names", spec.names), ("replace_numbers", spec.numbers)):
            items = []
            pool_set = set(pool)
            forced = dataclasses.replace(base_spec, name_rate=1.0, number_rate=1.0)
            for k, b in enumerate(_bases(forced, rng, size, lambda x: any(t in pool_set for t in x.tokens))):
                toks = _replace_from(b.tokens, pool, rng)
                items.append(_derived(b, toks, spec, f"entity.{name}-{k}", label=b.label))
            tests.append(Subtest(name, items, invariance=True))
        return FunctionalSuite(Category.ENTITY, tests)

    return [suite_vocab(), suite_robustness(), suite_logic(), suite_entity()]


# ---------------------------------------------------------------------------
# lexicons and token-classification data


def task_lexicon(spec: TaskSpec, fraction: float = 1.0, seed: int = 0) -> Lexicon:
    """Sentiment-word lexicon (important if matched) covering a ``fraction`` of the signal vocabulary."""
    rng = np.random.default_rng(seed)
    words = [(t, "+") for t in spec.positive] + [(t, "-") for t in spec.negative]
    keep = max(1, round(fraction * len(words)))
    idx = sorted(rng.choice(len(words), size=keep, replace=False))
    return Lexicon({words[i][0]: words[i][1] for i in idx}, Polarity.IMPORTANT_IF_MATCHED, "task-signal")


def cue_lexicon(spec: TaskSpec) -> Lexicon:
    """Identifier-style lexicon: the cue tokens must be ignored (unimportant if matched)."""
    return Lexicon({c: "cue" for c in spec.cues}, Polarity.UNIMPORTANT_IF_MATCHED, "cues")


TOKEN_CLASSES = ("O", "NAME", "NUMBER")


def generate_token_dataset(spec: TaskSpec, size: int, seed: int, prefix: str = "tok") -> list[Instance]:
    """Token-classification variant: names are class 1, number words class 2, the rest 0.

    The rationale marks the entity tokens themselves.
    """
    rng = np.random.default_rng(seed)
    forced = dataclasses.replace(spec, name_rate=0.8, number_rate=0.8, spurious_rate=None)
    names, numbers = set(spec.names), set(spec.numbers)
    out = []
    width = len(str(size - 1))
    for i in range(size):
        base = _make_instance("x", rng, forced)
        labels = [1 if t in names else 2 if t in numbers else 0 for t in base.tokens]
        out.append(Instance(f"{prefix}-{i:0{width}d}", base.tokens, labels, [int(v > 0) for v in labels]))
    return out
