import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ertest import datagen
from ertest.datagen import (
    OOD_DISTRACTORS,
    Shift,
    TaskSpec,
    cue_lexicon,
    generate_contrast_set,
    generate_functional_suites,
    generate_id_dataset,
    generate_ood_variant,
    generate_token_dataset,
    invert,
    label_rule,
    signal_mask,
    task_lexicon,
)
from ertest.evaluation import Category
from ertest.rationales import match_lexicon

SPEC = TaskSpec()


def bayes(tokens, spec=SPEC):
    return label_rule(tokens, spec)


def test_minimal_instance():
    spec = TaskSpec(positive=("good",), negative=("bad",), distractors=("movie",), numbers=(), names=(),
                    min_len=2, max_len=2, signal_counts=(1,), number_rate=0, name_rate=0)
    for x in generate_id_dataset(spec, 20, seed=0):
        assert sorted(x.tokens) in (["good", "movie"], ["bad", "movie"])
        assert x.label == (1 if "good" in x.tokens else 0)
        assert x.rationale == [int(t != "movie") for t in x.tokens]


def test_labels_follow_rule_and_rationale_marks_signal():
    data = generate_id_dataset(SPEC, 500, seed=3)
    for x in data:
        assert bayes(x.tokens) == x.label
        assert x.rationale == signal_mask(x.tokens, SPEC)
        assert sum(x.rationale) >= 1


def test_negation_grammar():
    spec = TaskSpec(negation_rate=0.5)
    data = generate_id_dataset(spec, 300, seed=1)
    assert any("not" in x.tokens for x in data)
    for x in data:
        assert label_rule(x.tokens, spec) == x.label
    assert label_rule(["not", "good", "movie"], spec) == 0
    assert label_rule(["good", "bad"], spec) is None
    assert signal_mask(["not", "good", "x"], spec) == [1, 1, 0]


def test_flipping_signal_polarity_flips_every_label():
    for x in generate_id_dataset(SPEC, 300, seed=5):
        flipped = [SPEC.antonym.get(t, t) for t in x.tokens]
        assert bayes(flipped) == 1 - x.label


def test_class_balance():
    data = generate_id_dataset(SPEC, 2000, seed=0)
    share = np.mean([x.label for x in data])
    assert abs(share - 0.5) <= 0.05


def test_bit_reproducible():
    a = generate_id_dataset(TaskSpec(spurious_rate=0.9), 50, seed=11)
    b = generate_id_dataset(TaskSpec(spurious_rate=0.9), 50, seed=11)
    assert [x.to_json() for x in a] == [x.to_json() for x in b]
    c = generate_id_dataset(TaskSpec(spurious_rate=0.9), 50, seed=12)
    assert [x.tokens for x in a] != [x.tokens for x in c]


def test_spurious_cue_rate():
    data = generate_id_dataset(TaskSpec(spurious_rate=0.8), 2000, seed=0)
    aligned = np.mean([x.group_tags == [SPEC.cues[x.label]] for x in data])
    assert abs(aligned - 0.8) <= 0.03
    full = generate_id_dataset(TaskSpec(spurious_rate=1.0), 200, seed=0)
    assert all(SPEC.cues[x.label] in x.tokens for x in full)
    # the cue is not part of the rationale
    assert all(x.rationale[x.tokens.index(SPEC.cues[x.label])] == 0 for x in full)


def test_masking_rationale_vs_distractors():
    for x in generate_id_dataset(SPEC, 200, seed=2):
        no_signal = [t for t, r in zip(x.tokens, x.rationale) if r == 0]
        assert bayes(no_signal) is None
        for i, r in enumerate(x.rationale):
            if r == 0:
                assert bayes(x.tokens[:i] + x.tokens[i + 1 :]) == x.label


def test_spec_rejects_overlap_and_bad_values():
    with pytest.raises(ValueError):
        TaskSpec(distractors=("good", "table"))
    with pytest.raises(ValueError):
        TaskSpec(spurious_rate=1.5)
    with pytest.raises(ValueError):
        generate_id_dataset(SPEC, 0, seed=0)


def test_ood_new_distractors_disjoint():
    id_data = generate_id_dataset(SPEC, 300, seed=0)
    ood = generate_ood_variant(SPEC, Shift(new_distractors=OOD_DISTRACTORS), 300, seed=1)
    id_fill = {t for x in id_data for t, r in zip(x.tokens, x.rationale) if r == 0 and t in SPEC.distractors}
    ood_fill = {t for x in ood for t in x.tokens if t in set(OOD_DISTRACTORS) | set(SPEC.distractors)}
    assert id_fill and ood_fill and not (id_fill & ood_fill)
    for x in ood:
        assert bayes(x.tokens) == x.label and x.rationale == signal_mask(x.tokens, SPEC)


def test_ood_longer_sequences():
    id_data = generate_id_dataset(SPEC, 500, seed=0)
    ood = generate_ood_variant(SPEC, Shift(length_factor=4.0), 500, seed=1)
    ratio = np.mean([len(x.tokens) for x in ood]) / np.mean([len(x.tokens) for x in id_data])
    assert abs(ratio - 4.0) <= 0.2


def test_ood_cue_reversal_and_signal_guard():
    ood = generate_ood_variant(TaskSpec(spurious_rate=1.0), Shift(spurious_rate=0.0), 100, seed=0)
    assert all(x.group_tags == [SPEC.cues[1 - x.label]] for x in ood)
    with pytest.raises(ValueError):
        generate_ood_variant(SPEC, Shift(overrides={"positive": ("x",)}), 10, seed=0)


def test_contrast_examples():
    inst = datagen.Instance("a", ["great", "movie"], 1, [1, 0])
    c = invert(inst, SPEC)
    assert c.tokens == [SPEC.antonym["great"], "movie"] and c.label == 0
    assert c.contrast_of == "a" and c.perturbation == "inversion"
    twice = invert(c, SPEC)
    assert twice.tokens == inst.tokens and twice.label == inst.label


def test_contrast_set_audit():
    data = generate_id_dataset(SPEC, 300, seed=4)
    groups, made = generate_contrast_set(data, SPEC, seed=0)
    by_id = {x.id: x for x in made}
    originals = {x.id: x for x in data}
    assert len(groups) == len(data)  # inversion always applies here
    for g in groups:
        assert 1 <= len(g.contrasts) <= 3
        orig = originals[g.original_id]
        for cid, lab, kind in g.contrasts:
            c = by_id[cid]
            assert bayes(c.tokens) == lab == c.label
            if kind == "inversion":
                assert lab == 1 - orig.label
            else:
                assert lab == orig.label
                changed = [i for i, (a, b) in enumerate(zip(orig.tokens, c.tokens)) if a != b]
                assert changed and all(orig.rationale[i] == 0 for i in changed)
                pool = SPEC.numbers if kind == "number_mod" else SPEC.names
                assert all(c.tokens[i] in pool for i in changed)
    assert generate_contrast_set(data, SPEC, seed=0)[1][5].to_json() == made[5].to_json()


def test_functional_suites_audit():
    suites = generate_functional_suites(SPEC, size=100, seed=0)
    assert {s.category for s in suites} == set(Category)
    for s in suites:
        assert len(s.subtests) >= 2
        for sub in s.subtests:
            assert len(sub.instances) >= 100
            assert sub.invariance == (s.category in (Category.ROBUSTNESS, Category.ENTITY))
            for x in sub.instances:
                if not sub.invariance:
                    assert bayes(x.tokens) == x.label
    logic = next(s for s in suites if s.category is Category.LOGIC)
    p2n = logic.subtests[0]
    assert p2n.name == "positive_to_negative" and all(x.label == 0 and "not" in x.tokens for x in p2n.instances)
    vocab = next(s for s in suites if s.category is Category.VOCABULARY)
    assert {t.name for t in vocab.subtests} >= {"add_sentiment_words", "add_intensifiers"}


def test_typo_swaps_adjacent_characters():
    rng = np.random.default_rng(0)
    for tok in ("table", "window", "ab"):
        out = datagen._typo(tok, rng)
        assert sorted(out) == sorted(tok) and out != tok
        diff = [i for i, (a, b) in enumerate(zip(tok, out)) if a != b]
        assert len(diff) == 2 and diff[1] == diff[0] + 1


def test_lexicons():
    lex = task_lexicon(SPEC)
    assert len(lex) == 16
    x = generate_id_dataset(SPEC, 1, seed=0)[0]
    assert list(match_lexicon(lex, x.tokens).mask) == [int(t in SPEC.polarity) for t in x.tokens]
    assert len(task_lexicon(SPEC, fraction=0.5, seed=1)) == 8
    cues = cue_lexicon(SPEC)
    assert list(match_lexicon(cues, ["honestly", "good"]).mask) == [0, 1]


def test_token_dataset():
    data = generate_token_dataset(SPEC, 50, seed=0)
    for x in data:
        assert x.label == [1 if t in SPEC.names else 2 if t in SPEC.numbers else 0 for t in x.tokens]
        assert x.rationale == [int(v > 0) for v in x.label]


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), st.floats(0, 1))
def test_generation_property(seed, rate):
    spec = TaskSpec(spurious_rate=rate, negation_rate=0.3)
    for x in generate_id_dataset(spec, 10, seed=seed):
        assert label_rule(x.tokens, spec) == x.label
        assert len(x.rationale) == len(x.tokens)
        assert spec.min_len <= len(x.tokens)
