import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ertest import datagen
from ertest.config import ERConfig, Strategy, TrainConfig
from ertest.data import Instance, Vocab
from ertest.model import fit, init_params
from ertest.selection import (
    SelectionScore,
    budget_size,
    compose_batches,
    rank,
    read_manifest,
    score_instances,
    select,
    top_mean,
    write_manifest,
)


def insts(n):
    return [Instance(f"i{k:03d}", ["w"], k % 2, [1]) for k in range(n)]


def scored(vals, strategy):
    return [SelectionScore(f"i{k:03d}", v, Strategy(strategy), [v]) for k, v in enumerate(vals)]


def test_top_mean_example():
    assert abs(top_mean([0.9, 0.8, 0.1], 67) - 0.85) <= 1e-12


def test_budget_sizes():
    assert budget_size(5, 20) == 1
    assert budget_size(100, 37) == 37
    assert budget_size(15, 1000) == 150
    with pytest.raises(ValueError):
        budget_size(0, 10)


def test_lc_picks_lowest_scores():
    data = insts(3)
    chosen = select(data, 67, "lc", scores=scored([0.3, 0.9, 0.5], "lc"))
    assert chosen == ["i000", "i002"]
    assert select(data, 100, "lc", scores=scored([0.3, 0.9, 0.5], "lc")) == [x.id for x in data]


def test_rank_tie_break_lower_position():
    assert rank(scored([0.5, 0.5, 0.1], "lc"), "lc") == [2, 0, 1]
    assert rank(scored([0.5, 0.5, 0.1], "hc"), "hc") == [0, 1, 2]


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=20, unique=True))
def test_high_orderings_reverse_low_orderings(vals):
    for low, high in (("lc", "hc"), ("lis", "his")):
        assert rank(scored(vals, high), high) == rank(scored(vals, low), low)[::-1]


def test_random_selection_deterministic_per_seed():
    data = insts(100)
    a = select(data, 15, "random", seed=1)
    assert a == select(data, 15, "random", seed=1)
    assert a != select(data, 15, "random", seed=2)
    assert len(a) == 15 and len(set(a)) == 15


def test_ranked_strategy_needs_scores():
    with pytest.raises(ValueError):
        select(insts(10), 50, "lis")


def test_score_instances_contract():
    spec = datagen.TaskSpec()
    train = datagen.generate_id_dataset(spec, 30, seed=0)
    vocab = Vocab.build([train])
    fresh = init_params(len(vocab), 2, seed=0)
    with pytest.raises(ValueError):
        score_instances([fresh], train, vocab, "lc")
    assert score_instances([], train, vocab, "random") == []
    models = [
        fit(init_params(len(vocab), 2, seed=s), train, train, ERConfig(lambda_er=0), TrainConfig(lr=0.1, max_epochs=2), vocab, seed=s)[0]
        for s in (0, 1)
    ]
    models = [m if m.steps else m.with_weights(m.weights, steps=1) for m in models]
    for strategy in ("lc", "hc", "lis", "his"):
        out = score_instances(models, train, vocab, strategy)
        assert len(out) == len(train)
        for s in out:
            assert len(s.seed_scores) == 2
            assert s.score == math.fsum(s.seed_scores) / 2
            assert 0 <= s.score <= 1
    with pytest.raises(ValueError):
        score_instances(models, train, vocab, "lis", k_prime=100)


def audit(batches, annotated, batch_size):
    # a short final batch of a fully annotated set is all annotated
    floor = math.ceil(batch_size / 3)
    return all(sum(x.id in annotated for x in b) >= min(floor, len(b)) for b in batches)


def test_batches_keep_one_third_floor():
    data = insts(200)
    rng = np.random.default_rng(0)
    for k in (1, 5, 15, 50):
        ann = set(select(data, k, "random", seed=k))
        for bs in (6, 32, 7):
            batches = compose_batches(data, ann, bs, rng)
            assert audit(batches, ann, bs)
            seen = {x.id for b in batches for x in b}
            assert seen == {x.id for x in data}
            assert all(len(b) <= bs for b in batches)


def test_batch_32_has_eleven_annotated():
    data = insts(100)
    ann = {"i000", "i001"}
    for b in compose_batches(data, ann, 32, np.random.default_rng(1)):
        assert sum(x.id in ann for x in b) >= 11


def test_single_annotated_instance_repeats():
    data = insts(30)
    for b in compose_batches(data, {"i007"}, 6, np.random.default_rng(0)):
        assert sum(x.id == "i007" for x in b) >= 2


def test_full_annotation_is_plain_shuffle():
    data = insts(10)
    batches = compose_batches(data, {x.id for x in data}, 4, np.random.default_rng(0))
    assert sorted(x.id for b in batches for x in b) == [x.id for x in data]
    assert [len(b) for b in batches] == [4, 4, 2]
    with pytest.raises(ValueError):
        compose_batches(data, set(), 4, np.random.default_rng(0))
    with pytest.raises(ValueError):
        compose_batches(data, {"i000"}, 1, np.random.default_rng(0))


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 60), st.integers(1, 40), st.integers(2, 12), st.integers(0, 1000))
def test_batch_floor_property(n, n_ann, bs, seed):
    data = insts(n)
    ann = {x.id for x in data[: min(n_ann, n)]}
    batches = compose_batches(data, ann, bs, np.random.default_rng(seed))
    assert audit(batches, ann, bs)
    assert {x.id for b in batches for x in b} == {x.id for x in data}


def test_manifest_round_trip(tmp_path):
    path = write_manifest(tmp_path / "m.json", "lis", 5, 2, ["a", "b"])
    doc = read_manifest(path)
    assert doc == {"schema_version": 1, "strategy": "lis", "k": 5, "seed": 2, "selected_ids": ["a", "b"]}
