import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special

from ertest.data import Instance
from ertest.evaluation import (
    Category,
    ContrastGroup,
    Subtest,
    accuracy,
    contrast_consistency,
    failure_rate,
    fprd,
    fprd_detail,
    macro_f1,
    normalize_failure_rates,
    read_predictions,
    write_predictions,
)
from ertest.stats import betainc, t_sf, welch_t_test
from oracles import check_random_tables, quad_sf


# --- worked examples ---------------------------------------------------------


def test_accuracy_and_f1_examples():
    assert accuracy([0, 1, 1, 1], [0, 0, 1, 1]) == 0.75
    assert abs(macro_f1([0, 1, 1, 1], [0, 0, 1, 1]) - (2 / 3 + 4 / 5) / 2) <= 1e-12
    assert round(macro_f1([0, 1, 1, 1], [0, 0, 1, 1]), 4) == 0.7333
    f1_zero = 2 * 2 / (2 * 2 + 2)
    assert abs(macro_f1([0, 0, 0, 0], [0, 0, 1, 1]) - f1_zero / 2) <= 1e-12


def test_token_level_lists_are_flattened():
    assert accuracy([[0, 1], [2]], [[0, 0], [2]]) == 2 / 3
    with pytest.raises(ValueError):
        accuracy([[0, 1]], [[0]])
    with pytest.raises(ValueError):
        accuracy([0], [0, 1])


def test_consistency_example():
    groups = [
        ContrastGroup("a", 1, [("a~inv", 0, "inversion")]),
        ContrastGroup("b", 0, [("b~inv", 1, "inversion"), ("b~number_mod", 0, "number_mod")]),
    ]
    preds = {"a": 1, "a~inv": 0, "b": 0, "b~inv": 0, "b~number_mod": 0}
    r = contrast_consistency(groups, preds)
    assert r.consistency == 0.5 and r.original_acc == 1.0 and r.contrast_acc == 2 / 3
    with pytest.raises(KeyError):
        contrast_consistency(groups, {"a": 1})
    with pytest.raises(ValueError):
        ContrastGroup("c", 0, [])
    with pytest.raises(ValueError):
        ContrastGroup("c", 0, [("x", 1, "paraphrase")])


def test_normalized_failure_example():
    assert normalize_failure_rates([10, 20, 30]) == [0, 0.5, 1]
    assert normalize_failure_rates([0.2, 0.2]) == [0.0, 0.0]
    with pytest.raises(ValueError):
        normalize_failure_rates([0.3])


def test_failure_rate():
    sub = Subtest("t", [Instance("x", ["a"], 1), Instance("y", ["b"], 0)], invariance=False)
    assert failure_rate(sub, [1, 1]) == 0.5
    assert failure_rate(sub, {"x": 0, "y": 1}) == 1.0
    assert Category("logic") is Category.LOGIC


def test_fprd_worked_case():
    # overall FPR 0.2, group A 0.5, group B 0.1 -> 0.3 + 0.1
    gold = [0] * 20
    pred = [0] * 20
    for i in (0, 1, 2, 3):
        pred[i] = 1
    a = [0, 1, 2, 3, 4, 5, 6, 7]  # 4 of 8 positive
    b = [3] + list(range(8, 17))  # 1 of 10 positive
    d = fprd_detail(pred, gold, {"A": a, "B": b})
    assert (d.overall_fpr, d.group_fpr["A"], d.group_fpr["B"]) == (0.2, 0.5, 0.1)
    assert abs(d.value - 0.4) <= 1e-12
    assert fprd(pred, gold, [["A"] if i in a else [] for i in range(20)]) == pytest.approx(0.3, abs=1e-12)


def test_fprd_excludes_groups_without_negatives():
    d = fprd_detail([1, 0, 1], [0, 0, 1], [["x"], ["x"], ["y"]])
    assert d.excluded == ["y"] and "y" not in d.group_fpr
    with pytest.raises(ValueError):
        fprd([1, 1], [1, 1], [["x"], ["x"]])


# --- brute-force oracle suite: 100 random small tables -----------------------


def test_metrics_match_oracles_on_random_tables():
    assert check_random_tables(np.random.default_rng(0), 100) <= 1e-12


# --- Welch test against numerical integration of the t density ---------------


def test_welch_fixture():
    r = welch_t_test([1, 2, 3], [0, 1, 2])
    assert abs(r.t - 1.224744871391589) <= 1e-12
    assert abs(r.df - 4.0) <= 1e-12
    assert abs(r.p_value - quad_sf(r.t, r.df)) <= 1e-6
    assert abs(r.p_value - 0.1438) <= 1e-3
    assert not r.significant


def test_welch_far_apart():
    r = welch_t_test([10.0, 10.1, 9.9], [0.0, 0.1, -0.1])
    assert r.p_value < 1e-4 and r.significant
    assert welch_t_test([0.0, 0.1, -0.1], [10.0, 10.1, 9.9], alternative="less").p_value < 1e-4


def test_welch_errors():
    with pytest.raises(ValueError):
        welch_t_test([1.0], [1.0, 2.0])
    with pytest.raises(ValueError):
        welch_t_test([1.0, 1.0], [2.0, 2.0])
    with pytest.raises(ValueError):
        welch_t_test([1, 2], [1, 3], alternative="both")


def test_t_sf_matches_quadrature():
    rng = np.random.default_rng(1)
    for _ in range(40):
        t = float(rng.normal(0, 2))
        df = float(rng.uniform(1.5, 30))
        assert abs(t_sf(t, df) - quad_sf(t, df)) <= 1e-8


def test_betainc_matches_scipy():
    rng = np.random.default_rng(2)
    for _ in range(200):
        a, b, x = rng.uniform(0.2, 20), rng.uniform(0.2, 20), rng.uniform(0, 1)
        assert abs(betainc(a, b, x) - special.betainc(a, b, x)) <= 1e-10


@settings(max_examples=100, deadline=None)
@given(
    st.lists(st.floats(-5, 5), min_size=2, max_size=6),
    st.lists(st.floats(-5, 5), min_size=2, max_size=6),
)
def test_welch_sidedness(a, b):
    try:
        g = welch_t_test(a, b, "greater")
    except ValueError:
        return
    l = welch_t_test(a, b, "less")
    two = welch_t_test(a, b, "two-sided")
    assert 0 <= g.p_value <= 1
    assert abs(g.p_value + l.p_value - 1) <= 1e-9
    assert abs(two.p_value - min(1.0, 2 * min(g.p_value, l.p_value))) <= 1e-9


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=2, max_size=8))
def test_normalized_rates_in_unit_interval(rates):
    out = normalize_failure_rates(rates)
    assert all(0 <= v <= 1 for v in out)
    if max(rates) > min(rates):
        assert min(out) == 0 and max(out) == 1


def test_prediction_table_round_trip(tmp_path):
    rows = [
        {"instance_id": "a", "gold": 1, "pred": 0, "split": "id_test", "group_tags": ["honestly"]},
        {"instance_id": "b", "gold": [0, 1, 2], "pred": [0, 1, 1], "split": "tok", "group_tags": []},
    ]
    assert read_predictions(write_predictions(rows, tmp_path / "p.csv")) == rows
