import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ertest import autodiff as ad
from ertest.autodiff import Tensor
from ertest.config import Extractor
from ertest.data import Instance, Vocab
from ertest.extractors import (
    Rationale,
    binarize_topk,
    extract_attention,
    extract_batch,
    extract_ixg,
    extract_learned,
    input_x_gradient,
    ixg_raw,
    normalize,
    read_rationales,
    topk_count,
    write_rationales,
)
from ertest.model import forward, forward_batch, init_params, ixg_scores
from graphs import central_difference, relative_error


def linear_model(seed, vocab=12, d=5, c=3):
    p = init_params(vocab, c, embed_dim=d, seed=seed)
    w = dict(p.weights)
    w["wv"] = np.zeros_like(w["wv"])
    return p.with_weights(w)


def test_ixg_exact_on_linear_models():
    # values are zero, so the model is logit_c = mean_t(e_t) . w_c + b_c with w centered over classes
    rng = np.random.default_rng(0)
    for seed in range(50):
        p = linear_model(seed)
        n = int(rng.integers(1, 8))
        ids = rng.integers(1, 12, size=n).tolist()
        target = int(rng.integers(0, 3))
        wc = p.weights["wc"]
        w = (wc - wc.mean(axis=1, keepdims=True))[:, target] / n
        expected = p.weights["emb"][ids] @ w
        r = extract_ixg(forward(p, ids), target)
        assert np.max(np.abs(r.raw_scores - expected)) <= 1e-10
        analytic = ixg_scores(forward(p, ids), np.array([target])).data[0]
        assert np.max(np.abs(analytic - expected)) <= 1e-10


def test_ixg_zero_embedding_scores_zero():
    p = init_params(10, 2, embed_dim=4, seed=1)
    w = dict(p.weights)
    w["emb"] = w["emb"].copy()
    w["emb"][3] = 0.0
    r = extract_ixg(forward(p.with_weights(w), [2, 3, 4]), 1)
    assert r.raw_scores[1] == 0.0


def test_ixg_matches_finite_differences():
    p = init_params(15, 2, embed_dim=4, seed=4)
    ids = np.array([[2, 5, 7, 9]])
    e0 = p.weights["emb"][ids]
    for target in (0, 1):
        r = extract_ixg(forward(p, ids[0]), target)

        def fn(ts):
            from ertest.model import _wrap, encode

            tr = encode(_wrap(p, False), ts[0], np.ones((1, 4)), "sequence")
            return ad.sum_(ad.gather_last(tr.logits, np.array([target])))

        g = central_difference([e0], fn)[0]
        expected = (g * e0).sum(-1)[0]
        assert relative_error(r.raw_scores, expected) <= 1e-6


def test_analytic_input_gradient_matches_backward():
    p = init_params(20, 3, embed_dim=6, seed=7)
    ids = np.array([[2, 3, 4, 5, 0], [6, 7, 8, 0, 0]])
    mask = (ids > 0).astype(float)
    targets = np.array([2, 0])
    a = ixg_scores(forward_batch(p, ids, mask, input_grad=True), targets).data
    b = ixg_raw(forward_batch(p, ids, mask, input_grad=True), targets)
    assert np.max(np.abs(a - b)) <= 1e-12


def test_ixg_needs_input_leaf():
    p = init_params(10, 2, embed_dim=4)
    with pytest.raises(ValueError):
        extract_ixg(forward(p, [2, 3], input_grad=False), 0)


def test_input_x_gradient_helper_on_linear_function():
    w = np.array([1.0, -2.0])
    e = np.array([[1.0, 1.0], [0.5, 0.0]])
    out = input_x_gradient(lambda t: ad.sum_(ad.matmul(t, w.reshape(2, 1))), e)
    assert np.allclose(out, e @ w)


def test_attention_column_means():
    A = np.array([[0.5, 0.3, 0.2], [0.1, 0.8, 0.1], [0.2, 0.2, 0.6]])
    p = init_params(10, 2, embed_dim=4)
    trace = forward(p, [2, 3, 4], input_grad=False)
    trace.attention = Tensor(A[None])
    r = extract_attention(trace)
    assert np.allclose(r.raw_scores, [0.8 / 3, 1.3 / 3, 0.3], atol=1e-12)
    assert np.round(r.raw_scores, 4).tolist() == [0.2667, 0.4333, 0.3]


def test_attention_scores_are_a_distribution():
    p = init_params(10, 2, embed_dim=4, seed=2)
    r = extract_attention(forward(p, [2, 3, 4, 5], input_grad=False))
    assert abs(r.raw_scores.sum() - 1.0) <= 1e-12
    assert np.all(r.raw_scores >= 0)


def test_learned_head_zero_gives_half():
    p = init_params(10, 2, embed_dim=4, seed=2)
    w = dict(p.weights)
    w["head_w"] = np.zeros_like(w["head_w"])
    r = extract_learned(forward(p.with_weights(w), [2, 3, 4], input_grad=False))
    assert np.all(r.probs == 0.5)


def test_learned_head_reads_planted_feature():
    p = init_params(6, 2, embed_dim=3, seed=0)
    w = {k: np.zeros_like(v) for k, v in p.weights.items()}
    emb = np.zeros((6, 3))
    emb[2, 0] = 1.0  # token 2 carries the planted bit
    emb[3, 1] = 1.0
    w["emb"] = emb
    w["head_w"] = np.array([[1.0], [0.0], [0.0]])
    r = extract_learned(forward(p.with_weights(w), [3, 2, 3], input_grad=False))
    assert r.raw_scores.tolist() == [0.0, 1.0, 0.0]
    assert binarize_topk(r, 34).mask.tolist() == [0, 1, 0]


def test_normalize_is_sigmoid_of_gamma():
    assert np.allclose(normalize([0.0, 0.01, -0.01]), [0.5, 1 / (1 + np.exp(-1)), 1 / (1 + np.exp(1))])
    assert np.all(np.isfinite(normalize([1e6, -1e6])))
    with pytest.raises(ValueError):
        normalize([0.1], gamma=0)


def test_topk_counts():
    assert topk_count(50, 4) == 2
    assert topk_count(5, 10) == 1
    assert topk_count(25, 10) == 3  # 2.5 rounds half up
    assert topk_count(100, 7) == 7
    with pytest.raises(ValueError):
        topk_count(0, 5)


def test_binarize_examples_and_ties():
    assert binarize_topk([0.1, 0.9, 0.5, 0.7], 50).mask.tolist() == [0, 1, 0, 1]
    assert binarize_topk([0.5, 0.5, 0.5, 0.5], 50).mask.tolist() == [1, 1, 0, 0]
    assert binarize_topk([0.9, 0.1, 0.5], 34).mask.tolist() == [1, 0, 0]


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=1, max_size=12), st.floats(1, 100))
def test_normalization_preserves_ranking(raw, k):
    probs = normalize(raw)
    raw = np.asarray(raw)
    # strictly ordered raw scores keep their order (sigmoid is monotone)
    i, j = np.argmax(raw), np.argmin(raw)
    assert probs[i] >= probs[j]
    assert binarize_topk(probs, k).mask.sum() == topk_count(k, len(raw))


def test_extract_batch_and_round_trip(tmp_path):
    vocab = Vocab(["a", "b", "c"])
    data = [Instance("x1", ["a", "b"], 0), Instance("x2", ["c", "a", "b"], 1)]
    p = init_params(len(vocab), 2, embed_dim=4, seed=0)
    rs = extract_batch(p, data, vocab, "ixg", target="gold")
    assert [len(r) for r in rs] == [2, 3] and [r.target_class for r in rs] == [0, 1]
    single = extract_ixg(forward(p, vocab.encode(["c", "a", "b"])), 1)
    assert np.allclose(rs[1].raw_scores, single.raw_scores, atol=1e-12)
    for kind in Extractor:
        assert len(extract_batch(p, data, vocab, kind)) == 2
    path = write_rationales(rs, tmp_path / "r.jsonl")
    back = read_rationales(path)
    assert np.array_equal(back[1].raw_scores, rs[1].raw_scores) and back[0].instance_id == "x1"
    with pytest.raises(ValueError):
        Rationale(np.zeros(2), np.zeros(3), None, Extractor.IXG)
