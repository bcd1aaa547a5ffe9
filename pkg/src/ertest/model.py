"""Toy text classifier: embeddings -> one self-attention head -> linear classifier.

Hidden states are ``H = softmax(QK^T / sqrt(d)) V + E`` (one residual connection).
Sequence mode mean-pools ``H`` over real tokens before the classifier; token
mode classifies every position. A linear head on ``H`` provides the learned
rationale extractor.

Weights live in plain numpy arrays inside an immutable :class:`ModelParams`;
each forward pass wraps them in fresh autodiff leaves, so training and
attribution never share gradient buffers.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .config import ERConfig, Extractor, TrainConfig
from .criteria import ImportanceProbs, er_loss, per_instance_loss
from .data import Batch, Instance, Vocab, make_batch

log = logging.getLogger(__name__)

CHECKPOINT_SCHEMA = 1
_KEY_MASK_FILL = -1e30
WEIGHT_NAMES = ("emb", "wq", "wk", "wv", "wc", "bc", "head_w", "head_b")


class TrainingError(RuntimeError):
    """Training produced a non-finite loss."""


@dataclass(frozen=True)
class ModelParams:
    vocab_size: int
    embed_dim: int
    n_classes: int
    mode: str
    weights: dict[str, np.ndarray]
    seed: int = 0
    max_len: int = 64
    steps: int = 0

    def __post_init__(self):
        if self.mode not in ("sequence", "token"):
            raise ValueError(f"mode must be 'sequence' or 'token', got {self.mode!r}")
        d, v, c = self.embed_dim, self.vocab_size, self.n_classes
        expected = {
            "emb": (v, d),
            "wq": (d, d),
            "wk": (d, d),
            "wv": (d, d),
            "wc": (d, c),
            "bc": (c,),
            "head_w": (d, 1),
            "head_b": (),
        }
        for name, shape in expected.items():
            if name not in self.weights:
                raise ValueError(f"missing weight {name!r}")
            if self.weights[name].shape != shape:
                raise ad.ShapeError(f"weight {name}", self.weights[name].shape, shape)

    def with_weights(self, weights: dict[str, np.ndarray], steps: int | None = None) -> "ModelParams":
        steps = self.steps if steps is None else steps
        return ModelParams(
            self.vocab_size, self.embed_dim, self.n_classes, self.mode, weights, self.seed, self.max_len, steps
        )

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(w)) for w in self.weights.values())


def init_params(
    vocab_size: int,
    n_classes: int,
    *,
    embed_dim: int = 16,
    mode: str = "sequence",
    seed: int = 0,
    max_len: int = 64,
) -> ModelParams:
    rng = np.random.default_rng(seed)
    d = embed_dim
    std = 1.0 / math.sqrt(d)
    emb = rng.normal(0.0, 0.5, size=(vocab_size, d))
    emb[0] = 0.0
    weights = {
        "emb": emb,
        "wq": rng.normal(0.0, std, size=(d, d)),
        "wk": rng.normal(0.0, std, size=(d, d)),
        "wv": rng.normal(0.0, std, size=(d, d)),
        "wc": rng.normal(0.0, std, size=(d, n_classes)),
        "bc": np.zeros(n_classes),
        "head_w": rng.normal(0.0, std, size=(d, 1)),
        "head_b": np.zeros(()),
    }
    return ModelParams(vocab_size, d, n_classes, mode, weights, seed, max_len)


@dataclass
class ForwardTrace:
    """Graph handles from one forward pass over a padded batch.

    ``input_embeddings`` is (B, n, d), ``attention`` (B, n, n) and ``logits``
    (B, C) or (B, n, C). ``pool`` holds the per-position pooling weights
    (mask / length) as a (B, n, 1) constant.
    """

    logits: Tensor
    attention: Tensor
    input_embeddings: Tensor
    hidden: Tensor
    queries: Tensor
    keys: Tensor
    values: Tensor
    mask: np.ndarray
    pool: np.ndarray
    mode: str
    scale: float
    weights: dict[str, Tensor] = field(repr=False)
    classifier: Tensor | None = field(default=None, repr=False)

    @property
    def predictions(self) -> np.ndarray:
        # argmax returns the first maximum: ties go to the lowest class index
        return np.argmax(self.logits.data, axis=-1)


def _wrap(params: ModelParams, requires_grad: bool) -> dict[str, Tensor]:
    return {k: Tensor(v, requires_grad=requires_grad) for k, v in params.weights.items()}


def _check_ids(params: ModelParams, ids: np.ndarray, mask: np.ndarray) -> None:
    if ids.ndim != 2 or ids.shape[1] == 0:
        raise ValueError("forward: empty token sequence")
    if np.any(mask.sum(axis=1) < 1):
        raise ValueError("forward: empty token sequence")
    if ids.shape[1] > params.max_len:
        raise ValueError(f"forward: sequence length {ids.shape[1]} exceeds max_len={params.max_len}")
    if ids.min() < 0 or ids.max() >= params.vocab_size:
        raise IndexError(f"forward: token id out of range for vocab_size={params.vocab_size}")


def encode(W: dict[str, Tensor], e: Tensor, mask: np.ndarray, mode: str) -> ForwardTrace:
    """Run the encoder and classifier on input embeddings ``e`` of shape (B, n, d)."""
    B, n, d = e.shape
    scale = 1.0 / math.sqrt(d)
    q = ad.matmul(e, W["wq"])
    k = ad.matmul(e, W["wk"])
    v = ad.matmul(e, W["wv"])
    key_bias = np.broadcast_to(np.where(mask[:, None, :] > 0, 0.0, _KEY_MASK_FILL), (B, n, n))
    scores = ad.add(ad.mul(ad.matmul(q, ad.transpose(k)), scale), key_bias)
    attn = ad.softmax(scores, axis=-1)
    hidden = ad.add(ad.matmul(attn, v), e)
    pool = (mask / mask.sum(axis=1, keepdims=True))[:, :, None]
    wc, bc = centered_classifier(W)
    if mode == "sequence":
        pooled = ad.reshape(ad.matmul(ad.transpose(pool), hidden), (B, d))
        logits = ad.add(ad.matmul(pooled, wc), bc)
    else:
        logits = ad.add(ad.matmul(hidden, wc), bc)
    return ForwardTrace(logits, attn, e, hidden, q, k, v, mask, pool, mode, scale, W, wc)


def centered_classifier(W: dict[str, Tensor]) -> tuple[Tensor, Tensor]:
    """Classifier weights with the per-row class mean removed.

    Softmax ignores a shared shift of the logits, so this leaves predictions
    unchanged; it makes each logit measure evidence for its class relative to
    the others, which is what a logit-targeted attribution should see.
    """
    wc, bc = W["wc"], W["bc"]
    d, c = wc.shape
    wc0 = ad.sub(wc, ad.broadcast_to(ad.reshape(ad.mean(wc, axis=1), (d, 1)), (d, c)))
    bc0 = ad.sub(bc, ad.broadcast_to(ad.reshape(ad.mean(bc), (1,)), (c,)))
    return wc0, bc0


def forward_batch(params: ModelParams, ids, mask=None, *, requires_grad: bool = False, input_grad: bool = False) -> ForwardTrace:
    """Forward pass over padded token ids.

    ``requires_grad`` tracks the weights (training); ``input_grad`` makes the
    input embeddings a leaf of their own so a backward pass leaves d/d(embedding)
    in ``trace.input_embeddings.grad`` (attribution).
    """
    ids = np.asarray(ids, dtype=np.int64)
    mask = np.ones(ids.shape) if mask is None else np.asarray(mask, dtype=np.float64)
    _check_ids(params, ids, mask)
    W = _wrap(params, requires_grad)
    if input_grad:
        e = Tensor(params.weights["emb"][ids], requires_grad=True)
    else:
        e = ad.embedding_lookup(W["emb"], ids)
    return encode(W, e, mask, params.mode)


def forward(params: ModelParams, tokens: Sequence[int], *, input_grad: bool = True) -> ForwardTrace:
    """Forward pass for one token-id sequence (a batch of one)."""
    ids = np.asarray(tokens, dtype=np.int64).reshape(1, -1)
    return forward_batch(params, ids, input_grad=input_grad)


# ---------------------------------------------------------------------------
# attribution graphs


def _target_rows(trace: ForwardTrace, target) -> Tensor:
    """Rows of the classifier matrix for the target class(es), laid out (B, n, d), masked and pooled."""
    W = trace.weights
    B, n, d = trace.input_embeddings.shape
    wc_t = ad.transpose(trace.classifier if trace.classifier is not None else W["wc"])
    target = np.asarray(target, dtype=np.int64)
    if trace.mode == "sequence":
        if target.shape != (B,):
            raise ad.ShapeError("input_gradient", target.shape, (B,))
        g = ad.reshape(ad.embedding_lookup(wc_t, target), (B, 1, d))
        return ad.matmul(trace.pool, g)
    if target.shape != (B, n):
        raise ad.ShapeError("input_gradient", target.shape, (B, n))
    g = ad.embedding_lookup(wc_t, target)
    return ad.mul(g, np.broadcast_to(trace.mask[:, :, None], (B, n, d)))


def target_logit(trace: ForwardTrace, target) -> Tensor:
    """Scalar sum over the batch of each instance's target logit.

    In token mode an instance contributes the sum over its real tokens of each
    token's target-class logit.
    """
    target = np.asarray(target, dtype=np.int64)
    picked = ad.gather_last(trace.logits, target)
    if trace.mode == "token":
        picked = ad.mul(picked, trace.mask)
    return ad.sum_(picked)


def input_gradient(trace: ForwardTrace, target) -> Tensor:
    """d(target logit)/d(input embeddings), built from forward ops so it stays differentiable.

    Backprop by hand through the classifier, the residual, the value path and
    the attention softmax (scores depend on the inputs through Q and K).
    """
    W = trace.weights
    B, n, d = trace.input_embeddings.shape
    A, Q, K, V = trace.attention, trace.queries, trace.keys, trace.values
    G = _target_rows(trace, target)  # d(logit)/d(hidden)
    via_values = ad.matmul(ad.matmul(ad.transpose(A), G), ad.transpose(W["wv"]))
    dA = ad.matmul(G, ad.transpose(V))
    row_dot = ad.sum_(ad.mul(G, ad.matmul(A, V)), axis=-1)
    row_dot = ad.broadcast_to(ad.reshape(row_dot, (B, n, 1)), (B, n, n))
    dS = ad.mul(ad.mul(A, ad.sub(dA, row_dot)), trace.scale)
    via_queries = ad.matmul(ad.matmul(dS, K), ad.transpose(W["wq"]))
    via_keys = ad.matmul(ad.matmul(ad.transpose(dS), Q), ad.transpose(W["wk"]))
    return ad.add(ad.add(ad.add(G, via_values), via_queries), via_keys)


def ixg_scores(trace: ForwardTrace, target) -> Tensor:
    """Input x gradient per token, (B, n), summed over the embedding axis; signed."""
    grad = input_gradient(trace, target)
    return ad.sum_(ad.mul(grad, trace.input_embeddings), axis=-1)


def attention_scores(trace: ForwardTrace) -> Tensor:
    """Mean over real query rows of each key column of the attention matrix, (B, n)."""
    B, n, _ = trace.attention.shape
    cols = ad.matmul(ad.transpose(trace.attention), trace.pool)
    return ad.reshape(cols, (B, n))


def learned_scores(trace: ForwardTrace) -> Tensor:
    """Linear head applied to each hidden state, (B, n)."""
    W = trace.weights
    B, n, d = trace.hidden.shape
    if W["head_w"].shape != (d, 1):
        raise ad.ShapeError("learned head", W["head_w"].shape, (d, 1))
    raw = ad.reshape(ad.matmul(trace.hidden, W["head_w"]), (B, n))
    return ad.add(raw, W["head_b"])


def rationale_scores(trace: ForwardTrace, extractor: Extractor | str, target=None) -> Tensor:
    extractor = Extractor(extractor)
    if extractor is Extractor.IXG:
        if target is None:
            raise ValueError("IxG needs a target class")
        return ixg_scores(trace, target)
    if extractor is Extractor.ATTENTION:
        return attention_scores(trace)
    return learned_scores(trace)


# ---------------------------------------------------------------------------
# optimizers


class SGD:
    def __init__(self, lr: float = 1e-2):
        self.lr = lr

    def step(self, weights: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
        return {k: w - self.lr * grads[k] for k, w in weights.items()}


class Adam:
    def __init__(self, lr: float = 1e-3, betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, weights, grads):
        b1, b2 = self.betas
        self.t += 1
        out = {}
        for k, w in weights.items():
            g = grads[k]
            m = self.m.get(k, np.zeros_like(w)) * b1 + (1 - b1) * g
            v = self.v.get(k, np.zeros_like(w)) * b2 + (1 - b2) * g * g
            self.m[k], self.v[k] = m, v
            m_hat = m / (1 - b1**self.t)
            v_hat = v / (1 - b2**self.t)
            out[k] = w - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
        return out


def make_optimizer(cfg: TrainConfig):
    return SGD(cfg.lr) if cfg.optimizer == "sgd" else Adam(cfg.lr)


# ---------------------------------------------------------------------------
# losses and training


@dataclass(frozen=True)
class LossBreakdown:
    task: float
    er: float
    total: float
    n_annotated: int

    @property
    def flagged(self) -> bool:
        return self.n_annotated == 0


def batch_loss(params: ModelParams, batch: Batch, er: ERConfig, *, requires_grad: bool):
    """Build the objective on ``batch``; returns (total Tensor, weight leaves, breakdown)."""
    trace = forward_batch(params, batch.ids, batch.mask, requires_grad=requires_grad)
    if params.mode == "token":
        task = ad.cross_entropy(trace.logits, batch.labels, weights=batch.mask)
    else:
        task = ad.cross_entropy(trace.logits, batch.labels)
    total = task
    er_value, n_annot = 0.0, 0
    if er.enabled:
        n_annot = int(batch.annotated.sum())
        if n_annot:
            raw = rationale_scores(trace, er.extractor, batch.labels)
            rp = ImportanceProbs.from_scores(ad.mul(raw, er.gamma_er))
            per = per_instance_loss(
                er.criterion, rp, batch.human, batch.mask, delta=er.huber_delta, two_term_bce=er.two_term_bce
            )
            term = er_loss(per, batch.annotated, er.lambda_er)
            total = ad.add(task, term.weighted)
            er_value = term.value.item()
    breakdown = LossBreakdown(task.item(), er_value, total.item(), n_annot)
    return total, trace.weights, breakdown


def _clip(grads: dict[str, np.ndarray], max_norm: float | None) -> dict[str, np.ndarray]:
    if max_norm is None:
        return grads
    norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if norm <= max_norm:
        return grads
    return {k: g * (max_norm / norm) for k, g in grads.items()}


def train_step(
    params: ModelParams,
    batch: Batch,
    er: ERConfig,
    optimizer=None,
    *,
    clip_norm: float | None = None,
) -> tuple[ModelParams, LossBreakdown]:
    """One descent step on task loss + lambda * ER loss (ER only over annotated rows)."""
    if len(batch) == 0:
        raise ValueError("train_step: empty batch")
    optimizer = optimizer or SGD()
    total, leaves, breakdown = batch_loss(params, batch, er, requires_grad=True)
    if not math.isfinite(breakdown.total):
        raise TrainingError(
            f"non-finite loss (task={breakdown.task}, er={breakdown.er}) on batch {batch.instance_ids[:5]}..."
        )
    ad.backward(total)
    grads = {k: (t.grad if t.grad is not None else np.zeros_like(t.data)) for k, t in leaves.items()}
    # padding row of the embedding table stays zero
    grads["emb"][0] = 0.0
    new = params.with_weights(optimizer.step(params.weights, _clip(grads, clip_norm)), params.steps + 1)
    if not new.is_finite():
        raise TrainingError("non-finite weights after update")
    return new, breakdown


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_task: float
    train_er: float
    dev_task: float
    dev_er: float
    dev_total: float
    flagged_batches: int = 0


@dataclass
class TrainingLog:
    epochs: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    stopped_early: bool = False

    @property
    def best(self) -> EpochRecord:
        return next(r for r in self.epochs if r.epoch == self.best_epoch)

    def to_json(self) -> dict:
        return {
            "best_epoch": self.best_epoch,
            "stopped_early": self.stopped_early,
            "epochs": [asdict(r) for r in self.epochs],
        }


def evaluate_loss(
    params: ModelParams, instances: Sequence[Instance], vocab: Vocab, er: ERConfig, *, chunk: int = 256
) -> tuple[float, float, float]:
    """Dataset-level (task, er, total) loss: task averaged over instances, ER over annotated ones."""
    task_sum, er_sum, n_task, n_er = 0.0, 0.0, 0, 0
    for start in range(0, len(instances), chunk):
        part = instances[start : start + chunk]
        batch = make_batch(part, vocab, max_len=params.max_len)
        _, _, br = batch_loss(params, batch, er, requires_grad=False)
        task_sum += br.task * len(part)
        n_task += len(part)
        er_sum += br.er * br.n_annotated
        n_er += br.n_annotated
    task = task_sum / n_task
    er_mean = er_sum / n_er if n_er else 0.0
    return task, er_mean, task + er.lambda_er * er_mean


def plain_batches(instances: Sequence[Instance], batch_size: int, rng: np.random.Generator) -> Iterator[list[Instance]]:
    order = rng.permutation(len(instances))
    for start in range(0, len(order), batch_size):
        yield [instances[i] for i in order[start : start + batch_size]]


def fit(
    params: ModelParams,
    train_set: Sequence[Instance],
    dev_set: Sequence[Instance],
    er: ERConfig,
    train_cfg: TrainConfig,
    vocab: Vocab,
    *,
    annotated_ids: set[str] | None = None,
    seed: int = 0,
) -> tuple[ModelParams, TrainingLog]:
    """Train with early stopping on total dev loss; return the best checkpoint.

    Epoch 0 is the untrained model. Training stops once ``patience + 1``
    consecutive epochs fail to improve on the best dev loss, or at
    ``max_epochs``. ``annotated_ids`` limits which training rationales are used
    (None: all of them); a partial annotation set switches batching to the
    one-third-annotated composition rule.
    """
    from .selection import compose_batches  # local import: selection depends on this module

    if not dev_set:
        raise ValueError("fit: empty dev set")
    rng = np.random.default_rng(seed)
    optimizer = make_optimizer(train_cfg)
    if annotated_ids is None:
        annotated_ids = {x.id for x in train_set if x.has_rationale}
    else:
        annotated_ids = {x.id for x in train_set if x.id in annotated_ids and x.has_rationale}
    partial = er.enabled and 0 < len(annotated_ids) < len(train_set)
    if er.enabled and not annotated_ids:
        raise ValueError("fit: ER enabled but no training instance carries a rationale")

    dev_task, dev_er, dev_total = evaluate_loss(params, dev_set, vocab, er)
    history = TrainingLog([EpochRecord(0, math.nan, math.nan, dev_task, dev_er, dev_total)])
    best_params, best_loss, wait = params, dev_total, 0
    for epoch in range(1, train_cfg.max_epochs + 1):
        if partial:
            batches = compose_batches(train_set, annotated_ids, train_cfg.batch_size, rng)
        else:
            batches = plain_batches(train_set, train_cfg.batch_size, rng)
        task_acc, er_acc, n_b, flagged = 0.0, 0.0, 0, 0
        for chunk in batches:
            batch = make_batch(chunk, vocab, annotated=annotated_ids, max_len=params.max_len)
            params, br = train_step(params, batch, er, optimizer, clip_norm=train_cfg.clip_norm)
            task_acc += br.task
            er_acc += br.er
            n_b += 1
            flagged += int(er.enabled and br.flagged)
        dev_task, dev_er, dev_total = evaluate_loss(params, dev_set, vocab, er)
        history.epochs.append(EpochRecord(epoch, task_acc / n_b, er_acc / n_b, dev_task, dev_er, dev_total, flagged))
        log.debug("epoch %d train_task=%.4f dev_total=%.4f", epoch, task_acc / n_b, dev_total)
        if dev_total < best_loss:
            best_params, best_loss, wait = params, dev_total, 0
            history.best_epoch = epoch
        else:
            wait += 1
            if wait > train_cfg.patience:
                history.stopped_early = True
                break
    return best_params, history


def predict(params: ModelParams, instances: Sequence[Instance], vocab: Vocab, *, chunk: int = 256) -> list:
    """Argmax predictions: ints in sequence mode, per-token lists in token mode."""
    out: list = []
    for start in range(0, len(instances), chunk):
        part = instances[start : start + chunk]
        batch = make_batch(part, vocab, max_len=params.max_len)
        preds = forward_batch(params, batch.ids, batch.mask).predictions
        if params.mode == "sequence":
            out.extend(int(p) for p in preds)
        else:
            out.extend([int(v) for v in preds[i, : len(x.tokens)]] for i, x in enumerate(part))
    return out


def class_probabilities(params: ModelParams, instances: Sequence[Instance], vocab: Vocab, *, chunk: int = 256) -> np.ndarray:
    """Softmax probabilities, (N, C); sequence mode only."""
    if params.mode != "sequence":
        raise ValueError("class_probabilities: sequence mode only")
    rows = []
    for start in range(0, len(instances), chunk):
        batch = make_batch(instances[start : start + chunk], vocab, max_len=params.max_len)
        rows.append(ad.softmax(forward_batch(params, batch.ids, batch.mask).logits).data)
    return np.concatenate(rows)


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(params: ModelParams, path, *, config_hash: str = "", vocab: Vocab | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = {
        "schema_version": CHECKPOINT_SCHEMA,
        "vocab_size": params.vocab_size,
        "embed_dim": params.embed_dim,
        "n_classes": params.n_classes,
        "mode": params.mode,
        "max_len": params.max_len,
        "seed": params.seed,
        "steps": params.steps,
        "config_hash": config_hash,
        "shapes": {k: list(v.shape) for k, v in params.weights.items()},
        "weights": {k: v.reshape(-1).tolist() for k, v in params.weights.items()},
    }
    if vocab is not None:
        doc["vocab"] = vocab.to_json()
    path.write_text(json.dumps(doc))
    return path


def load_checkpoint(path) -> tuple[ModelParams, dict]:
    doc = json.loads(Path(path).read_text())
    weights = {k: np.asarray(doc["weights"][k], dtype=np.float64).reshape(doc["shapes"][k]) for k in doc["shapes"]}
    params = ModelParams(
        doc["vocab_size"],
        doc["embed_dim"],
        doc["n_classes"],
        doc["mode"],
        weights,
        doc["seed"],
        doc["max_len"],
        doc.get("steps", 0),
    )
    return params, doc
