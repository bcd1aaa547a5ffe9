"""Machine rationale extractors and the shared normalization pipeline.

Raw per-token scores come from one of three extractors (input x gradient,
final-layer attention, a learned linear head) and are squashed with
``sigmoid(gamma * raw)``. Sigmoid is monotone, so the induced token ranking is
whatever the raw scores say.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .config import Extractor
from .data import Instance, Vocab, make_batch
from .model import (
    ForwardTrace,
    ModelParams,
    attention_scores,
    forward_batch,
    learned_scores,
    target_logit,
)

DEFAULT_GAMMA = 100.0


@dataclass
class Rationale:
    raw_scores: np.ndarray
    probs: np.ndarray
    target_class: int | list[int] | None
    extractor: Extractor
    instance_id: str | None = None

    def __post_init__(self):
        if self.raw_scores.shape != self.probs.shape:
            raise ValueError("raw_scores and probs differ in length")

    def __len__(self) -> int:
        return self.raw_scores.size

    def to_json(self) -> dict:
        return {
            "instance_id": self.instance_id,
            "extractor": Extractor(self.extractor).value,
            "target_class": self.target_class,
            "raw_scores": self.raw_scores.tolist(),
            "probs": self.probs.tolist(),
        }


@dataclass
class BinaryRationale:
    mask: np.ndarray
    k_percent: float


def normalize(raw, gamma: float = DEFAULT_GAMMA) -> np.ndarray:
    """sigmoid(gamma * raw), computed without overflow."""
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    return ad.sigmoid(np.asarray(raw, dtype=np.float64) * gamma).data


def _make(raw: np.ndarray, gamma: float, target, extractor: Extractor, instance_id=None) -> Rationale:
    raw = np.asarray(raw, dtype=np.float64).copy()
    return Rationale(raw, normalize(raw, gamma), target, extractor, instance_id)


def _target_array(trace: ForwardTrace, target_class) -> np.ndarray:
    B, n, _ = trace.input_embeddings.shape
    if trace.mode == "sequence":
        return np.broadcast_to(np.asarray(target_class, dtype=np.int64), (B,)).copy()
    arr = np.asarray(target_class, dtype=np.int64)
    return arr.reshape(B, n)


def input_x_gradient(fn: Callable[[Tensor], Tensor], embeddings) -> np.ndarray:
    """Per-token sum over the last axis of embedding * d fn / d embedding.

    ``fn`` maps an (n, d) embedding Tensor to a scalar Tensor.
    """
    e = Tensor(np.asarray(embeddings, dtype=np.float64), requires_grad=True)
    out = fn(e)
    ad.backward(out)
    if e.grad is None:
        return np.zeros(e.shape[:-1])
    return (e.grad * e.data).sum(axis=-1)


def ixg_raw(trace: ForwardTrace, target_class) -> np.ndarray:
    """Raw input x gradient scores via one backward pass; (B, n)."""
    e = trace.input_embeddings
    if not e.requires_grad or not e.is_leaf:
        raise ValueError("IxG needs a trace whose input embeddings are a gradient-tracking leaf (input_grad=True)")
    e.zero_grad()
    ad.backward(target_logit(trace, _target_array(trace, target_class)))
    if e.grad is None:
        raise ValueError("IxG: no gradient reached the input embeddings")
    return (e.grad * e.data).sum(axis=-1)


def extract_ixg(trace: ForwardTrace, target_class, gamma: float = DEFAULT_GAMMA) -> Rationale:
    """IxG rationale for a single-instance trace."""
    raw = ixg_raw(trace, target_class)
    if raw.shape[0] != 1:
        raise ValueError("extract_ixg expects a single-instance trace; use extract_batch for batches")
    return _make(raw[0], gamma, _as_target(target_class), Extractor.IXG)


def extract_attention(trace: ForwardTrace, gamma: float = DEFAULT_GAMMA) -> Rationale:
    if trace.attention.ndim != 3 or trace.attention.shape[0] != 1:
        raise ValueError("extract_attention expects a single-instance trace")
    raw = attention_scores(trace).data[0]
    return _make(raw, gamma, None, Extractor.ATTENTION)


def extract_learned(trace: ForwardTrace, gamma: float = DEFAULT_GAMMA) -> Rationale:
    if trace.hidden.shape[0] != 1:
        raise ValueError("extract_learned expects a single-instance trace")
    raw = learned_scores(trace).data[0]
    return _make(raw, gamma, None, Extractor.LEARNED)


def _as_target(target):
    if target is None:
        return None
    arr = np.asarray(target)
    return int(arr) if arr.ndim == 0 else [int(v) for v in arr.reshape(-1)]


def extract_batch(
    params: ModelParams,
    instances: Sequence[Instance],
    vocab: Vocab,
    extractor: Extractor | str,
    *,
    target: str = "pred",
    gamma: float = DEFAULT_GAMMA,
    chunk: int = 128,
) -> list[Rationale]:
    """Rationales for many instances.

    ``target`` picks the IxG class: ``"gold"`` (the supervision label, as during
    ER training) or ``"pred"`` (the model's own prediction, for post-hoc use).
    """
    extractor = Extractor(extractor)
    if target not in ("gold", "pred"):
        raise ValueError("target must be 'gold' or 'pred'")
    out: list[Rationale] = []
    for start in range(0, len(instances), chunk):
        part = instances[start : start + chunk]
        batch = make_batch(part, vocab, max_len=params.max_len)
        trace = forward_batch(params, batch.ids, batch.mask, input_grad=True)
        targets = batch.labels if target == "gold" else trace.predictions
        if extractor is Extractor.IXG:
            raw = ixg_raw(trace, targets)
        elif extractor is Extractor.ATTENTION:
            raw = attention_scores(trace).data
        else:
            raw = learned_scores(trace).data
        for row, inst in enumerate(part):
            n = len(inst.tokens)
            tgt = targets[row] if params.mode == "sequence" else targets[row, :n]
            out.append(_make(raw[row, :n], gamma, _as_target(tgt), extractor, inst.id))
    return out


def topk_count(k_percent: float, n: int) -> int:
    """Tokens kept by a top-k% threshold: k% of n rounded half up, at least one."""
    if not 0 < k_percent <= 100:
        raise ValueError(f"k must be in (0, 100], got {k_percent}")
    return max(1, min(n, math.floor(k_percent / 100.0 * n + 0.5)))


def binarize_topk(r: Rationale | Sequence[float], k_percent: float) -> BinaryRationale:
    """Mark the k% highest-probability tokens; ties go to the lower index."""
    probs = r.probs if isinstance(r, Rationale) else np.asarray(r, dtype=np.float64)
    keep = topk_count(k_percent, probs.size)
    order = np.lexsort((np.arange(probs.size), -probs))
    mask = np.zeros(probs.size, dtype=np.int64)
    mask[order[:keep]] = 1
    return BinaryRationale(mask, float(k_percent))


def write_rationales(rationales: Iterable[Rationale], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for r in rationales:
            fh.write(json.dumps(r.to_json()) + "\n")
    return path


def read_rationales(path) -> list[Rationale]:
    out = []
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                row = json.loads(line)
                out.append(
                    Rationale(
                        np.asarray(row["raw_scores"], dtype=np.float64),
                        np.asarray(row["probs"], dtype=np.float64),
                        row["target_class"],
                        Extractor(row["extractor"]),
                        row["instance_id"],
                    )
                )
    return out
