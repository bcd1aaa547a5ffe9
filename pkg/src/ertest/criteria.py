"""Rationale alignment criteria and the batched explanation-regularization loss.

Each criterion compares machine importance probabilities with a binary human
mask, per instance, and is built from autodiff ops so it can sit inside the
training objective. The scalar helpers (:func:`mse`, :func:`order_loss`, ...)
take plain sequences and return floats.

Inside training the probabilities come from ``sigmoid(gamma * raw)``; building
them through :meth:`ImportanceProbs.from_scores` lets the log-domain criteria
(BCE, KLDiv, Order) use ``log_sigmoid`` and stay finite when scores saturate.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

_MASK_FILL = -1e30


class Criterion(str, Enum):
    MSE = "mse"
    MAE = "mae"
    HUBER = "huber"
    BCE = "bce"
    KLDIV = "kldiv"
    ORDER = "order"


@dataclass
class ImportanceProbs:
    """Probabilities plus their logs, shaped (batch, n)."""

    probs: Tensor
    _log: Tensor | None = None
    _scores: Tensor | None = None
    _log1m: Tensor | None = None

    @classmethod
    def from_scores(cls, scores: Tensor) -> "ImportanceProbs":
        return cls(ad.sigmoid(scores), ad.log_sigmoid(scores), _scores=scores)

    @classmethod
    def from_probs(cls, probs: Tensor) -> "ImportanceProbs":
        # log is built on first use so distance criteria accept exact zeros
        return cls(probs)

    @property
    def log_probs(self) -> Tensor:
        if self._log is None:
            self._log = ad.log(self.probs)
        return self._log

    @property
    def log1m_probs(self) -> Tensor:
        if self._log1m is None:
            if self._scores is not None:
                self._log1m = ad.log_sigmoid(ad.neg(self._scores))
            else:
                self._log1m = ad.log(ad.sub(1.0, self.probs))
        return self._log1m


def per_instance_loss(
    criterion: Criterion | str,
    rp: ImportanceProbs,
    human: np.ndarray,
    mask: np.ndarray | None = None,
    *,
    delta: float = 1.0,
    two_term_bce: bool = False,
) -> Tensor:
    """Criterion value for every row of a (batch, n) batch; returns shape (batch,).

    ``mask`` marks real (non-padding) positions; the 1/n factors use each row's
    real length.
    """
    criterion = Criterion(criterion)
    human = np.asarray(human, dtype=np.float64)
    if human.shape != rp.probs.shape or human.ndim != 2:
        raise ad.ShapeError(f"criterion {criterion.value}", rp.probs.shape, human.shape)
    mask = np.ones_like(human) if mask is None else np.asarray(mask, dtype=np.float64)
    lengths = mask.sum(axis=-1)
    if np.any(lengths < 1):
        raise ValueError("criterion: every row needs at least one token")
    inv_n = 1.0 / lengths
    p = rp.probs

    if criterion in (Criterion.MSE, Criterion.MAE, Criterion.HUBER):
        diff = ad.sub(p, human)
        sq = ad.mul(ad.sum_(ad.mul(ad.mul(diff, diff), mask), axis=-1), inv_n)
        ab = ad.mul(ad.sum_(ad.mul(ad.abs_(diff), mask), axis=-1), inv_n)
        if criterion is Criterion.MSE:
            return sq
        if criterion is Criterion.MAE:
            return ab
        if delta <= 0:
            raise ValueError("huber: delta must be positive")
        # the branch is chosen on the whole-vector MAE, not per element
        small = (ab.data < delta).astype(np.float64)
        quad = ad.mul(sq, 0.5 * small)
        lin = ad.mul(ad.sub(ab, 0.5 * delta), delta * (1.0 - small))
        return ad.add(quad, lin)

    if criterion is Criterion.BCE:
        pos = ad.sum_(ad.mul(rp.log_probs, human * mask), axis=-1)
        total = ad.neg(pos)
        if two_term_bce:
            negterm = ad.sum_(ad.mul(rp.log1m_probs, (1.0 - human) * mask), axis=-1)
            total = ad.sub(total, negterm)
        return ad.mul(total, inv_n)

    if criterion is Criterion.KLDIV:
        with np.errstate(divide="ignore", invalid="ignore"):
            hlogh = np.where(human > 0, human * np.log(np.where(human > 0, human, 1.0)), 0.0)
        inner = ad.sub(hlogh * mask, ad.mul(rp.log_probs, human * mask))
        return ad.mul(ad.sum_(inner, axis=-1), inv_n)

    if criterion is Criterion.ORDER:
        important = human * mask
        unimportant = (1.0 - human) * mask
        has_both = ((important.sum(-1) > 0) & (unimportant.sum(-1) > 0)).astype(np.float64)
        fill = np.where(unimportant > 0, 0.0, _MASK_FILL)
        log_max_unimp = ad.max_(ad.add(rp.log_probs, fill), axis=-1)
        # rows without both groups are zeroed below; keep their denominators finite
        log_max_unimp = ad.mul(log_max_unimp, has_both)
        rows, n = human.shape
        denom = ad.broadcast_to(ad.reshape(log_max_unimp, (rows, 1)), (rows, n))
        ratio = ad.exp(ad.sub(rp.log_probs, denom))
        short = ad.relu(ad.sub(1.0, ratio))
        terms = ad.mul(ad.mul(short, short), important)
        return ad.mul(ad.sum_(terms, axis=-1), has_both)

    raise ValueError(f"unknown criterion {criterion!r}")


class ERLoss(NamedTuple):
    value: Tensor
    weighted: Tensor
    n_annotated: int

    @property
    def flagged(self) -> bool:
        return self.n_annotated == 0


def er_loss(per_instance: Tensor, annotated, lambda_er: float = 1.0) -> ERLoss:
    """Mean criterion value over annotated rows, and its ``lambda_er``-weighted contribution.

    A batch without annotated rows contributes zero and is reported as flagged.
    """
    annotated = np.asarray(annotated, dtype=bool)
    if annotated.shape != per_instance.shape:
        raise ad.ShapeError("er_loss", per_instance.shape, annotated.shape)
    count = int(annotated.sum())
    if count == 0:
        zero = Tensor(0.0)
        return ERLoss(zero, zero, 0)
    value = ad.sum_(ad.mul(per_instance, annotated.astype(np.float64) / count))
    return ERLoss(value, ad.mul(value, float(lambda_er)), count)


# ---------------------------------------------------------------------------
# scalar conveniences


def _pair(r_hat, r_dot) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(r_hat, dtype=np.float64).reshape(-1)
    b = np.asarray(r_dot, dtype=np.float64).reshape(-1)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.size} vs {b.size}")
    if a.size < 1:
        raise ValueError("empty rationale")
    return a, b


def phi(criterion: Criterion | str, r_hat, r_dot, *, delta: float = 1.0, two_term_bce: bool = False) -> Tensor:
    """Single-instance criterion as a scalar Tensor; ``r_hat`` may be a Tensor of shape (n,)."""
    criterion = Criterion(criterion)
    if isinstance(r_hat, Tensor):
        probs = ad.reshape(r_hat, (1, r_hat.size))
        _, r_dot = _pair(r_hat.data, r_dot)
    else:
        a, r_dot = _pair(r_hat, r_dot)
        probs = Tensor(a.reshape(1, -1))
    if criterion in (Criterion.BCE, Criterion.KLDIV, Criterion.ORDER) and np.any(probs.data <= 0):
        raise ValueError(f"{criterion.value}: importance probabilities must be positive")
    rp = ImportanceProbs.from_probs(probs)
    out = per_instance_loss(criterion, rp, r_dot.reshape(1, -1), delta=delta, two_term_bce=two_term_bce)
    return ad.reshape(out, ())


def mse(r_hat, r_dot) -> float:
    return phi(Criterion.MSE, r_hat, r_dot).item()


def mae(r_hat, r_dot) -> float:
    return phi(Criterion.MAE, r_hat, r_dot).item()


def huber(r_hat, r_dot, delta: float = 1.0) -> float:
    return phi(Criterion.HUBER, r_hat, r_dot, delta=delta).item()


def bce(r_hat, r_dot, two_term: bool = False) -> float:
    return phi(Criterion.BCE, r_hat, r_dot, two_term_bce=two_term).item()


def kldiv(r_hat, r_dot) -> float:
    return phi(Criterion.KLDIV, r_hat, r_dot).item()


def order_loss(r_hat, r_dot) -> float:
    return phi(Criterion.ORDER, r_hat, r_dot).item()
