"""Comparator loss and the baseline losses it is compared against.

All losses return gradients with respect to the model outputs (scores,
logits or prediction vectors); chaining into the network parameters is done
by :func:`comparator.model.backward`.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .ordering import LabelChannel, OrderingSystem, normalize_channel

DEFAULT_EPSILON = 1.0


class MissingLabelError(ValueError):
    pass


class PairLoss(NamedTuple):
    loss: float
    grad_a: float
    grad_b: float


@dataclass
class BatchLoss:
    """Loss over a batch plus per-sample score gradients.

    ``no_labels`` flags a batch in which nothing could be compared (every
    label missing); the loss is then zero.
    """

    loss: float
    grad: np.ndarray
    n_pairs: int = 0
    n_violations: int = 0
    no_labels: bool = False
    channels: list[str] = field(default_factory=list)

    @property
    def per_pair(self) -> float:
        return self.loss / self.n_pairs if self.n_pairs else 0.0

    def __iter__(self):
        yield self.loss
        yield self.grad


def _check_epsilon(epsilon: float) -> float:
    epsilon = float(epsilon)
    if not epsilon > 0:
        raise ValueError(f"margin epsilon must be positive, got {epsilon}")
    return epsilon


def comparator_pair_loss(
    score_a: float, score_b: float, order_a, order_b, epsilon: float = DEFAULT_EPSILON
) -> PairLoss:
    """Hinge on the score difference of one pair.

    Equal orders cost nothing.  Otherwise the pair is arranged so that ``b``
    has the higher order and the loss is ``max(f(a) - f(b) + epsilon, 0)``.
    Gradients are reported against the original argument positions; at the
    kink the flat (zero) side is taken.
    """
    if order_a is None or order_b is None:
        raise MissingLabelError("comparator pair with a missing ordinal value")
    epsilon = _check_epsilon(epsilon)
    if order_a == order_b:
        return PairLoss(0.0, 0.0, 0.0)
    if order_a > order_b:
        swapped = comparator_pair_loss(score_b, score_a, order_b, order_a, epsilon)
        return PairLoss(swapped.loss, swapped.grad_b, swapped.grad_a)
    hinge = float(score_a) - float(score_b) + epsilon
    if hinge > 0:
        return PairLoss(hinge, 1.0, -1.0)
    return PairLoss(0.0, 0.0, 0.0)


def _as_channel(labels) -> LabelChannel:
    if isinstance(labels, LabelChannel):
        return labels
    return normalize_channel(list(labels), OrderingSystem("labels"))


def comparator_batch_loss(
    scores, labels, epsilon: float = DEFAULT_EPSILON
) -> BatchLoss:
    """Sum of the comparator loss over every comparable pair in a batch.

    Parameters
    ----------
    scores : array-like, shape (n,)
    labels : LabelChannel or sequence of optional ints
        Normalised ordinals (larger = more severe).  ``None`` is missing.
    epsilon : float
        Margin.
    """
    epsilon = _check_epsilon(epsilon)
    s = np.asarray(scores, dtype=np.float64)
    ch = _as_channel(labels)
    if len(ch) != len(s):
        raise ValueError("scores and labels differ in length")
    comparable = ch.comparable()
    n_pairs = int(comparable.sum()) // 2
    if not ch.present.any():
        return BatchLoss(0.0, np.zeros_like(s), 0, 0, True, [ch.name])
    # ordered[i, j]: j outranks i, so the hinge is s_i - s_j + eps
    ordered = comparable & (ch.values[None, :] > ch.values[:, None])
    hinge = s[:, None] - s[None, :] + epsilon
    active = ordered & (hinge > 0)
    loss = float(hinge[active].sum())
    grad = active.sum(axis=1).astype(np.float64) - active.sum(axis=0)
    return BatchLoss(loss, grad, n_pairs, int(active.sum()), False, [ch.name])


def multi_ordering_loss(
    scores, channels: Sequence[LabelChannel], epsilon: float = DEFAULT_EPSILON
) -> BatchLoss:
    """Weighted mean of the comparator batch loss across label channels.

    Channels with no label present in the batch are left out of the mean.
    Weights come from each channel's ordering system (1 by default, which
    gives the plain mean).
    """
    if not channels:
        raise ValueError("multi_ordering_loss needs at least one channel")
    s = np.asarray(scores, dtype=np.float64)
    total, grad, weight_sum = 0.0, np.zeros_like(s), 0.0
    n_pairs = n_viol = 0
    used = []
    for ch in channels:
        part = comparator_batch_loss(s, ch, epsilon)
        if part.no_labels:
            continue
        w = ch.ordering.weight
        total += w * part.loss
        grad += w * part.grad
        weight_sum += w
        n_pairs += part.n_pairs
        n_viol += part.n_violations
        used.append(ch.name)
    if weight_sum == 0.0:
        warnings.warn("every label channel is missing in this batch", RuntimeWarning)
        return BatchLoss(0.0, grad, 0, 0, True, [])
    return BatchLoss(total / weight_sum, grad / weight_sum, n_pairs, n_viol, False, used)


def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out if out.ndim else float(out)


def cross_entropy_loss(logit, label):
    """Binary cross-entropy on ``sigmoid(logit)``, elementwise.

    Returns ``(loss, d loss / d logit)``; floats for scalar input.
    """
    z = np.asarray(logit, dtype=np.float64)
    y = np.asarray(label, dtype=np.float64)
    if np.any((y != 0) & (y != 1)):
        raise ValueError("cross-entropy labels must be 0 or 1")
    loss = np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))
    grad = sigmoid(z) - y
    if loss.ndim == 0:
        return float(loss), float(grad)
    return loss, grad


def contrastive_pair_loss(
    score_a: float, score_b: float, same_class: bool, margin: float = DEFAULT_EPSILON
) -> PairLoss:
    """Classic contrastive loss with a scalar embedding.

    Same-class pairs are pulled together (``0.5 d**2``); different-class
    pairs are pushed to at least ``margin`` apart
    (``0.5 max(margin - |d|, 0)**2``).
    """
    margin = _check_epsilon(margin)
    d = float(score_a) - float(score_b)
    if same_class:
        return PairLoss(0.5 * d * d, d, -d)
    gap = margin - abs(d)
    if gap <= 0:
        return PairLoss(0.0, 0.0, 0.0)
    g = -gap * float(np.sign(d))
    return PairLoss(0.5 * gap * gap, g, -g)


def contrastive_batch_loss(scores, classes, margin: float = DEFAULT_EPSILON) -> BatchLoss:
    """Contrastive loss summed over all comparable pairs in a batch."""
    margin = _check_epsilon(margin)
    s = np.asarray(scores, dtype=np.float64)
    ch = _as_channel(classes)
    comparable = np.triu(ch.comparable(), k=1)
    n_pairs = int(comparable.sum())
    if not ch.present.any():
        return BatchLoss(0.0, np.zeros_like(s), 0, 0, True, [ch.name])
    d = s[:, None] - s[None, :]
    same = ch.values[:, None] == ch.values[None, :]
    gap = np.maximum(margin - np.abs(d), 0.0)
    pair_loss = np.where(same, 0.5 * d * d, 0.5 * gap * gap)
    dpair = np.where(same, d, -gap * np.sign(d))
    pair_loss = np.where(comparable, pair_loss, 0.0)
    dpair = np.where(comparable, dpair, 0.0)
    grad = dpair.sum(axis=1) - dpair.sum(axis=0)
    n_viol = int((comparable & (pair_loss > 0)).sum())
    return BatchLoss(float(pair_loss.sum()), grad, n_pairs, n_viol, False, [ch.name])


def nrrank_targets(class_index: int, n_classes: int) -> np.ndarray:
    """Cumulative target vector: ones up to and including ``class_index``.

    >>> nrrank_targets(2, 5)
    array([1., 1., 1., 0., 0.])
    """
    if n_classes < 1 or not 0 <= class_index < n_classes:
        raise ValueError(f"class index {class_index} outside [0, {n_classes})")
    t = np.zeros(n_classes)
    t[: class_index + 1] = 1.0
    return t


NRRANK_MODES = ("mse", "relative_entropy")


def nrrank_loss(predictions, class_index: int, n_classes: int, mode: str = "mse"):
    """Compare a K-vector prediction with the cumulative target.

    ``mse`` uses the raw predictions; ``relative_entropy`` treats each
    position as an independent Bernoulli with probability
    ``sigmoid(prediction)``.  Both are averaged over positions.

    Returns ``(loss, grads)`` with ``grads`` shaped like ``predictions``.
    """
    p = np.asarray(predictions, dtype=np.float64)
    if p.shape != (n_classes,):
        raise ValueError(f"expected {n_classes} predictions, got shape {p.shape}")
    t = nrrank_targets(class_index, n_classes)
    if mode == "mse":
        r = p - t
        return float(np.mean(r * r)), 2.0 * r / n_classes
    if mode == "relative_entropy":
        loss, grad = cross_entropy_loss(p, t)
        return float(np.mean(loss)), grad / n_classes
    raise ValueError(f"unknown NRRank mode {mode!r}")


def nrrank_batch_loss(predictions, class_indices, present, n_classes: int, mode: str = "mse"):
    """Sum of :func:`nrrank_loss` over the labelled rows of a batch."""
    P = np.asarray(predictions, dtype=np.float64)
    grad = np.zeros_like(P)
    total = 0.0
    rows = np.flatnonzero(np.asarray(present, dtype=bool))
    for i in rows:
        loss, g = nrrank_loss(P[i], int(class_indices[i]), n_classes, mode)
        total += loss
        grad[i] = g
    return BatchLoss(total, grad, 0, 0, rows.size == 0)


def nrrank_score(predictions, mode: str = "mse"):
    """Scalar severity read-out of NRRank predictions (expected rank)."""
    P = np.asarray(predictions, dtype=np.float64)
    if mode == "relative_entropy":
        P = sigmoid(P)
    return P.sum(axis=-1)
