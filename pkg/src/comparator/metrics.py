"""Evaluation metrics for severity scores.

Diagnosis detection is scored with an oracle threshold (the cut that
maximises accuracy on the evaluated set itself), AUC and F1.  Agreement with
clinical labels uses Spearman correlation with mid-ranks.  Progression is the
least-squares slope of each subject's per-assessment mean score over time.
Higher scores are taken to mean MND throughout.
"""
from __future__ import annotations

import itertools
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy import stats

SIGNIFICANCE_LEVEL = 0.05


class UndefinedCorrelationError(ValueError):
    pass


def _binary(labels) -> np.ndarray:
    y = np.asarray(labels)
    if y.ndim != 1 or np.any((y != 0) & (y != 1)):
        raise ValueError("labels must be a 1-D array of 0/1")
    return y.astype(np.int64)


def _both_classes(y: np.ndarray) -> None:
    if y.size == 0 or y.min() == y.max():
        raise ValueError("both classes must be present")


class OracleThreshold(NamedTuple):
    accuracy: float
    threshold: float
    degenerate: bool


def oracle_threshold_accuracy(scores, labels) -> OracleThreshold:
    """Best achievable accuracy of the rule ``score > threshold -> positive``.

    Candidates are ``-inf``, the midpoints between consecutive distinct
    scores, and ``+inf``; on ties the lowest threshold wins.  ``degenerate``
    is set when the best rule predicts a single class for every sample.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = _binary(labels)
    if s.shape != y.shape:
        raise ValueError("scores and labels differ in length")
    _both_classes(y)
    uniq, inverse = np.unique(s, return_inverse=True)
    pos_at = np.bincount(inverse, weights=y, minlength=uniq.size)
    neg_at = np.bincount(inverse, weights=1 - y, minlength=uniq.size)
    # candidate c puts the first c distinct values on the negative side
    neg_below = np.concatenate([[0.0], np.cumsum(neg_at)])
    pos_below = np.concatenate([[0.0], np.cumsum(pos_at)])
    correct = neg_below + (y.sum() - pos_below)
    best = int(np.argmax(correct))
    if best == 0:
        thr = -math.inf
    elif best == uniq.size:
        thr = math.inf
    else:
        thr = 0.5 * (uniq[best - 1] + uniq[best])
    return OracleThreshold(float(correct[best] / y.size), float(thr), best in (0, uniq.size))


def auc(scores, labels) -> float:
    """Area under the ROC curve via the Mann-Whitney U statistic.

    Tied positive/negative pairs count one half.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = _binary(labels)
    _both_classes(y)
    ranks = stats.rankdata(s, method="average")
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    u = ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


class Confusion(NamedTuple):
    tp: int
    fp: int
    tn: int
    fn: int


def confusion_at_threshold(scores, labels, threshold: float) -> Confusion:
    s = np.asarray(scores, dtype=np.float64)
    y = _binary(labels)
    pred = s > threshold
    tp = int(np.sum(pred & (y == 1)))
    fp = int(np.sum(pred & (y == 0)))
    fn = int(np.sum(~pred & (y == 1)))
    return Confusion(tp, fp, int(y.size - tp - fp - fn), fn)


def f1_at_threshold(scores, labels, threshold: float) -> float:
    """F1 of the positive (MND) class; 0 when nothing is predicted positive."""
    c = confusion_at_threshold(scores, labels, threshold)
    denom = 2 * c.tp + c.fp + c.fn
    if c.tp + c.fp == 0 or denom == 0:
        return 0.0
    return 2.0 * c.tp / denom


def spearman(x, y) -> tuple[float, float]:
    """Spearman rank correlation with a two-sided p-value.

    Ties get mid-ranks.  The p-value uses the Student t approximation with
    ``n - 2`` degrees of freedom.
    """
    a = np.asarray(x, dtype=np.float64)
    b = np.asarray(y, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("spearman needs two 1-D sequences of equal length")
    n = a.size
    if n < 3:
        raise ValueError(f"spearman needs at least 3 points, got {n}")
    ra = stats.rankdata(a) - (n + 1) / 2.0
    rb = stats.rankdata(b) - (n + 1) / 2.0
    va, vb = ra @ ra, rb @ rb
    if va == 0 or vb == 0:
        raise UndefinedCorrelationError("correlation undefined: a variable has zero variance")
    rho = float(np.clip((ra @ rb) / math.sqrt(va * vb), -1.0, 1.0))
    if abs(rho) == 1.0:
        return rho, 0.0
    t = rho * math.sqrt((n - 2) / (1.0 - rho * rho))
    p = float(2.0 * stats.t.sf(abs(t), n - 2))
    return rho, min(p, 1.0)


def spearman_exact_p(x, y) -> float:
    """Two-sided permutation p-value over all ``n!`` orderings (n <= 10)."""
    a = np.asarray(x, dtype=np.float64)
    b = np.asarray(y, dtype=np.float64)
    n = a.size
    if n > 10:
        raise ValueError("exact permutation p-value is limited to n <= 10")
    rho, _ = spearman(a, b)
    ra = stats.rankdata(a)
    rb = stats.rankdata(b)
    ra_c = ra - ra.mean()
    norm = math.sqrt((ra_c @ ra_c) * ((rb - rb.mean()) @ (rb - rb.mean())))
    hits = total = 0
    for perm in itertools.permutations(range(n)):
        rp = rb[list(perm)]
        r = (ra_c @ (rp - rp.mean())) / norm
        hits += abs(r) >= abs(rho) - 1e-12
        total += 1
    return hits / total


@dataclass
class Progression:
    slopes: dict[str, float]
    skipped: list[str] = field(default_factory=list)


def _ols_slope(t: np.ndarray, v: np.ndarray) -> float:
    tc = t - t.mean()
    return float((tc @ (v - v.mean())) / (tc @ tc))


def progression_slopes(subject_ids, times, scores) -> Progression:
    """Per-subject slope of mean-per-assessment score against time (per day).

    Subjects with fewer than two distinct assessment times are skipped and
    listed in ``skipped``.
    """
    visits: dict[str, dict[float, list[float]]] = defaultdict(lambda: defaultdict(list))
    for sid, t, v in zip(subject_ids, times, scores):
        visits[str(sid)][float(t)].append(float(v))
    out = Progression({})
    for sid in sorted(visits):
        days = sorted(visits[sid])
        if len(days) < 2:
            out.skipped.append(sid)
            continue
        means = np.array([np.mean(visits[sid][d]) for d in days])
        out.slopes[sid] = _ols_slope(np.array(days), means)
    return out


@dataclass
class DistributionSummary:
    groups: dict[str, dict]
    bin_edges: list[float]
    omitted: list[str] = field(default_factory=list)


def score_distribution_summary(scores, groups, bins: int = 20,
                               expected_groups: Sequence | None = None) -> DistributionSummary:
    """Quantiles and a shared fixed-bin histogram per group.

    Groups listed in ``expected_groups`` but absent from ``groups`` are
    reported in ``omitted``.
    """
    s = np.asarray(scores, dtype=np.float64)
    g = np.asarray([str(v) for v in groups])
    lo, hi = (float(s.min()), float(s.max())) if s.size else (0.0, 1.0)
    if hi == lo:
        lo, hi = lo - 0.5, hi + 0.5
    edges = np.linspace(lo, hi, bins + 1)
    names = sorted(set(g.tolist()), key=_group_key)
    summary = DistributionSummary({}, edges.tolist())
    for name in names:
        v = s[g == name]
        q = np.quantile(v, [0.0, 0.25, 0.5, 0.75, 1.0])
        counts, _ = np.histogram(v, bins=edges)
        summary.groups[name] = {
            "count": int(v.size), "min": float(q[0]), "q1": float(q[1]),
            "median": float(q[2]), "q3": float(q[3]), "max": float(q[4]),
            "mean": float(v.mean()), "histogram": counts.tolist(),
        }
    if expected_groups is not None:
        summary.omitted = [str(e) for e in expected_groups if str(e) not in summary.groups]
    return summary


def _group_key(name: str):
    try:
        return (0, float(name), name)
    except ValueError:
        return (1, 0.0, name)


def bimodality_dip(scores, labels, bins: int = 20) -> float:
    """Depth of the pooled histogram between the two class medians.

    Returns the lowest bin count strictly between the medians divided by the
    smaller of the two outer peaks (the highest bin at or beyond each median);
    values well below 1 indicate a bimodal pooled distribution.  Returns 1.0
    when the medians share a bin or are adjacent.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = _binary(labels)
    _both_classes(y)
    lo, hi = float(s.min()), float(s.max())
    if hi == lo:
        return 1.0
    counts, edges = np.histogram(s, bins=bins, range=(lo, hi))
    b = np.clip(np.searchsorted(edges, [np.median(s[y == 0]), np.median(s[y == 1])],
                                side="right") - 1, 0, bins - 1)
    b0, b1 = sorted(b.tolist())
    if b1 - b0 < 2:
        return 1.0
    ref = min(counts[:b0 + 1].max(), counts[b1:].max())
    if ref == 0:
        return 1.0
    return float(counts[b0 + 1:b1].min() / ref)
