"""Independent reference implementations used only by the tests.

Everything here is written with plain loops (or extended precision) and
shares no code with the package, so agreement is meaningful.
"""
import itertools
import math

import numpy as np


# -- network ---------------------------------------------------------------

def mlp_forward_loops(weights, biases, x, activation="tanh", dtype=float):
    """Forward pass with explicit loops, optionally in extended precision."""
    h = [dtype(v) for v in x]
    for k, (w, b) in enumerate(zip(weights, biases)):
        out = []
        for j in range(w.shape[0]):
            acc = dtype(b[j])
            for i in range(w.shape[1]):
                acc += dtype(w[j, i]) * h[i]
            out.append(acc)
        if k < len(weights) - 1 and activation == "tanh":
            out = [np.tanh(np.longdouble(v)) if dtype is np.longdouble else math.tanh(v)
                   for v in out]
        h = out
    return h


def mlp_param_fd(weights, biases, x, upstream, activation="tanh", h=1e-5):
    """Central differences of ``upstream . f(x)`` in ``np.longdouble``."""
    ws = [np.array(w, dtype=np.longdouble) for w in weights]
    bs = [np.array(b, dtype=np.longdouble) for b in biases]
    up = np.asarray(upstream, dtype=np.longdouble).ravel()
    step = np.longdouble(h)

    def f():
        out = mlp_forward_loops(ws, bs, x, activation, np.longdouble)
        return sum(u * o for u, o in zip(up, out))

    grads = []
    for w, b in zip(ws, bs):
        for p in (w, b):
            g = np.zeros(p.shape)
            for idx in np.ndindex(p.shape):
                orig = p[idx]
                p[idx] = orig + step
                fp = f()
                p[idx] = orig - step
                fm = f()
                p[idx] = orig
                g[idx] = float((fp - fm) / (2 * step))
            grads.append(g)
    return grads


# -- losses ----------------------------------------------------------------

def comparator_brute(scores, labels, eps):
    """Double loop over unordered pairs; ``None`` labels are skipped."""
    n = len(scores)
    loss = 0.0
    grad = [0.0] * n
    for a in range(n):
        for b in range(a + 1, n):
            oa, ob = labels[a], labels[b]
            if oa is None or ob is None or oa == ob:
                continue
            lo, hi = (a, b) if ob > oa else (b, a)
            term = scores[lo] - scores[hi] + eps
            if term > 0:
                loss += term
                grad[lo] += 1.0
                grad[hi] -= 1.0
    return loss, grad


def central_fd(f, x, h):
    x = np.array(x, dtype=float)
    g = np.zeros_like(x)
    for i in range(x.size):
        xp, xm = x.copy(), x.copy()
        xp.flat[i] += h
        xm.flat[i] -= h
        g.flat[i] = (f(xp) - f(xm)) / (2 * h)
    return g


# -- metrics ---------------------------------------------------------------

def midranks(values):
    """Average ranks by counting (1-based)."""
    out = []
    for v in values:
        less = sum(1 for u in values if u < v)
        equal = sum(1 for u in values if u == v)
        out.append(less + (equal + 1) / 2.0)
    return out


def pearson(a, b):
    n = len(a)
    ma, mb = sum(a) / n, sum(b) / n
    cov = sum((x - ma) * (y - mb) for x, y in zip(a, b))
    va = sum((x - ma) ** 2 for x in a)
    vb = sum((y - mb) ** 2 for y in b)
    return cov / math.sqrt(va * vb)


def spearman_rank_then_pearson(x, y):
    return pearson(midranks(list(x)), midranks(list(y)))


def auc_pairs(scores, labels):
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    total = 0.0
    for p in pos:
        for q in neg:
            total += 1.0 if p > q else 0.5 if p == q else 0.0
    return total / (len(pos) * len(neg))


def threshold_search(scores, labels):
    """Try every cut between sorted distinct scores plus both infinities."""
    distinct = sorted(set(scores))
    cuts = [-math.inf] + [(a + b) / 2 for a, b in zip(distinct, distinct[1:])] + [math.inf]
    best_acc, best_t = -1.0, None
    for t in cuts:
        acc = sum((s > t) == (y == 1) for s, y in zip(scores, labels)) / len(scores)
        if acc > best_acc:
            best_acc, best_t = acc, t
    return best_acc, best_t


def f1_loops(scores, labels, t):
    tp = sum(1 for s, y in zip(scores, labels) if s > t and y == 1)
    fp = sum(1 for s, y in zip(scores, labels) if s > t and y == 0)
    fn = sum(1 for s, y in zip(scores, labels) if s <= t and y == 1)
    if tp + fp == 0:
        return 0.0
    precision = tp / (tp + fp)
    recall = tp / (tp + fn) if tp + fn else 0.0
    return 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)


def permutation_p(x, y):
    rx, ry = midranks(list(x)), midranks(list(y))
    rho = pearson(rx, ry)
    hits = total = 0
    for perm in itertools.permutations(ry):
        total += 1
        hits += abs(pearson(rx, list(perm))) >= abs(rho) - 1e-12
    return hits / total
