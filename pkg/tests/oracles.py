"""Independent reference implementations used by the metric tests."""

import itertools
import math

import numpy as np


def ari_pair_count(t, p):
    """ARI from agree/disagree pair counts (Hubert and Arabie form)."""
    a = b = c = d = 0
    for i, j in itertools.combinations(range(len(t)), 2):
        st, sp = t[i] == t[j], p[i] == p[j]
        if st and sp:
            a += 1
        elif st:
            b += 1
        elif sp:
            c += 1
        else:
            d += 1
    den = (a + b) * (b + d) + (a + c) * (c + d)
    if den == 0:
        return 1.0
    return 2.0 * (a * d - b * c) / den


def set_partitions(n, max_blocks=3):
    """Every labeling of n points with at most max_blocks labels, one per
    partition (restricted-growth strings)."""
    out = []

    def grow(prefix, used):
        if len(prefix) == n:
            out.append(tuple(prefix))
            return
        for lab in range(min(used + 1, max_blocks)):
            grow(prefix + [lab], max(used, lab + 1))

    grow([], 0)
    return out


def silhouette_naive(x, labels):
    x = np.asarray(x, dtype=float)
    labels = list(labels)
    n = len(labels)
    groups = {}
    for i, lab in enumerate(labels):
        groups.setdefault(lab, []).append(i)
    total = 0.0
    for i in range(n):
        own = groups[labels[i]]
        if len(own) == 1:
            continue
        dist = [math.dist(x[i], x[j]) for j in range(n)]
        a = sum(dist[j] for j in own if j != i) / (len(own) - 1)
        b = min(sum(dist[j] for j in idx) / len(idx) for lab, idx in groups.items() if lab != labels[i])
        total += (b - a) / max(a, b)
    return total / n
