"""Slow, direct reference implementations used only as test oracles."""

import itertools
from math import factorial

import numpy as np


def brute_complete_linkage(D):
    """Complete linkage over explicit member sets, O(n^3) per merge.

    Returns the merge heights and, for every k, the partition as a set of
    frozensets. Ties go to the pair with the lowest (min member, min member).
    """
    n = len(D)
    clusters = [frozenset([i]) for i in range(n)]
    heights, partitions = [], {n: set(clusters)}
    while len(clusters) > 1:
        best = None
        for a, b in itertools.combinations(range(len(clusters)), 2):
            d = max(D[i][j] for i in clusters[a] for j in clusters[b])
            key = (d, *sorted((min(clusters[a]), min(clusters[b]))))
            if best is None or key < best[0]:
                best = (key, a, b)
        (d, _, _), a, b = best
        merged = clusters[a] | clusters[b]
        clusters = [c for i, c in enumerate(clusters) if i not in (a, b)] + [merged]
        heights.append(d)
        partitions[len(clusters)] = set(clusters)
    return heights, partitions


def labels_to_partition(labels):
    groups = {}
    for i, l in enumerate(labels):
        groups.setdefault(l, set()).add(i)
    return {frozenset(g) for g in groups.values()}


def brute_silhouette(D, labels):
    n = len(labels)
    s = []
    for i in range(n):
        own = [j for j in range(n) if labels[j] == labels[i] and j != i]
        if not own:
            s.append(0.0)
            continue
        a = sum(D[i][j] for j in own) / len(own)
        b = min(sum(D[i][j] for j in range(n) if labels[j] == c) / sum(1 for j in range(n) if labels[j] == c)
                for c in set(labels) if c != labels[i])
        s.append(0.0 if max(a, b) == 0 else (b - a) / max(a, b))
    return sum(s) / n


def tree_value(tree, x):
    while not tree.is_leaf:
        tree = tree.left if x[tree.feature] <= tree.threshold else tree.right
    return tree.value


def brute_shapley(f, m):
    """Shapley values of a set function ``f(frozenset) -> float`` over ``m`` players."""
    phi = np.zeros(m)
    for i in range(m):
        others = [j for j in range(m) if j != i]
        for r in range(m):
            w = factorial(r) * factorial(m - r - 1) / factorial(m)
            for S in itertools.combinations(others, r):
                S = frozenset(S)
                phi[i] += w * (f(S | {i}) - f(S))
    return phi


def interventional_game(model, x, background):
    """``v(S) = mean_b f(x_S, b_rest)`` with the model's own predict."""
    x = np.asarray(x, float)
    bg = np.asarray(background, float)

    def v(S):
        rows = bg.copy()
        idx = list(S)
        rows[:, idx] = x[idx]
        return float(np.mean(model.predict(rows)))
    return v
