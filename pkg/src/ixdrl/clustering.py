"""Trace clustering on mean interestingness.

Traces are summarised by the mean of each interestingness dimension, compared
with Euclidean distances and merged bottom-up with complete linkage. Flat
partitions for a range of cluster counts are scored with the silhouette
coefficient. Nothing here looks at trace metadata; outcome statistics are
joined afterwards in :func:`cluster_report`.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np
import pandas as pd
from sklearn.base import BaseEstimator, ClusterMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .analysis import InterestingnessRecord, interestingness_profile, record_columns, split_factor_key
from .traces import TraceSet

logger = logging.getLogger(__name__)

DEFAULT_K_RANGE = range(2, 16)


@dataclass(frozen=True)
class TraceFeatureVector:
    trace_id: str
    dimensions: tuple
    means: tuple


@dataclass(frozen=True)
class Dendrogram:
    """Merge history. Leaves are ``0..n-1``; merge ``i`` creates node ``n + i``.

    Each merge is ``(left, right, distance, size)`` with ``left < right``.
    """

    n_leaves: int
    merges: tuple

    def __post_init__(self):
        if len(self.merges) != max(self.n_leaves - 1, 0):
            raise ValueError("a dendrogram over n leaves has n - 1 merges")

    def as_linkage(self) -> np.ndarray:
        """SciPy-style ``(n-1, 4)`` linkage matrix."""
        return np.array([[l, r, d, s] for l, r, d, s in self.merges], dtype=float).reshape(-1, 4)

    def to_dict(self) -> dict:
        return {"n_leaves": self.n_leaves,
                "merges": [{"left": l, "right": r, "distance": d, "size": s}
                           for l, r, d, s in self.merges]}


@dataclass(frozen=True)
class ClusterAssignment:
    k: int
    labels: Mapping[str, int]
    silhouette: float


# -- features & distances -----------------------------------------------------

def trace_features(records: Sequence[InterestingnessRecord],
                   include_factors: bool = False) -> list[TraceFeatureVector]:
    """Per-trace mean of every dimension present in all traces."""
    by_trace: dict[str, list[InterestingnessRecord]] = {}
    for r in records:
        by_trace.setdefault(r.trace_id, []).append(r)
    if not by_trace:
        raise ValueError("no records")
    cols = [c for c in record_columns(records)
            if include_factors or split_factor_key(c)[1] is None]
    common = [c for c in cols if all(any(r.get(c) is not None for r in rs) for rs in by_trace.values())]
    if not common:
        raise ValueError("no interestingness dimension is shared by all traces")
    out = []
    for tid, rs in by_trace.items():
        means = []
        for c in common:
            xs = [v for v in (r.get(c) for r in rs) if v is not None]
            means.append(float(np.mean(xs)))
        out.append(TraceFeatureVector(tid, tuple(common), tuple(means)))
    return out


def feature_matrix(features: Sequence[TraceFeatureVector]) -> np.ndarray:
    dims = {f.dimensions for f in features}
    if len(dims) != 1:
        raise ValueError("trace feature vectors disagree on dimensions")
    return np.array([f.means for f in features], dtype=float)


def pairwise_distances(X) -> np.ndarray:
    """Euclidean distance matrix between rows of ``X`` (or feature vectors)."""
    if len(X) and isinstance(X[0], TraceFeatureVector):
        X = feature_matrix(X)
    X = check_array(X, dtype=float)
    if X.shape[0] < 2:
        raise ValueError("need at least two traces")
    sq = np.sum((X[:, None, :] - X[None, :, :]) ** 2, axis=-1)
    D = np.sqrt(sq)
    np.fill_diagonal(D, 0.0)
    return D


# -- complete linkage ---------------------------------------------------------

def agglomerate(dist) -> Dendrogram:
    """Complete-linkage agglomeration of a distance matrix.

    Each round merges the pair of active clusters with the smallest
    maximum-member distance. Ties go to the pair whose smallest member indices
    are lexicographically lowest.
    """
    D = np.array(dist, dtype=float)
    n = D.shape[0]
    if D.ndim != 2 or D.shape[1] != n:
        raise ValueError("distance matrix must be square")
    if n < 2:
        raise ValueError("need at least two items to cluster")
    if not np.allclose(D, D.T) or np.any(np.diag(D) != 0) or np.any(D < 0):
        raise ValueError("distance matrix must be symmetric, non-negative, zero on the diagonal")
    # slot i holds the cluster whose smallest member is i
    active = np.ones(n, dtype=bool)
    node = np.arange(n)
    size = np.ones(n, dtype=int)
    work = D.copy()
    work[np.diag_indices(n)] = np.inf
    merges = []
    for step in range(n - 1):
        flat = int(np.argmin(work))          # row-major: lowest (i, j) among ties
        i, j = divmod(flat, n)
        if i > j:
            i, j = j, i
        d = float(work[i, j])
        a, b = int(node[i]), int(node[j])
        merges.append((min(a, b), max(a, b), d, int(size[i] + size[j])))
        merged = np.maximum(work[i], work[j])
        work[i, :] = merged
        work[:, i] = merged
        work[i, i] = np.inf
        work[j, :] = np.inf
        work[:, j] = np.inf
        active[j] = False
        node[i] = n + step
        size[i] += size[j]
    return Dendrogram(n, tuple(merges))


def cut(dendrogram: Dendrogram, k: int) -> np.ndarray:
    """Flat partition into ``k`` clusters, labelled by first appearance (leaf order)."""
    n = dendrogram.n_leaves
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in [1, {n}]")
    parent = list(range(2 * n - 1))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for step, (l, r, _, _) in enumerate(dendrogram.merges[: n - k]):
        parent[find(l)] = n + step
        parent[find(r)] = n + step
    roots = [find(i) for i in range(n)]
    relabel: dict[int, int] = {}
    return np.array([relabel.setdefault(rt, len(relabel)) for rt in roots], dtype=int)


def silhouette_samples(dist, labels) -> np.ndarray:
    """Per-item silhouette ``(b - a) / max(a, b)``; items in singleton clusters score 0."""
    D = np.asarray(dist, dtype=float)
    labels = np.asarray(labels)
    uniq, inv = np.unique(labels, return_inverse=True)
    n, k = len(labels), len(uniq)
    onehot = np.zeros((n, k))
    onehot[np.arange(n), inv] = 1.0
    sizes = onehot.sum(axis=0)
    sums = D @ onehot                                   # (n, k) distance sums to each cluster
    own = sizes[inv]
    a = np.where(own > 1, sums[np.arange(n), inv] / np.maximum(own - 1, 1), 0.0)
    mean_other = sums / sizes[None, :]
    mean_other[np.arange(n), inv] = np.inf
    b = mean_other.min(axis=1) if k > 1 else np.zeros(n)
    denom = np.maximum(a, b)
    s = np.where((own > 1) & (denom > 0), (b - a) / np.where(denom > 0, denom, 1.0), 0.0)
    return s


def silhouette_score(dist, labels) -> float:
    labels = np.asarray(labels)
    if len(np.unique(labels)) < 2:
        raise ValueError("silhouette needs at least two clusters")
    return float(np.mean(silhouette_samples(dist, labels)))


def cut_and_score(dendrogram: Dendrogram, dist, k_range: Iterable[int] = DEFAULT_K_RANGE,
                  trace_ids: Sequence[str] | None = None) -> list[ClusterAssignment]:
    """One scored flat partition per ``k`` (values above ``n`` are skipped)."""
    n = dendrogram.n_leaves
    ks = [k for k in k_range]
    if not ks:
        raise ValueError("empty k range")
    if any(k < 2 for k in ks):
        raise ValueError("k must be at least 2")
    ids = list(trace_ids) if trace_ids is not None else [str(i) for i in range(n)]
    out = []
    for k in ks:
        if k > n:
            continue
        labels = cut(dendrogram, k)
        out.append(ClusterAssignment(k, dict(zip(ids, labels.tolist())), silhouette_score(dist, labels)))
    if not out:
        raise ValueError(f"no k in range is <= {n}")
    return out


def best_assignment(assignments: Sequence[ClusterAssignment]) -> ClusterAssignment:
    """Highest silhouette; ties go to the smaller ``k``."""
    return max(assignments, key=lambda a: (a.silhouette, -a.k))


class CompleteLinkageClustering(ClusterMixin, BaseEstimator):
    """Agglomerative complete-linkage clustering with silhouette model selection.

    Parameters
    ----------
    n_clusters : int, optional
        Fixed number of clusters for ``labels_``. When None the
        silhouette-optimal ``k`` within ``k_range`` is used.
    k_range : iterable of int, default=range(2, 16)
        Cluster counts to score.

    Attributes
    ----------
    distances_ : ndarray of shape (n_samples, n_samples)
    dendrogram_ : Dendrogram
    assignments_ : list of ClusterAssignment
        Every scored partition, in ``k_range`` order.
    best_k_ : int
        Silhouette-optimal cluster count.
    labels_ : ndarray of shape (n_samples,)
    """

    def __init__(self, n_clusters: int | None = None, k_range=DEFAULT_K_RANGE):
        self.n_clusters = n_clusters
        self.k_range = k_range

    def fit(self, X, y=None):
        X = check_array(X, dtype=float)
        self.n_features_in_ = X.shape[1]
        self.distances_ = pairwise_distances(X)
        self.dendrogram_ = agglomerate(self.distances_)
        self.assignments_ = cut_and_score(self.dendrogram_, self.distances_, self.k_range)
        self.best_k_ = best_assignment(self.assignments_).k
        k = self.best_k_ if self.n_clusters is None else int(self.n_clusters)
        self.labels_ = cut(self.dendrogram_, k)
        return self

    def silhouette_table(self) -> pd.DataFrame:
        check_is_fitted(self, "assignments_")
        return pd.DataFrame({"k": [a.k for a in self.assignments_],
                             "silhouette": [a.silhouette for a in self.assignments_]})


def cluster_traces(records: Sequence[InterestingnessRecord], k_range=DEFAULT_K_RANGE,
                   n_clusters: int | None = None):
    """Cluster traces from records alone; returns ``(features, fitted estimator)``."""
    feats = trace_features(records)
    model = CompleteLinkageClustering(n_clusters=n_clusters, k_range=k_range).fit(feature_matrix(feats))
    return feats, model


# -- reporting ---------------------------------------------------------------

def cluster_purity(labels: Sequence[int], truth: Sequence) -> float:
    """Fraction of items whose cluster's majority class equals their own class."""
    labels = np.asarray(labels)
    truth = np.asarray(truth)
    hits = 0
    for c in np.unique(labels):
        _, counts = np.unique(truth[labels == c], return_counts=True)
        hits += counts.max()
    return hits / len(labels)


def cluster_report(assignment: ClusterAssignment, ts: TraceSet,
                   records: Sequence[InterestingnessRecord] | None = None) -> pd.DataFrame:
    """Per-cluster size, mean and std of numeric trace metadata, and mean interestingness."""
    missing = [t.trace_id for t in ts if t.trace_id not in assignment.labels]
    if missing:
        raise ValueError(f"assignment lacks traces {missing[:5]}")
    meta_keys: list[str] = []
    for t in ts:
        for key, v in t.metadata.items():
            if isinstance(v, (int, float)) and not isinstance(v, bool) and key not in meta_keys \
                    and key not in ("seed", "index", "env_index"):
                meta_keys.append(key)
    kept = []
    for key in meta_keys:
        if all(key in t.metadata for t in ts):
            kept.append(key)
        else:
            warnings.warn(f"metadata field {key!r} missing for some traces; column omitted")
    rows = []
    clusters = sorted(set(assignment.labels[t.trace_id] for t in ts))
    for c in clusters:
        members = [t for t in ts if assignment.labels[t.trace_id] == c]
        row = {"cluster": c, "size": len(members)}
        for key in kept:
            xs = np.array([float(t.metadata[key]) for t in members])
            row[f"{key}_mean"] = xs.mean()
            row[f"{key}_std"] = xs.std()
        if records is not None:
            ids = {t.trace_id for t in members}
            prof = interestingness_profile([r for r in records if r.trace_id in ids], include_factors=False)
            for dim, (m, _) in prof.items():
                row[dim] = m
        rows.append(row)
    return pd.DataFrame(rows)
