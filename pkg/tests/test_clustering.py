import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.cluster.hierarchy import linkage
from scipy.spatial.distance import squareform
from sklearn.metrics import silhouette_score as sk_silhouette

from ixdrl.clustering import (ClusterAssignment, CompleteLinkageClustering, agglomerate, best_assignment,
                              cluster_purity, cluster_report, cluster_traces, cut, cut_and_score,
                              pairwise_distances, silhouette_samples, silhouette_score, trace_features)

from .oracles import brute_complete_linkage, brute_silhouette, labels_to_partition


def test_distance_example():
    D = pairwise_distances(np.array([[0.0, 0.0], [3.0, 4.0]]))
    assert D[0, 1] == 5.0 and D[1, 0] == 5.0


def test_merge_heights_example():
    D = pairwise_distances(np.array([[0.0], [1.0], [10.0]]))
    dg = agglomerate(D)
    assert [m[2] for m in dg.merges] == [1.0, 10.0]
    assert dg.merges[0][:2] == (0, 1)
    assert dg.merges[1][:2] == (2, 3)
    assert dg.merges[1][3] == 3


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 14), st.integers(0, 2 ** 32 - 1))
def test_matches_brute_force(n, seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, 3))
    if rng.random() < 0.3:
        X = np.round(X)       # integer grid: many tied distances
    D = pairwise_distances(X)
    dg = agglomerate(D)
    heights, partitions = brute_complete_linkage(D)
    assert np.allclose([m[2] for m in dg.merges], heights, atol=1e-12)
    for k in range(1, n + 1):
        assert labels_to_partition(cut(dg, k)) == partitions[k]


@settings(max_examples=30, deadline=None)
@given(st.integers(3, 40), st.integers(0, 2 ** 32 - 1))
def test_heights_match_scipy(n, seed):
    X = np.random.default_rng(seed).normal(size=(n, 4))
    D = pairwise_distances(X)
    Z = linkage(squareform(D, checks=False), method="complete")
    assert np.allclose([m[2] for m in agglomerate(D).merges], Z[:, 2], atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(3, 30), st.integers(0, 2 ** 32 - 1))
def test_silhouette_matches_oracles(n, seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, 2))
    D = pairwise_distances(X)
    k = int(rng.integers(2, n))
    labels = cut(agglomerate(D), k)
    s = silhouette_score(D, labels)
    assert s == pytest.approx(brute_silhouette(D, labels), abs=1e-12)
    assert s == pytest.approx(sk_silhouette(D, labels, metric="precomputed"), abs=1e-12)


def test_singleton_silhouette_is_zero():
    D = pairwise_distances(np.array([[0.0], [0.1], [5.0]]))
    s = silhouette_samples(D, [0, 0, 1])
    assert s[2] == 0.0
    assert s[0] > 0.9


def test_silhouette_needs_two_clusters():
    with pytest.raises(ValueError):
        silhouette_score(np.zeros((3, 3)), [0, 0, 0])


def test_separated_blobs_score_near_one():
    rng = np.random.default_rng(0)
    X = np.vstack([rng.normal(c, 0.01, size=(20, 2)) for c in ((0, 0), (10, 0), (0, 10))])
    model = CompleteLinkageClustering(k_range=range(2, 8)).fit(X)
    assert model.best_k_ == 3
    assert max(a.silhouette for a in model.assignments_) > 0.99
    assert cluster_purity(model.labels_, np.repeat([0, 1, 2], 20)) == 1.0


def test_label_permutation_invariance():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(25, 3))
    D = pairwise_distances(X)
    labels = cut(agglomerate(D), 4)
    perm = np.array([3, 0, 2, 1])
    assert silhouette_score(D, perm[labels]) == pytest.approx(silhouette_score(D, labels), abs=1e-15)
    assert cluster_purity(perm[labels], labels) == 1.0


def test_row_order_invariance_of_partition():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(30, 2))
    order = rng.permutation(30)
    a = labels_to_partition(cut(agglomerate(pairwise_distances(X)), 5))
    b = labels_to_partition(cut(agglomerate(pairwise_distances(X[order])), 5))
    assert {frozenset(order[list(g)]) for g in b} == a


def test_cut_labels_by_first_appearance():
    D = pairwise_distances(np.array([[10.0], [0.0], [10.1], [0.1]]))
    assert cut(agglomerate(D), 2).tolist() == [0, 1, 0, 1]


def test_purity_examples():
    assert cluster_purity([0, 0, 1, 1], ["a", "a", "b", "b"]) == 1.0
    assert cluster_purity([0, 0, 0, 0], ["a", "a", "b", "b"]) == 0.5
    assert cluster_purity([0, 1, 2, 3], ["a", "a", "b", "b"]) == 1.0
    assert cluster_purity([0, 0, 1, 1], ["a", "b", "a", "b"]) == 0.5


def test_best_assignment_prefers_smaller_k_on_ties():
    a = [ClusterAssignment(3, {}, 0.5), ClusterAssignment(2, {}, 0.5), ClusterAssignment(4, {}, 0.4)]
    assert best_assignment(a).k == 2


def test_k_range_validation():
    dg = agglomerate(pairwise_distances(np.arange(5.0)[:, None]))
    D = pairwise_distances(np.arange(5.0)[:, None])
    with pytest.raises(ValueError):
        cut_and_score(dg, D, [])
    with pytest.raises(ValueError):
        cut_and_score(dg, D, [1, 2])
    with pytest.raises(ValueError):
        cut_and_score(dg, D, [9])
    assert [a.k for a in cut_and_score(dg, D, range(2, 16))] == [2, 3, 4, 5]


def test_invalid_distance_matrix():
    with pytest.raises(ValueError):
        agglomerate(np.array([[0.0, 1.0], [2.0, 0.0]]))
    with pytest.raises(ValueError):
        agglomerate(np.zeros((1, 1)))
    with pytest.raises(ValueError):
        pairwise_distances(np.zeros((1, 3)))


def test_dendrogram_linkage_matches_scipy_format():
    X = np.random.default_rng(3).normal(size=(12, 2))
    Z = agglomerate(pairwise_distances(X)).as_linkage()
    ref = linkage(X, method="complete")
    assert Z.shape == ref.shape
    assert np.allclose(Z[:, 2:], ref[:, 2:])


def test_cluster_traces_and_report(grid_traces, grid_records):
    feats, model = cluster_traces(grid_records, k_range=range(2, 6))
    assert len(feats) == len(grid_traces)
    assert feats[0].dimensions[0] == "value"
    ids = [f.trace_id for f in feats]
    best = next(a for a in model.assignments_ if a.k == model.best_k_)
    assignment = ClusterAssignment(best.k, dict(zip(ids, model.labels_.tolist())), best.silhouette)
    report = cluster_report(assignment, grid_traces, grid_records)
    assert report["size"].sum() == len(grid_traces)
    assert {"score_mean", "length_std", "value"} <= set(report.columns)


def test_report_requires_all_traces(grid_traces):
    with pytest.raises(ValueError, match="lacks"):
        cluster_report(ClusterAssignment(2, {}, 0.0), grid_traces)


def test_trace_features_are_means(grid_records):
    feats = trace_features(grid_records)
    tid = feats[0].trace_id
    vals = [r.values["value"] for r in grid_records if r.trace_id == tid]
    assert feats[0].means[0] == pytest.approx(np.mean(vals))


def test_estimator_fixed_k():
    X = np.random.default_rng(4).normal(size=(20, 2))
    m = CompleteLinkageClustering(n_clusters=5).fit(X)
    assert len(set(m.labels_)) == 5
    assert list(m.silhouette_table()["k"]) == list(range(2, 16))
