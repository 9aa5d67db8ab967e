import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.cluster.hierarchy import fcluster, linkage as scipy_linkage
from scipy.spatial.distance import pdist, squareform
from sklearn.metrics import normalized_mutual_info_score

from meanquant.cluster import (
    ClusterLabels,
    kmeans_vectors,
    linf_distances,
    linkage,
    minimum_spanning_edges,
    nmi,
    read_labels_csv,
    single_linkage,
    write_labels_csv,
)
from meanquant.errors import BadThreshold, ConfigError, DataError, LengthMismatch


def same_partition(a, b):
    return ClusterLabels.canonical(a) == ClusterLabels.canonical(b)


def test_linf_examples():
    assert np.all(linf_distances(np.ones((3, 2))) == 0)
    d = linf_distances(np.array([[0.0, 0.0], [1.0, 3.0]]))
    np.testing.assert_array_equal(d, [[0, 3], [3, 0]])


@given(st.integers(0, 10**6), st.integers(1, 12), st.integers(1, 5))
@settings(max_examples=40, deadline=None)
def test_linf_matches_scipy(seed, n, k):
    x = np.random.default_rng(seed).normal(size=(n, k))
    np.testing.assert_array_equal(linf_distances(x), squareform(pdist(x, "chebyshev")))


def four_point():
    # {0, 1} and {2, 3}: within 0.1 / 0.2, across >= 0.9
    return np.array([
        [0.0, 0.1, 0.9, 1.0],
        [0.1, 0.0, 1.0, 1.1],
        [0.9, 1.0, 0.0, 0.2],
        [1.0, 1.1, 0.2, 0.0],
    ])


def test_single_linkage_examples():
    d = four_point()
    assert single_linkage(d, tau=0.5).assignments == (1, 1, 2, 2)
    assert single_linkage(d, tau=1.1).n_clusters == 1
    assert single_linkage(d, tau=0.05).n_clusters == 4
    assert single_linkage(d, n_clusters=2).assignments == (1, 1, 2, 2)
    # chaining: 0.1 and 0.2 edges join, MST cross edge is 0.9
    assert single_linkage(d, tau=0.9).n_clusters == 1


def test_single_linkage_errors():
    d = four_point()
    with pytest.raises(BadThreshold):
        single_linkage(d, tau=-0.1)
    with pytest.raises(ConfigError):
        single_linkage(d)
    with pytest.raises(ConfigError):
        single_linkage(d, tau=0.1, n_clusters=2)
    with pytest.raises(ConfigError):
        single_linkage(d, n_clusters=5)
    with pytest.raises(DataError):
        single_linkage(np.array([[0.0, 1.0], [2.0, 0.0]]), tau=1.0)


@given(st.integers(0, 10**6), st.integers(2, 15), st.floats(0.0, 3.0))
@settings(max_examples=60, deadline=None)
def test_single_linkage_matches_scipy(seed, n, tau):
    x = np.random.default_rng(seed).normal(size=(n, 3))
    d = squareform(pdist(x, "chebyshev"))
    ref = fcluster(scipy_linkage(pdist(x, "chebyshev"), "single"), tau, criterion="distance")
    assert same_partition(single_linkage(d, tau=tau).assignments, ref)
    for L in range(1, n + 1):
        ref = fcluster(scipy_linkage(pdist(x, "chebyshev"), "single"), L, criterion="maxclust")
        assert same_partition(single_linkage(d, n_clusters=L).assignments, ref)


@given(st.integers(0, 10**6), st.integers(2, 12))
@settings(max_examples=40, deadline=None)
def test_linkage_heights_match_scipy(seed, n):
    x = np.random.default_rng(seed).normal(size=(n, 2))
    ours = linkage(squareform(pdist(x))).heights
    ref = scipy_linkage(pdist(x), "single")[:, 2]
    np.testing.assert_allclose(ours, ref, rtol=0, atol=0)


def test_linkage_ties_are_lexicographic():
    d = np.ones((4, 4)) - np.eye(4)
    edges = minimum_spanning_edges(d)
    assert [(i, j) for _, i, j in edges] == [(0, 1), (0, 2), (0, 3)]
    res = linkage(d)
    assert res.merges[0] == (0, 1, 1.0) and res.merges[1] == (2, 4, 1.0)


def test_kmeans_examples():
    x = np.random.default_rng(0).normal(size=(7, 3))
    assert kmeans_vectors(x, 1, restarts=3).n_clusters == 1
    assert kmeans_vectors(x, 7, restarts=3).n_clusters == 7
    with pytest.raises(ConfigError):
        kmeans_vectors(x, 8)


def brute_force_partition(x, L):
    best, arg = np.inf, None
    for lab in itertools.product(range(L), repeat=x.shape[0]):
        lab = np.array(lab)
        if len(set(lab)) != L:
            continue
        cost = sum(np.sum((x[lab == j] - x[lab == j].mean(axis=0)) ** 2) for j in range(L))
        if cost < best:
            best, arg = cost, lab
    return arg


def test_kmeans_planted_blobs():
    x = np.array([[0, 0], [0.2, 0.1], [0.1, 0.3], [10, 10], [10.2, 9.9], [9.8, 10.1]])
    ref = brute_force_partition(x, 2)
    assert same_partition(ref, [0, 0, 0, 1, 1, 1])
    assert same_partition(kmeans_vectors(x, 2, restarts=10).assignments, ref)


@pytest.mark.parametrize("seed", range(10))
def test_kmeans_reaches_exhaustive_optimum_on_small_inputs(seed):
    x = np.random.default_rng(seed).normal(size=(7, 2))
    ref = brute_force_partition(x, 3)
    got = np.array(kmeans_vectors(x, 3, restarts=50, seed=seed).assignments)

    def cost(lab):
        return sum(np.sum((x[lab == j] - x[lab == j].mean(axis=0)) ** 2) for j in set(lab))

    assert cost(got) == pytest.approx(cost(ref), rel=1e-12)


def test_kmeans_deterministic():
    x = np.random.default_rng(3).normal(size=(30, 4))
    assert kmeans_vectors(x, 3, seed=9).assignments == kmeans_vectors(x, 3, seed=9).assignments


def test_nmi_examples():
    assert nmi((1, 1, 2, 2, 3), (2, 2, 3, 3, 1)) == 1.0
    assert nmi((1, 1, 2, 2), (1, 1, 1, 1)) == 0.0
    assert nmi((1, 1, 1), (2, 2, 2)) == 1.0
    assert nmi((1, 1, 2, 2), (1, 2, 1, 2)) == 0.0
    with pytest.raises(LengthMismatch):
        nmi((1, 2), (1, 2, 3))


@given(st.lists(st.tuples(st.integers(1, 4), st.integers(1, 4)), min_size=2, max_size=40))
def test_nmi_matches_sklearn(pairs):
    a, b = zip(*pairs)
    ours = nmi(a, b)
    ref = normalized_mutual_info_score(a, b, average_method="geometric")
    assert 0.0 <= ours <= 1.0
    assert ours == pytest.approx(ref, abs=1e-12)
    assert nmi(b, a) == pytest.approx(ours, abs=1e-15)


def test_canonical_labels():
    assert ClusterLabels.canonical([7, 7, 3, 9, 3]).assignments == (1, 1, 2, 3, 2)
    assert ClusterLabels.canonical(np.array([2, 0])).assignments == (1, 2)


def test_labels_csv_roundtrip(tmp_path):
    lab = ClusterLabels((1, 2, 2, 3))
    path = tmp_path / "l.csv"
    write_labels_csv(lab, path)
    assert read_labels_csv(path) == (1, 2, 2, 3)
    path.write_text("cluster\nx\n")
    with pytest.raises(DataError):
        read_labels_csv(path)
