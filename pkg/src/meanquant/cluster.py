"""Clustering of embedded measures and agreement scores."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import BadThreshold, ConfigError, DataError, LengthMismatch
from .quantization import _kmeanspp_arrays, assign


@dataclass(frozen=True)
class ClusterLabels:
    """Cluster assignments 1..n_clusters, numbered by first appearance."""

    assignments: tuple

    @classmethod
    def canonical(cls, raw) -> "ClusterLabels":
        mapping: dict = {}
        out = []
        for z in raw:
            z = z.item() if hasattr(z, "item") else z
            if z not in mapping:
                mapping[z] = len(mapping) + 1
            out.append(mapping[z])
        return cls(tuple(out))

    @property
    def n(self) -> int:
        return len(self.assignments)

    @property
    def n_clusters(self) -> int:
        return len(set(self.assignments))

    def __len__(self) -> int:
        return self.n


@dataclass(frozen=True)
class LinkageResult:
    """Merges (cluster_a, cluster_b, height) in non-decreasing height order.

    Cluster ids follow the scipy convention: 0..n-1 are singletons and merge
    number t creates cluster n + t.
    """

    merges: tuple
    n: int

    @property
    def heights(self) -> np.ndarray:
        return np.array([h for _, _, h in self.merges])


def _rows(e) -> np.ndarray:
    return np.asarray(getattr(e, "rows", e), dtype=np.float64)


def linf_distances(e) -> np.ndarray:
    """Pairwise max-coordinate distances between embedding rows."""
    x = _rows(e)
    n = x.shape[0]
    out = np.zeros((n, n))
    for i in range(n):
        out[i] = np.max(np.abs(x - x[i]), axis=1) if x.shape[1] else 0.0
    return out


class _UnionFind:
    def __init__(self, n):
        self.parent = list(range(n))

    def find(self, a):
        while self.parent[a] != a:
            self.parent[a] = self.parent[self.parent[a]]
            a = self.parent[a]
        return a

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        self.parent[max(ra, rb)] = min(ra, rb)
        return True


def _check_dist(dist) -> np.ndarray:
    d = np.asarray(dist, dtype=np.float64)
    if d.ndim != 2 or d.shape[0] != d.shape[1]:
        raise DataError("distance matrix must be square")
    if np.any(d < 0) or not np.allclose(d, d.T, rtol=0, atol=0) or np.any(np.diag(d) != 0):
        raise DataError("distance matrix must be symmetric, non-negative, zero on the diagonal")
    return d


def minimum_spanning_edges(dist) -> list:
    """Kruskal MST as a list of (weight, i, j) with i < j.

    Edges of equal weight are taken in lexicographic (i, j) order.
    """
    d = _check_dist(dist)
    n = d.shape[0]
    iu, ju = np.triu_indices(n, k=1)
    w = d[iu, ju]
    order = np.argsort(w, kind="stable")
    uf = _UnionFind(n)
    edges = []
    for e in order:
        i, j = int(iu[e]), int(ju[e])
        if uf.union(i, j):
            edges.append((float(w[e]), i, j))
            if len(edges) == n - 1:
                break
    return edges


def linkage(dist) -> LinkageResult:
    """Single-linkage merge sequence built from the minimum spanning tree."""
    d = _check_dist(dist)
    n = d.shape[0]
    uf = _UnionFind(n)
    cid = list(range(n))  # cluster id currently held by each union-find root
    merges = []
    for h, i, j in minimum_spanning_edges(d):
        ri, rj = uf.find(i), uf.find(j)
        a, b = sorted((cid[ri], cid[rj]))
        uf.union(ri, rj)
        cid[uf.find(i)] = n + len(merges)
        merges.append((a, b, h))
    return LinkageResult(tuple(merges), n)


def single_linkage(dist, tau: float | None = None, n_clusters: int | None = None) -> ClusterLabels:
    """Single-linkage clustering cut by threshold or by cluster count.

    With ``tau``, points joined by a chain of steps of length <= tau share a
    cluster. With ``n_clusters`` = L, the L - 1 heaviest MST edges are cut
    (ties resolved by the lexicographic edge order).
    """
    if (tau is None) == (n_clusters is None):
        raise ConfigError("give exactly one of tau and n_clusters")
    if tau is not None and tau < 0:
        raise BadThreshold(f"tau must be >= 0, got {tau}")
    d = _check_dist(dist)
    n = d.shape[0]
    edges = minimum_spanning_edges(d)
    if tau is not None:
        keep = [e for e in edges if e[0] <= tau]
    else:
        if not 1 <= n_clusters <= n:
            raise ConfigError(f"n_clusters must be in [1, {n}]")
        keep = edges[: n - n_clusters]
    uf = _UnionFind(n)
    for _, i, j in keep:
        uf.union(i, j)
    return ClusterLabels.canonical(uf.find(i) for i in range(n))


def _lloyd_rows(x, centers, max_iter):
    labels, d2 = assign(x, centers)
    for _ in range(max_iter):
        k = centers.shape[0]
        counts = np.bincount(labels, minlength=k)
        new = centers.copy()
        for a in range(x.shape[1]):
            s = np.bincount(labels, weights=x[:, a], minlength=k)
            new[counts > 0, a] = s[counts > 0] / counts[counts > 0]
        new_labels, d2 = assign(x, new)
        done = np.array_equal(new_labels, labels) and np.array_equal(new, centers)
        centers, labels = new, new_labels
        if done:
            break
    return labels, float(np.sum(d2))


def kmeans_vectors(e, L: int, restarts: int = 100, seed: int = 0, max_iter: int = 300) -> ClusterLabels:
    """Best of ``restarts`` k-means++-seeded Lloyd runs on the embedding rows.

    The run with the lowest within-cluster sum of squares wins; the earliest
    such run on exact ties.
    """
    if L < 1 or restarts < 1:
        raise ConfigError("L and restarts must be >= 1")
    x = _rows(e)
    n = x.shape[0]
    if L > n:
        raise ConfigError(f"cannot form {L} clusters from {n} rows")
    w = np.ones(n)
    rng = np.random.default_rng([int(seed) & ((1 << 64) - 1), 7])
    best_cost, best = np.inf, None
    for _ in range(restarts):
        centers = _kmeanspp_arrays(x, w, L, rng)
        labels, cost = _lloyd_rows(x, centers, max_iter)
        if cost < best_cost:
            best_cost, best = cost, labels
    return ClusterLabels.canonical(best)


def _entropy(counts: np.ndarray, n: int) -> float:
    p = counts[counts > 0] / n
    return float(-np.sum(p * np.log(p)))


def nmi(a, b) -> float:
    """Mutual information normalized by the geometric mean of the entropies.

    Both partitions trivial gives 1; exactly one trivial gives 0.
    """
    a = np.asarray(getattr(a, "assignments", a))
    b = np.asarray(getattr(b, "assignments", b))
    if a.shape != b.shape:
        raise LengthMismatch(f"{a.shape[0]} vs {b.shape[0]} labels")
    n = a.shape[0]
    if n == 0:
        raise LengthMismatch("empty label vectors")
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    table = np.zeros((ai.max() + 1, bi.max() + 1))
    np.add.at(table, (ai, bi), 1.0)
    ha = _entropy(table.sum(axis=1), n)
    hb = _entropy(table.sum(axis=0), n)
    if ha == 0.0 and hb == 0.0:
        return 1.0
    if ha == 0.0 or hb == 0.0:
        return 0.0
    pab = table / n
    outer = np.outer(table.sum(axis=1), table.sum(axis=0)) / (n * n)
    nz = pab > 0
    mi = float(np.sum(pab[nz] * np.log(pab[nz] / outer[nz])))
    return float(min(1.0, max(0.0, mi / np.sqrt(ha * hb))))


def write_labels_csv(labels: ClusterLabels, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("cluster\n")
        for z in labels.assignments:
            fh.write(f"{z}\n")


def read_labels_csv(path) -> tuple:
    """Single-column label file with a header line."""
    try:
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh) if r]
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    try:
        return tuple(int(r[0]) for r in rows[1:])
    except (ValueError, IndexError) as exc:
        raise DataError(f"{path}: malformed label: {exc}") from exc
