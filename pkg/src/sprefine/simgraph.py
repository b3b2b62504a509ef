"""Superpixel similarity graph and sparse edge selection.

Edges are chosen on a minimum spanning tree over dissimilarity
(``1 - similarity``); the ``k`` most similar tree edges are kept.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import SuperpixelFeatures
from .learn import LinearModel, TrainConfig, linear_forward, logistic_fit, sigmoid

DEFAULT_TOP_K = 8
PAIR_FEATURE_DIM = 3


@dataclass(frozen=True)
class EdgeList:
    """Undirected edges with ``i < j``; ``kind`` tags what ``weights`` mean."""

    edges: np.ndarray  # (E, 2) int
    weights: np.ndarray  # (E,)
    kind: str = "similarity"

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        weights = np.asarray(self.weights, dtype=np.float64).reshape(-1)
        if len(edges) != len(weights):
            raise ValueError("edges and weights differ in length")
        if self.kind not in ("similarity", "dissimilarity"):
            raise ValueError(f"unknown edge kind {self.kind!r}")
        if len(edges):
            if np.any(edges[:, 0] >= edges[:, 1]) or edges.min() < 0:
                raise ValueError("edges must satisfy 0 <= i < j")
            if len(np.unique(edges, axis=0)) != len(edges):
                raise ValueError("duplicate edges")
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "weights", weights)

    def __len__(self):
        return len(self.edges)

    def check_bounds(self, count: int) -> "EdgeList":
        if len(self.edges) and self.edges.max() >= count:
            raise ValueError(f"edge index {self.edges.max()} out of range for {count} superpixels")
        return self


class UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))
        self.rank = [0] * n

    def find(self, i: int) -> int:
        root = i
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[i] != root:
            self.parent[i], i = root, self.parent[i]
        return root

    def union(self, a: int, b: int) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        if self.rank[ra] < self.rank[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        if self.rank[ra] == self.rank[rb]:
            self.rank[ra] += 1
        return True


def pair_features(spf: SuperpixelFeatures, i: int, j: int) -> np.ndarray:
    """[feature distance, centroid distance / image diagonal, relative size gap]."""
    n = spf.count
    if not (0 <= i < n and 0 <= j < n):
        raise IndexError(f"superpixel index out of range for {n} superpixels: ({i}, {j})")
    if i == j:
        raise ValueError("pair needs two distinct superpixels")
    return all_pair_features(spf, np.array([[i, j]]))[0]


def all_pair_features(spf: SuperpixelFeatures, pairs=None) -> np.ndarray:
    """Pair features for every row of ``pairs`` (default: all ``i < j``)."""
    if pairs is None:
        pairs = np.stack(np.triu_indices(spf.count, 1), axis=1)
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    i, j = pairs[:, 0], pairs[:, 1]
    f = spf.features
    p = spf.positions
    s = spf.sizes.astype(np.float64)
    return np.stack([
        np.linalg.norm(f[i] - f[j], axis=1),
        np.linalg.norm(p[i] - p[j], axis=1) / spf.diagonal,
        np.abs(s[i] - s[j]) / (s[i] + s[j]),
    ], axis=1)


def predict_same_label(model: LinearModel, f) -> float | np.ndarray:
    """Probability that two superpixels share a label (single or batched)."""
    if model.classes != 1 or model.dim != PAIR_FEATURE_DIM:
        raise ValueError(f"expected a 1x{PAIR_FEATURE_DIM + 1} model, got {model.weights.shape}")
    return sigmoid(linear_forward(model, f)[..., 0])


def fit_same_label(spf: SuperpixelFeatures, labels,
                   cfg: TrainConfig = TrainConfig()) -> LinearModel | None:
    """Train the same-label classifier on all pairs given per-superpixel labels.

    Features are standardised first and the standardisation folded back into
    the returned weights. Returns ``None`` if all pairs fall in one class.
    """
    labels = np.asarray(labels)
    pairs = np.stack(np.triu_indices(spf.count, 1), axis=1)
    if len(pairs) == 0:
        return None
    X = all_pair_features(spf, pairs)
    y = (labels[pairs[:, 0]] == labels[pairs[:, 1]]).astype(np.float64)
    if y.min() == y.max():
        return None
    mu = X.mean(0)
    sd = X.std(0)
    sd[sd == 0] = 1.0
    w = logistic_fit((X - mu) / sd, y, cfg).weights[0]
    coef = w[:-1] / sd
    bias = w[-1] - np.dot(coef, mu)
    return LinearModel(np.concatenate([coef, [bias]])[None])


def similarity_matrix(spf: SuperpixelFeatures, model: LinearModel,
                      groups=None) -> np.ndarray:
    """Dense same-label probabilities; pairs in different groups get 0."""
    n = spf.count
    sim = np.zeros((n, n))
    if n < 2:
        return sim
    iu = np.triu_indices(n, 1)
    sim[iu] = predict_same_label(model, all_pair_features(spf, np.stack(iu, 1)))
    sim = sim + sim.T
    if groups is not None:
        groups = np.asarray(groups)
        sim[groups[:, None] != groups[None, :]] = 0.0
    return sim


def minimum_spanning_tree(dissimilarity) -> list[tuple[int, int]]:
    """Kruskal on the complete graph; ties broken by ``(i, j)``."""
    d = np.asarray(dissimilarity, dtype=np.float64)
    n = len(d)
    i, j = np.triu_indices(n, 1)
    w = d[i, j]
    order = np.lexsort((j, i, w))
    uf = UnionFind(n)
    tree = []
    for e in order:
        a, b = int(i[e]), int(j[e])
        if uf.union(a, b):
            tree.append((a, b))
            if len(tree) == n - 1:
                break
    return tree


def mst_topk(similarity, k: int = DEFAULT_TOP_K) -> EdgeList:
    """The ``k`` most similar edges of the minimum-dissimilarity spanning tree.

    Edges are sorted by descending similarity, ties by ``(i, j)``.
    """
    s = np.asarray(similarity, dtype=np.float64)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise ValueError("similarity must be a square matrix")
    n = len(s)
    if n < 2:
        raise ValueError("need at least two superpixels")
    if k < 1:
        raise ValueError("k must be positive")
    tree = np.array(minimum_spanning_tree(1.0 - s), dtype=np.int64).reshape(-1, 2)
    sims = s[tree[:, 0], tree[:, 1]]
    order = np.lexsort((tree[:, 1], tree[:, 0], -sims))[:k]
    return EdgeList(tree[order], sims[order], "similarity")


def build_edges(similarity, groups=None, k: int | None = DEFAULT_TOP_K) -> EdgeList:
    """Edge set for the CRF, built independently inside each group.

    ``k=None`` connects every pair within a group (dense mode); otherwise each
    group contributes its MST top-``k`` edges. Edges never cross groups.
    """
    s = np.asarray(similarity, dtype=np.float64)
    n = len(s)
    groups = np.zeros(n, dtype=np.int64) if groups is None else np.asarray(groups)
    edges, weights = [], []
    for g in np.unique(groups):
        members = np.flatnonzero(groups == g)
        if len(members) < 2:
            continue
        sub = s[np.ix_(members, members)]
        if k is None:
            a, b = np.triu_indices(len(members), 1)
            el = EdgeList(np.stack([a, b], 1), sub[a, b])
        else:
            el = mst_topk(sub, k)
        edges.append(members[el.edges])
        weights.append(el.weights)
    if not edges:
        return EdgeList(np.zeros((0, 2)), np.zeros(0))
    edges = np.concatenate(edges)
    weights = np.concatenate(weights)
    order = np.lexsort((edges[:, 1], edges[:, 0]))
    return EdgeList(edges[order], weights[order])
