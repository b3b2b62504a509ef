import math

import numpy as np
import pytest

from sprefine.core import SuperpixelFeatures
from sprefine.learn import LinearModel
from sprefine.simgraph import (EdgeList, UnionFind, build_edges, fit_same_label, mst_topk, pair_features,
                               predict_same_label, similarity_matrix)

from oracles import is_forest, spanning_trees


def random_similarity(rng, n):
    s = rng.random((n, n))
    s = (s + s.T) / 2
    np.fill_diagonal(s, 1.0)
    return s


def random_spf(rng, n, dim=2):
    return SuperpixelFeatures(rng.normal(size=(n, dim)), rng.uniform(0, 20, (n, 2)),
                              rng.integers(1, 50, n), (20, 20))


HAND = np.array([[1.0, 0.9, 0.1], [0.9, 1.0, 0.8], [0.1, 0.8, 1.0]])


def test_pair_features_examples():
    spf = SuperpixelFeatures([[0, 0], [3, 4], [0, 0]], [[1, 1], [1, 1], [1, 1]], [4, 4, 4], (4, 4))
    np.testing.assert_allclose(pair_features(spf, 0, 2), [0, 0, 0])
    np.testing.assert_allclose(pair_features(spf, 0, 1), [5, 0, 0])
    with pytest.raises((ValueError, IndexError)):
        pair_features(spf, 0, 3)
    with pytest.raises(ValueError):
        pair_features(spf, 1, 1)


def test_pair_features_symmetric_and_non_negative():
    rng = np.random.default_rng(0)
    spf = random_spf(rng, 12)
    for _ in range(100):
        i, j = rng.choice(12, 2, replace=False)
        a, b = pair_features(spf, i, j), pair_features(spf, j, i)
        np.testing.assert_array_equal(a, b)
        assert np.all(a >= 0) and np.all(np.isfinite(a))


def test_predict_same_label():
    rng = np.random.default_rng(1)
    zero = LinearModel.zeros(3)
    assert predict_same_label(zero, rng.normal(size=3)) == 0.5
    model = LinearModel([[-5.0, 0, 0, 1.0]])
    assert predict_same_label(model, [0.1, 0, 0]) > predict_same_label(model, [3.0, 0, 0])
    p = predict_same_label(model, rng.normal(scale=1.5, size=(100, 3)))
    assert np.all((p > 0) & (p < 1))
    # float64 saturates beyond |logit| ~ 37; the closed interval still holds
    p = predict_same_label(model, rng.normal(scale=1e3, size=(100, 3)))
    assert np.all((p >= 0) & (p <= 1))
    with pytest.raises(ValueError):
        predict_same_label(LinearModel.zeros(2), [0, 0])


def test_mst_topk_examples():
    el = mst_topk(HAND, 2)
    assert {tuple(e) for e in el.edges} == {(0, 1), (1, 2)}
    np.testing.assert_allclose(el.weights, [0.9, 0.8])
    assert [tuple(e) for e in mst_topk(HAND, 1).edges] == [(0, 1)]
    for k in (1, 5):
        assert [tuple(e) for e in mst_topk([[1, 0.3], [0.3, 1]], k).edges] == [(0, 1)]
    with pytest.raises(ValueError):
        mst_topk([[1.0]])


@pytest.mark.parametrize("n", [2, 3, 4, 5, 6])
def test_mst_matches_enumeration(n):
    rng = np.random.default_rng(n)
    trees = list(spanning_trees(n))
    assert len(trees) == n ** (n - 2)
    for _ in range(10):
        s = random_similarity(rng, n)
        d = 1 - s
        best = min(math.fsum(d[a, b] for a, b in t) for t in trees)
        el = mst_topk(s, n - 1)
        assert math.fsum(d[a, b] for a, b in el.edges) == best


def test_acyclic_large():
    rng = np.random.default_rng(7)
    for n in (10, 30, 50):
        s = random_similarity(rng, n)
        for k in (1, 8, n):
            el = mst_topk(s, k)
            assert len(el) == min(k, n - 1)
            assert is_forest(el.edges, n)
            assert np.all(np.diff(el.weights) <= 0)


def test_full_tree_when_k_large():
    rng = np.random.default_rng(8)
    s = random_similarity(rng, 9)
    full = {tuple(e) for e in mst_topk(s, 8).edges}
    assert full == {tuple(e) for e in mst_topk(s, 100).edges}
    assert len(full) == 8 and is_forest(list(full), 9)


def test_relabeling_equivariance():
    rng = np.random.default_rng(9)
    for _ in range(20):
        n = int(rng.integers(3, 12))
        s = random_similarity(rng, n)
        perm = rng.permutation(n)
        # permuted[a, b] = s[perm[a], perm[b]]
        permuted = s[np.ix_(perm, perm)]
        a = {tuple(sorted(e)) for e in mst_topk(s, 4).edges}
        b = {tuple(sorted((int(perm[x]), int(perm[y])))) for x, y in mst_topk(permuted, 4).edges}
        assert a == b


def test_union_find():
    uf = UnionFind(4)
    assert uf.union(0, 1) and uf.union(2, 3)
    assert not uf.union(1, 0)
    assert uf.union(1, 3)
    assert len({uf.find(i) for i in range(4)}) == 1


def test_edge_list_validation():
    with pytest.raises(ValueError):
        EdgeList([[1, 0]], [0.5])
    with pytest.raises(ValueError):
        EdgeList([[0, 1], [0, 1]], [0.5, 0.5])
    with pytest.raises(ValueError):
        EdgeList([[0, 2]], [0.5]).check_bounds(2)


def test_build_edges_groups_and_dense():
    rng = np.random.default_rng(10)
    s = random_similarity(rng, 8)
    groups = np.array([0, 0, 0, 1, 1, 1, 1, 2])
    el = build_edges(s, groups, k=8)
    assert len(el) == 2 + 3
    assert all(groups[i] == groups[j] for i, j in el.edges)
    dense = build_edges(s, groups, k=None)
    assert len(dense) == 3 + 6
    assert all(groups[i] == groups[j] for i, j in dense.edges)
    assert len(build_edges(s, np.arange(8))) == 0
    # each group capped at k
    assert len(build_edges(s, groups, k=1)) == 2


def test_similarity_matrix_and_fit():
    rng = np.random.default_rng(11)
    labels = np.repeat([0, 1], 6)
    feats = np.where(labels[:, None] == 0, 0.0, 5.0) + rng.normal(scale=0.3, size=(12, 2))
    spf = SuperpixelFeatures(feats, rng.uniform(0, 10, (12, 2)), np.full(12, 10), (10, 10))
    model = fit_same_label(spf, labels)
    sim = similarity_matrix(spf, model, groups=None)
    np.testing.assert_allclose(sim, sim.T)
    same = labels[:, None] == labels[None, :]
    off = ~np.eye(12, dtype=bool)
    assert sim[same & off].min() > sim[~same].max()
    assert fit_same_label(spf, np.zeros(12)) is None
    grouped = similarity_matrix(spf, model, groups=labels)
    assert np.all(grouped[~same] == 0)


def test_default_edge_budget():
    # eight most-similar tree edges per object
    from sprefine.pipeline import PipelineConfig
    from sprefine.simgraph import DEFAULT_TOP_K
    assert DEFAULT_TOP_K == 8 and PipelineConfig().top_k == 8
    rng = np.random.default_rng(12)
    assert len(mst_topk(random_similarity(rng, 20))) == 8
