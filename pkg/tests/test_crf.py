import itertools
import math

import numpy as np
import pytest

from sprefine.core import SuperpixelFeatures, SuperpixelMap
from sprefine.crf import (CrfModel, CrfParams, KernelParams, PairwiseTerm, brute_force_map, build_model,
                          edge_kernels, free_energy, init_beliefs, labels_to_map, map_labels,
                          mean_field_infer, pairwise_kernel, total_energy, unary_energy)
from sprefine.simgraph import EdgeList

from helpers import random_crf
from oracles import energy_by_terms

RESOLVED = KernelParams(1.0, 1.0, 3.0, 1.0, 5.0)


def free_energy_loops(model, b):
    """Expected energy minus entropy, summed element by element."""
    e = 0.0
    for i in range(model.num_vars):
        for l in range(model.num_labels):
            e += b[i, l] * model.unary[i, l]
            if b[i, l] > 0:
                e += b[i, l] * math.log(b[i, l])
    for t in model.terms:
        for (i, j), k in zip(t.edges, t.kernel):
            agree = sum(b[i, l] * b[j, l] for l in range(model.num_labels))
            e += k * (1 - agree)
    return e


def two_var_model(k=20.0):
    # unary favours (0, 1); gap per variable is 1, k is 20x that
    return CrfModel([[0.0, 1.0], [1.5, 0.0]], [PairwiseTerm([[0, 1]], [k])])


def test_unary_energy_examples():
    p = CrfParams(epsilon=1e-300)
    assert abs(unary_energy([[1.0, 0.0]], [1], p)[0, 0]) < 1e-12
    assert unary_energy([[0.5, 0.5]], [1])[0, 0] == pytest.approx(0.693147, abs=1e-6)
    z = np.array([[0.2, 0.8], [0.6, 0.4]])
    np.testing.assert_allclose(unary_energy(z, [3, 5], CrfParams(alpha_u=2)),
                               2 * unary_energy(z, [3, 5]))
    np.testing.assert_allclose(unary_energy(z, [3, 5])[1], 5 * unary_energy(z[1:], [1])[0])


def test_pairwise_kernel_examples():
    assert pairwise_kernel([1, 2], [1, 2], [0.5], [0.5], RESOLVED) == pytest.approx(2.0)
    kp = KernelParams(0.0, 1.0, 3.0, 1.0, 5.0)
    assert pairwise_kernel([0, 0], [3, 4], [0], [9], kp) == pytest.approx(0.606531, abs=1e-6)
    kp = KernelParams(0.0, 0.0, 3.0, 1.0, 5.0)
    assert pairwise_kernel([0, 0], [3, 4], [0], [9], kp) == 0.0
    with pytest.raises(ValueError):
        pairwise_kernel([0, 0], [1, 1], [0], [0], KernelParams())
    with pytest.raises(ValueError):
        KernelParams(sigma_beta=0)


def test_edge_kernels_match_scalar():
    rng = np.random.default_rng(0)
    spf = SuperpixelFeatures(rng.normal(size=(6, 3)), rng.uniform(0, 30, (6, 2)), np.ones(6), (30, 40))
    edges = np.array(list(itertools.combinations(range(6), 2)))
    kp = KernelParams(0.7, 1.3)
    got = edge_kernels(spf, edges, kp, normalize=False)
    r = kp.resolved(spf.diagonal)
    assert r.sigma_alpha == pytest.approx(0.2 * 50) and r.sigma_gamma == pytest.approx(0.05 * 50)
    want = [pairwise_kernel(spf.positions[i], spf.positions[j], spf.features[i], spf.features[j], r)
            for i, j in edges]
    np.testing.assert_allclose(got, want, rtol=1e-12)


def test_total_energy_examples():
    m = CrfModel([[1.0, 2.0], [0.5, 0.1], [3.0, 0.0]], [PairwiseTerm([[0, 1], [1, 2]], [0.0, 0.0])])
    assert total_energy(m, [1, 0, 1]).total == pytest.approx(2.5)
    m = CrfModel([[1.0, 2.0], [0.5, 0.1], [3.0, 0.0]], [PairwiseTerm([[0, 1], [1, 2]], [4.0, 7.0])])
    e = total_energy(m, [1, 1, 1])
    assert e.pairwise == (0.0,) and e.total == pytest.approx(2.1)
    with pytest.raises(ValueError):
        total_energy(m, [0, 2, 0])


def test_total_energy_matches_term_oracle():
    rng = np.random.default_rng(1)
    for _ in range(50):
        m = random_crf(rng, max_vars=6)
        terms = [(t.edges.tolist(), t.kernel.tolist()) for t in m.terms]
        for _ in range(5):
            v = rng.integers(0, m.num_labels, m.num_vars)
            e = total_energy(m, v)
            assert e.total == pytest.approx(energy_by_terms(m.unary.tolist(), terms, v), abs=1e-12)
            assert e.total == pytest.approx(e.unary + sum(e.pairwise), abs=1e-12)


def test_free_energy_matches_loops():
    rng = np.random.default_rng(2)
    for _ in range(20):
        m = random_crf(rng)
        b = rng.dirichlet(np.ones(m.num_labels), m.num_vars)
        assert free_energy(m, b) == pytest.approx(free_energy_loops(m, b), abs=1e-10)


def test_no_edges_beliefs_equal_probabilities():
    rng = np.random.default_rng(3)
    z = rng.dirichlet(np.ones(4), 5)
    m = CrfModel(unary_energy(z, np.ones(5), CrfParams(epsilon=1e-300)))
    np.testing.assert_allclose(init_beliefs(m), z, rtol=0, atol=1e-9)
    res = mean_field_infer(m)
    np.testing.assert_allclose(res.beliefs, z, atol=1e-9)
    assert res.converged


def test_strong_edge_forces_agreement():
    m = two_var_model()
    res = mean_field_infer(m, max_iters=50)
    # summed unary: label 0 costs 1.5, label 1 costs 1.0
    np.testing.assert_array_equal(res.labels, [1, 1])
    v, e = brute_force_map(m)
    np.testing.assert_array_equal(v, [1, 1])
    assert e == pytest.approx(1.0)


def test_beliefs_normalised_and_trace_monotone():
    rng = np.random.default_rng(4)
    for _ in range(100):
        m = random_crf(rng)
        res = mean_field_infer(m, max_iters=30)
        np.testing.assert_allclose(res.beliefs.sum(1), 1.0, atol=1e-9)
        assert len(res.free_energy) == res.iterations + 1
        assert all(b <= a + 1e-9 for a, b in zip(res.free_energy, res.free_energy[1:]))


def test_zero_weights_give_unary_argmin():
    rng = np.random.default_rng(5)
    for _ in range(50):
        m = random_crf(rng, zero_weights=True)
        np.testing.assert_array_equal(mean_field_infer(m).labels, np.argmin(m.unary, 1))


def test_mean_field_never_beats_brute_force():
    rng = np.random.default_rng(6)
    for _ in range(40):
        m = random_crf(rng, max_vars=7)
        v, e = brute_force_map(m)
        assert total_energy(m, v).total == pytest.approx(e)
        assert total_energy(m, mean_field_infer(m, 100).labels).total >= e - 1e-12
        for _ in range(100):
            r = rng.integers(0, m.num_labels, m.num_vars)
            assert total_energy(m, r).total >= e


def test_brute_force_examples_and_guard():
    m = CrfModel([[0.3, 0.1, 0.5], [0.0, 2.0, 1.0]])
    np.testing.assert_array_equal(brute_force_map(m)[0], [1, 0])
    # exact tie: lexicographically smallest wins
    np.testing.assert_array_equal(brute_force_map(CrfModel([[1.0, 1.0], [2.0, 2.0]]))[0], [0, 0])
    with pytest.raises(ValueError):
        brute_force_map(CrfModel(np.zeros((21, 2))))


def test_map_labels_and_broadcast():
    np.testing.assert_array_equal(map_labels([[0.7, 0.3], [0.1, 0.9]]), [0, 1])
    np.testing.assert_array_equal(map_labels([[0.5, 0.5]]), [0])
    lm = labels_to_map(SuperpixelMap([[0, 0], [1, 1]], 2), [2, 5], 6)
    np.testing.assert_array_equal(lm.labels, [[2, 2], [5, 5]])


def test_per_variable_shift_invariance():
    rng = np.random.default_rng(7)
    for _ in range(30):
        m = random_crf(rng)
        shift = rng.normal(scale=10, size=(m.num_vars, 1))
        shifted = CrfModel(m.unary + shift, m.terms)
        np.testing.assert_array_equal(mean_field_infer(m).labels, mean_field_infer(shifted).labels)


def test_energy_permutation_symmetry():
    rng = np.random.default_rng(8)
    for _ in range(30):
        m = random_crf(rng)
        perm = rng.permutation(m.num_vars)  # old index -> new index
        inv = np.argsort(perm)
        terms = []
        for t in m.terms:
            e = np.sort(perm[t.edges], axis=1)
            terms.append(PairwiseTerm(e, t.kernel))
        pm = CrfModel(m.unary[inv], terms)
        v = rng.integers(0, m.num_labels, m.num_vars)
        assert total_energy(pm, v[inv]).total == pytest.approx(total_energy(m, v).total, abs=1e-12)


def test_large_weights_change_labels():
    # a noisy superpixel surrounded by confident neighbours flips only once
    # the pairwise weight is large enough to outvote its own unary
    z = np.array([[0.9, 0.1]] * 4 + [[0.4, 0.6]])
    sizes = np.full(5, 100)
    # coincident centroids and features: every kernel equals w1 + w2
    spf = SuperpixelFeatures(np.zeros((5, 1)), np.full((5, 2), 2.0), sizes, (4, 4))
    edges = EdgeList([[0, 4], [1, 4], [2, 4], [3, 4]], [1.0] * 4)
    psi = unary_energy(z, sizes)
    gap = psi[4, 0] - psi[4, 1]  # 100 * ln(1.5), about 40.5
    small = build_model(psi, edges, [spf], CrfParams())
    assert 4 * 2.0 < gap < 4 * 20.0
    big = build_model(psi, edges, [spf], CrfParams(terms=(KernelParams(10.0, 10.0),)))
    assert mean_field_infer(small).labels[4] == 1
    assert mean_field_infer(big).labels[4] == 0


def test_model_validation():
    with pytest.raises(ValueError):
        CrfModel([[np.inf, 0.0]])
    with pytest.raises(ValueError):
        PairwiseTerm([[0, 1]], [-1.0])
    with pytest.raises(ValueError):
        CrfModel([[0.0], [0.0]], [PairwiseTerm([[0, 2]], [1.0])])
    with pytest.raises(ValueError):
        CrfParams(epsilon=0)
