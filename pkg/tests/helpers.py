"""Shared random-instance generators for the test modules."""

import itertools

import numpy as np

from sprefine.crf import CrfModel, PairwiseTerm


def random_crf(rng, max_vars=10, max_labels=4, terms=2, zero_weights=False):
    """Small CRF with random unaries and random edge subsets, kernels on the unary scale."""
    n = int(rng.integers(2, max_vars + 1))
    L = int(rng.integers(2, max_labels + 1))
    unary = rng.exponential(1.0, (n, L))
    pairs = np.array(list(itertools.combinations(range(n), 2)))
    out = []
    for _ in range(terms):
        keep = pairs[rng.random(len(pairs)) < 0.5]
        kernel = np.zeros(len(keep)) if zero_weights else rng.uniform(0, 1.5, len(keep))
        out.append(PairwiseTerm(keep, kernel))
    return CrfModel(unary, out)


def half_plane(seed, size=32):
    """Two flat colours split by a vertical or horizontal edge at a random position.

    The colours differ by at least 64 levels in some channel. Returns
    ``(image, gt)``.
    """
    rng = np.random.default_rng(seed)
    while True:
        a, b = rng.integers(0, 256, (2, 3))
        if np.max(np.abs(a - b)) >= 64:
            break
    pos = int(rng.integers(8, size - 8 + 1))
    gt = np.zeros((size, size), dtype=np.int64)
    if rng.random() < 0.5:
        gt[:, pos:] = 1
    else:
        gt[pos:, :] = 1
    image = np.where(gt[..., None] == 1, b, a).astype(np.uint8)
    return image, gt
