"""Shared builders and independent oracles for the test suite."""

from __future__ import annotations

import random

import numpy as np

from multigrain.embed import EmbeddingMatrix


def brute_force_search(matrix: EmbeddingMatrix, query, top_m: int):
    """Independent ranking oracle: full scan, (score desc, id asc) order."""
    query = np.asarray(query, dtype=np.float32)
    scores = matrix.vectors @ query
    order = sorted(range(matrix.count), key=lambda i: (-scores[i], matrix.ids[i]))
    return [(matrix.ids[i], float(scores[i])) for i in order[:top_m]]


def random_matrix(rng: random.Random, count: int, dim: int, with_ties: bool = True):
    """Random integer-grid vectors as float32.

    Integer coordinates keep every inner product exactly representable, so
    scores do not depend on summation order and tie order is well-defined
    when comparing different search paths. Duplicated rows force real ties.
    """
    np_rng = np.random.RandomState(rng.randrange(2**31))
    vectors = np_rng.randint(-3, 4, size=(count, dim)).astype(np.float32)
    if with_ties and count >= 4:
        for _ in range(max(1, count // 10)):
            src = rng.randrange(count)
            dst = rng.randrange(count)
            if src != dst:
                vectors[dst] = vectors[src]
    ids = tuple(f"u{i:06d}" for i in range(count))
    return EmbeddingMatrix(ids=ids, vectors=vectors)


def random_query(np_rng: np.random.RandomState, dim: int) -> np.ndarray:
    """Integer-grid query, exact-dot companion to :func:`random_matrix`."""
    return np_rng.randint(-3, 4, size=dim).astype(np.float32)


def make_sentence(word_count: int, tag: str) -> str:
    """A sentence of exactly ``word_count`` words that round-trips the splitter."""
    assert word_count >= 1
    words = ["Start"] + [f"{tag}w{j}" for j in range(word_count - 1)]
    return " ".join(words) + "."
