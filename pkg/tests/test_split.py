from __future__ import annotations

import math

import numpy as np
import pytest

from keystroke_decoder.domain.errors import ConfigError, ParameterError
from keystroke_decoder.pipeline.corpus import generate_sentences
from keystroke_decoder.pipeline.split import (
    agglomerate,
    assign,
    cross_split_max_similarity,
    split_sentences,
    tfidf,
)


def partition(labels):
    groups = {}
    for i, label in enumerate(labels):
        groups.setdefault(int(label), set()).add(i)
    return {frozenset(g) for g in groups.values()}


def merge_oracle(sim, threshold):
    """Average linkage by repeated best-pair merging, then closure over pairs above threshold."""
    clusters = [{i} for i in range(len(sim))]
    while len(clusters) > 1:
        best, pair = -math.inf, None
        for a in range(len(clusters)):
            for b in range(a + 1, len(clusters)):
                avg = np.mean([sim[i, j] for i in clusters[a] for j in clusters[b]])
                if avg > best:
                    best, pair = avg, (a, b)
        if 1.0 - best > 1.0 - threshold:
            break
        a, b = pair
        clusters[a] |= clusters.pop(b)
    parent = list(range(len(sim)))

    def find(x):
        while parent[x] != x:
            x = parent[x]
        return x

    for c in clusters:
        first = min(c)
        for i in c:
            parent[find(i)] = find(first)
    for i in range(len(sim)):
        for j in range(len(sim)):
            if i != j and sim[i, j] > threshold:
                parent[find(i)] = find(j)
    return partition([find(i) for i in range(len(sim))])


def test_tfidf_identical_and_disjoint():
    m = tfidf(["el gato come", "el gato come", "una casa roja"])
    sim = m.cosine()
    assert sim[0, 1] == pytest.approx(1.0)
    assert sim[0, 2] == pytest.approx(0.0)


def test_tfidf_hand_computed():
    docs = ["a b", "a c", "b c c", "d", "a d"]
    m = tfidf(docs)
    vocab = ["a", "b", "c", "d"]
    tf = np.array([[1, 1, 0, 0], [1, 0, 1, 0], [0, 1, 2, 0], [0, 0, 0, 1], [1, 0, 0, 1]], dtype=float)
    idf = np.log(5 / np.array([3, 2, 2, 2], dtype=float))
    rows = tf * idf
    rows /= np.linalg.norm(rows, axis=1, keepdims=True)
    order = [m.vocab[w] for w in vocab]
    assert np.allclose(m.rows[:, order], rows, atol=1e-12)
    assert np.allclose(m.cosine(), rows @ rows.T, atol=1e-12)


def test_tfidf_needs_two_sentences():
    with pytest.raises(ParameterError):
        tfidf(["solo"])


def test_extended_sentence_shares_cluster():
    labels = agglomerate(tfidf(["el gato come", "el gato come pescado", "una casa roja", "mi perro ladra"]))
    assert labels[0] == labels[1]
    assert len(set(labels)) == 3


def test_disjoint_sentences_are_singletons():
    labels = agglomerate(tfidf(["aa bb", "cc dd", "ee ff", "gg hh"]))
    assert sorted(labels) == [0, 1, 2, 3]


@pytest.mark.parametrize("seed", range(12))
def test_agglomerate_matches_merge_oracle(seed):
    rng = np.random.default_rng(seed)
    words = ["el", "gato", "perro", "come", "casa", "mesa", "roja", "grande", "un", "la"]
    n = int(rng.integers(3, 9))
    docs = [" ".join(rng.choice(words, size=rng.integers(2, 5))) for _ in range(n)]
    m = tfidf(docs)
    assert partition(agglomerate(m, 0.5)) == merge_oracle(m.cosine(), 0.5)


def test_assign_singletons():
    split = assign(list(range(10)), seed=0)
    sizes = [len(split.sentences(name)) for name in ("train", "valid", "test")]
    assert sizes == [8, 1, 1]


def test_assign_big_cluster_goes_to_train():
    clusters = [0] * 3 + list(range(1, 8))
    split = assign(clusters, seed=3)
    assert {split.split[i] for i in range(3)} == {"train"}


def test_assign_needs_three_clusters():
    with pytest.raises(ConfigError):
        assign([0, 0, 1, 1])


def test_generated_corpus_split_has_no_leakage():
    sentences = dict(enumerate(generate_sentences(128, seed=0)))
    split = split_sentences(sentences, 0.5, (0.8, 0.1, 0.1), seed=0)
    ids = sorted(sentences)
    assert cross_split_max_similarity(tfidf([sentences[i] for i in ids]), split, ids) <= 0.5
    for name, target in zip(("train", "valid", "test"), (0.8, 0.1, 0.1)):
        assert abs(len(split.sentences(name)) / 128 - target) <= 0.05
    for cluster in set(split.cluster.values()):
        members = [s for s, c in split.cluster.items() if c == cluster]
        assert len({split.split[s] for s in members}) == 1
