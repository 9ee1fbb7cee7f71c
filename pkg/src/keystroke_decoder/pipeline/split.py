from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Dict, Optional, Sequence

import numpy as np
from scipy.cluster.hierarchy import fcluster, linkage
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial.distance import squareform
from sklearn.feature_extraction.text import CountVectorizer
from sklearn.preprocessing import normalize

from ..domain.errors import ConfigError, ParameterError
from ..domain.models import SplitAssignment

logger = logging.getLogger(__name__)

SPLITS = ("train", "valid", "test")


@dataclass
class TfidfMatrix:
    rows: np.ndarray            # sentences x vocabulary, L2-normalized
    vocab: Dict[str, int]

    def cosine(self) -> np.ndarray:
        return self.rows @ self.rows.T


def tfidf(sentences: Sequence[str]) -> TfidfMatrix:
    """Lowercase word-unigram tf x log(N/df), rows L2-normalized."""
    if len(sentences) < 2:
        raise ParameterError("TF-IDF needs at least 2 sentences.")
    vectorizer = CountVectorizer(lowercase=True, token_pattern=r"(?u)\b\w+\b")
    try:
        counts = vectorizer.fit_transform(sentences).toarray().astype(np.float64)
    except ValueError:
        # empty vocabulary: every sentence is empty
        logger.warning("All sentences are empty; TF-IDF rows are zero.")
        return TfidfMatrix(np.zeros((len(sentences), 0)), {})

    df = (counts > 0).sum(axis=0)
    idf = np.log(len(sentences) / df)
    rows = normalize(counts * idf, norm="l2")
    for i in np.flatnonzero(~rows.any(axis=1)):
        logger.warning("Sentence %d has an all-zero TF-IDF row (empty or only ubiquitous words).", i)
    vocab = {w: int(j) for w, j in vectorizer.vocabulary_.items()}
    return TfidfMatrix(rows, vocab)


def agglomerate(m: TfidfMatrix, threshold: float = 0.5) -> np.ndarray:
    """Average-linkage clustering on cosine distance, cut at 1 - threshold.

    Clusters are then closed under pairwise similarity: any two sentences more
    similar than `threshold` end up in the same cluster.
    """
    n = m.rows.shape[0]
    if n == 1:
        return np.zeros(1, dtype=int)
    sim = m.cosine()
    dist = np.clip(1.0 - sim, 0.0, None)
    np.fill_diagonal(dist, 0.0)
    tree = linkage(squareform(dist, checks=False), method="average")
    labels = fcluster(tree, t=1.0 - threshold, criterion="distance")

    linked = (labels[:, None] == labels[None, :]) | (sim > threshold)
    _, components = connected_components(csr_matrix(linked), directed=False)
    return _relabel(components)


def _relabel(labels: np.ndarray) -> np.ndarray:
    order: Dict[int, int] = {}
    return np.array([order.setdefault(int(l), len(order)) for l in labels], dtype=int)


def assign(
    clusters: Sequence[int],
    ratios: Sequence[float] = (0.8, 0.1, 0.1),
    seed: int = 0,
    sentence_ids: Optional[Sequence[int]] = None,
) -> SplitAssignment:
    """Greedy largest-cluster-first assignment to the split with the largest remaining deficit."""
    clusters = np.asarray(clusters, dtype=int)
    ids = list(range(len(clusters))) if sentence_ids is None else [int(s) for s in sentence_ids]
    unique, sizes = np.unique(clusters, return_counts=True)
    if len(unique) < len(SPLITS):
        raise ConfigError(f"Need at least {len(SPLITS)} clusters to fill every split, got {len(unique)}.")

    rng = np.random.default_rng(seed)
    shuffled = rng.permutation(len(unique))
    order = sorted(shuffled, key=lambda k: -sizes[k])       # stable: the seed permutes equal sizes

    targets = np.asarray(ratios, dtype=float) * len(clusters)
    filled = np.zeros(len(SPLITS))
    cluster_split: Dict[int, str] = {}
    for k in order:
        choice = int(np.argmax(targets - filled))
        cluster_split[int(unique[k])] = SPLITS[choice]
        filled[choice] += sizes[k]

    split = {sid: cluster_split[int(c)] for sid, c in zip(ids, clusters)}
    cluster = {sid: int(c) for sid, c in zip(ids, clusters)}
    achieved = {name: round(filled[i] / len(clusters), 3) for i, name in enumerate(SPLITS)}
    logger.info("Split sizes %s from %d clusters.", achieved, len(unique))
    return SplitAssignment(split=split, cluster=cluster)


def split_sentences(
    sentences: Dict[int, str],
    threshold: float = 0.5,
    ratios: Sequence[float] = (0.8, 0.1, 0.1),
    seed: int = 0,
) -> SplitAssignment:
    ids = sorted(sentences)
    texts = [sentences[i] for i in ids]
    return assign(agglomerate(tfidf(texts), threshold), ratios, seed, sentence_ids=ids)


def cross_split_max_similarity(m: TfidfMatrix, assignment: SplitAssignment, ids: Sequence[int]) -> float:
    """Largest cosine similarity between two sentences placed in different splits."""
    sim = m.cosine()
    labels = np.array([assignment.split[i] for i in ids])
    cross = labels[:, None] != labels[None, :]
    return float(sim[cross].max()) if cross.any() else 0.0
