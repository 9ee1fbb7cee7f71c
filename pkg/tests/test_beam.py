from __future__ import annotations

from itertools import product

import numpy as np
import pytest
from scipy.special import log_softmax

from keystroke_decoder.domain.errors import ParameterError, ShapeError
from keystroke_decoder.domain.keyboard import N_CLASSES, encode_text
from keystroke_decoder.lm.beam import beam_search, decode_logits, fuse, greedy_decode
from keystroke_decoder.lm.charlm import NgramModel


class BigramTable:
    """Fixed bigram scorer over a small alphabet; the state is the previous symbol."""

    def __init__(self, table, start):
        self.table = np.log(table)
        self.start = np.log(start)

    def initial_state(self):
        return -1

    def advance(self, state, c):
        return int(c)

    def logprobs(self, state):
        return self.start if state == -1 else self.table[state]


def uniform(n):
    return BigramTable(np.full((n, n), 1.0 / n), np.full(n, 1.0 / n))


def exhaustive(logits, lm, alpha):
    best, best_seq = -np.inf, None
    for seq in product(range(logits.shape[1]), repeat=logits.shape[0]):
        state, score = lm.initial_state(), 0.0
        for row, c in zip(logits, seq):
            score += fuse(row, lm.logprobs(state), alpha)[c]
            state = lm.advance(state, c)
        if score > best:
            best, best_seq = score, seq
    return best_seq, best


def test_fuse_elementwise():
    rng = np.random.default_rng(0)
    logits, lm = rng.normal(size=29), np.log(rng.dirichlet(np.ones(29)))
    expected = logits - np.log(np.exp(logits).sum()) + 5.0 * lm
    assert np.allclose(fuse(logits, lm, 5.0), expected, atol=1e-12)
    assert np.argmax(fuse(logits, lm, 0.0)) == np.argmax(logits)
    assert np.argmax(fuse(np.zeros(29), lm, 5.0)) == np.argmax(lm)


def test_fuse_rejects_negative_alpha():
    with pytest.raises(ParameterError):
        fuse(np.zeros(3), np.zeros(3), -1.0)


@pytest.mark.parametrize("seed", range(10))
def test_beam_equals_exhaustive_search(seed):
    rng = np.random.default_rng(seed)
    lm = BigramTable(rng.dirichlet(np.ones(3), size=3), rng.dirichlet(np.ones(3)))
    logits = rng.normal(size=(4, 3)) * 2
    hyp = beam_search(logits, lm, beam=81, alpha=1.5)
    seq, score = exhaustive(logits, lm, 1.5)
    assert hyp.sequence == seq
    assert hyp.score == pytest.approx(score, abs=1e-12)


def test_zero_alpha_is_argmax():
    rng = np.random.default_rng(1)
    logits = rng.normal(size=(6, N_CLASSES))
    lm = NgramModel.fit(["el gato come", "la casa"], order=3)
    assert list(beam_search(logits, lm, beam=5, alpha=0.0).sequence) == greedy_decode(logits)
    assert list(beam_search(logits, uniform(N_CLASSES), beam=3, alpha=5.0).sequence) == greedy_decode(logits)
    (hyp,) = decode_logits([logits], None)
    assert list(hyp.sequence) == greedy_decode(logits)
    assert hyp.score == pytest.approx(log_softmax(logits, axis=1).max(axis=1).sum())


def test_lm_corrects_ambiguous_keystroke():
    lm = NgramModel.fit(["el beneficio supera los riesgos"] * 20, order=5)
    target = encode_text("el beneficio")
    logits = np.full((len(target), N_CLASSES), -2.0)
    logits[np.arange(len(target)), target] = 2.0
    typo = encode_text("u")[0]
    logits[7] = -2.0
    logits[7, typo] = 1.0
    logits[7, target[7]] = 0.5
    assert greedy_decode(logits)[7] == typo
    assert list(beam_search(logits, lm, beam=10, alpha=1.0).sequence) == target


def test_invalid_beam_inputs():
    with pytest.raises(ParameterError):
        beam_search(np.zeros((2, 3)), uniform(3), beam=0)
    with pytest.raises(ShapeError):
        beam_search(np.zeros(3), uniform(3))


def _integer_instance(k, n=5, v=3):
    """Logits and bigram table built from integer arithmetic only."""
    i = np.arange(1, n * v + 1)
    logits = (((37 * k + 11) * i + 5 * k) % 101 / 101 * 6 - 3).reshape(n, v)
    table = (1 + ((13 * k + 7) * np.arange(1, v * v + 1) + k) % 17).reshape(v, v).astype(float)
    start = (1 + ((7 * k + 3) * np.arange(1, v + 1)) % 11).astype(float)
    return logits, BigramTable(table / table.sum(axis=1, keepdims=True), start / start.sum())


@pytest.mark.parametrize("k", range(20))
def test_wider_beam_never_scores_lower(k):
    logits, lm = _integer_instance(k)
    scores = [beam_search(logits, lm, beam=b, alpha=1.5).score for b in (1, 2, 3, 5, 9, 27, 81, 243)]
    assert all(later >= earlier - 1e-12 for earlier, later in zip(scores, scores[1:]))
    assert scores[-1] == pytest.approx(exhaustive(logits, lm, 1.5)[1], abs=1e-12)
