from __future__ import annotations

from functools import lru_cache
from itertools import product

import numpy as np
import pytest

from keystroke_decoder.domain.errors import DataIntegrityError, ParameterError
from keystroke_decoder.domain.keyboard import encode_text
from keystroke_decoder.domain.scoring import cer, confusion_matrix, her, levenshtein, position_errors


def edit_oracle(a, b):
    """Shortest edit path by exhaustive recursion over the three edit operations."""

    @lru_cache(maxsize=None)
    def go(i, j):
        if i == len(a):
            return len(b) - j
        if j == len(b):
            return len(a) - i
        return min(go(i + 1, j) + 1, go(i, j + 1) + 1, go(i + 1, j + 1) + (a[i] != b[j]))

    return go(0, 0)


def test_cer_examples():
    assert cer("abc", "abc") == 0.0
    assert cer("ab", "abc") == pytest.approx(1 / 3)
    assert cer("", "abc") == 1.0


def test_cer_rejects_empty_target():
    with pytest.raises(ParameterError):
        cer("a", "")


def test_levenshtein_matches_oracle_on_short_sequences():
    seqs = [s for n in range(5) for s in product(range(3), repeat=n)]
    for a in seqs:
        for b in seqs:
            assert levenshtein(a, b) == edit_oracle(a, b)


def test_levenshtein_matches_oracle_on_random_length_seven():
    rng = np.random.default_rng(0)
    for _ in range(300):
        a = tuple(rng.integers(0, 3, size=rng.integers(0, 8)))
        b = tuple(rng.integers(0, 3, size=rng.integers(1, 8)))
        assert levenshtein(a, b) == edit_oracle(a, b)


def test_position_errors_sum_to_distance():
    rng = np.random.default_rng(1)
    for _ in range(200):
        pred = list(rng.integers(0, 3, size=rng.integers(0, 8)))
        target = list(rng.integers(0, 3, size=rng.integers(1, 8)))
        errors = position_errors(pred, target)
        assert len(errors) == len(target)
        assert errors.sum() == levenshtein(pred, target)
        assert np.all(errors >= 0)


def test_position_errors_trailing_addition_lands_on_last_position():
    assert position_errors("abcx", "abc").tolist() == [0, 0, 1]
    assert position_errors("abc", "abc").tolist() == [0, 0, 0]


def test_her():
    assert her(encode_text("qwer"), encode_text("qwer")) == 0.0
    assert her(encode_text("qqq"), encode_text("ppp")) == 1.0
    targets = encode_text("asdfghjklq")
    preds = list(targets)
    preds[0] = encode_text("p")[0]
    assert her(preds, targets) == pytest.approx(0.1)
    assert her(encode_text("  "), encode_text("  ")) is None


def test_her_needs_aligned_sequences():
    with pytest.raises(DataIntegrityError):
        her([0], [0, 1])


def test_confusion_matrix_counts():
    m = confusion_matrix([0, 0, 1], [0, 1, 1], n_classes=3)
    assert m.tolist() == [[1, 1, 0], [0, 1, 0], [0, 0, 0]]
