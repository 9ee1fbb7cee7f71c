from __future__ import annotations

from typing import Sequence

import numpy as np

from .errors import DataIntegrityError, ParameterError
from .keyboard import N_CLASSES, QWERTY, KeyboardLayout, is_letter_id


def _edit_table(pred: Sequence, target: Sequence) -> np.ndarray:
    n, m = len(target), len(pred)
    d = np.zeros((n + 1, m + 1), dtype=np.int64)
    d[:, 0] = np.arange(n + 1)
    d[0, :] = np.arange(m + 1)
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            d[i, j] = min(
                d[i - 1, j] + 1,                                  # deletion of a target character
                d[i, j - 1] + 1,                                  # addition of a predicted character
                d[i - 1, j - 1] + (target[i - 1] != pred[j - 1]),
            )
    return d


def levenshtein(pred: Sequence, target: Sequence) -> int:
    return int(_edit_table(pred, target)[-1, -1])


def cer(pred: Sequence, target: Sequence) -> float:
    """(s + d + a) / n over class sequences (or strings)."""
    if len(target) == 0:
        raise ParameterError("CER is undefined for an empty target.")
    return levenshtein(pred, target) / len(target)


def position_errors(pred: Sequence, target: Sequence) -> np.ndarray:
    """Attribute every edit of a minimum edit path to one target position.

    Substitutions and deletions count at their own position; additions count at the
    target position that follows them (the last one at the end of the sentence).
    The result sums to the Levenshtein distance.
    """
    n = len(target)
    if n == 0:
        raise ParameterError("Error attribution needs a non-empty target.")
    d = _edit_table(pred, target)
    errors = np.zeros(n, dtype=np.int64)
    i, j = n, len(pred)
    while i > 0 or j > 0:
        if i > 0 and j > 0 and d[i, j] == d[i - 1, j - 1] + (target[i - 1] != pred[j - 1]):
            errors[i - 1] += int(target[i - 1] != pred[j - 1])
            i, j = i - 1, j - 1
        elif i > 0 and d[i, j] == d[i - 1, j] + 1:
            errors[i - 1] += 1
            i -= 1
        else:
            errors[min(i, n - 1)] += 1
            j -= 1
    return errors


def her(preds: Sequence[int], targets: Sequence[int], layout: KeyboardLayout = QWERTY) -> float | None:
    """Fraction of letter positions predicted on the wrong side of the keyboard split.

    Positions where either side is not a letter are skipped; None when no letter position remains.
    """
    if len(preds) != len(targets):
        raise DataIntegrityError(f"HER needs aligned sequences, got {len(preds)} predictions for {len(targets)} targets.")
    flips, total = 0, 0
    for p, t in zip(preds, targets):
        if not (is_letter_id(p) and is_letter_id(t)):
            continue
        total += 1
        flips += layout.hand_of(int(p)) != layout.hand_of(int(t))
    return flips / total if total else None


def confusion_matrix(targets: Sequence[int], preds: Sequence[int], n_classes: int = N_CLASSES) -> np.ndarray:
    """Target x predicted counts over position-aligned keystrokes."""
    if len(preds) != len(targets):
        raise DataIntegrityError("Confusion counting needs aligned sequences.")
    counts = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(counts, (np.asarray(targets, dtype=int), np.asarray(preds, dtype=int)), 1)
    return counts
