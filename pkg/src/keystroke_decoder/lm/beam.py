from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Any, Hashable, List, Protocol, Sequence, Tuple

import numpy as np
from scipy.special import log_softmax

from ..domain.errors import ParameterError, ShapeError

logger = logging.getLogger(__name__)


class LanguageScorer(Protocol):
    """Anything that scores the next symbol given a hashable history state."""

    def initial_state(self) -> Hashable: ...

    def advance(self, state: Any, c: int) -> Hashable: ...

    def logprobs(self, state: Any) -> np.ndarray: ...


@dataclass(frozen=True)
class BeamHypothesis:
    sequence: Tuple[int, ...]
    score: float
    lm_state: Hashable


def fuse(trans_logits: np.ndarray, lm_logprobs: np.ndarray, alpha: float = 5.0) -> np.ndarray:
    """log softmax(transformer logits) + alpha * LM log-probabilities, per class."""
    if alpha < 0:
        raise ParameterError(f"alpha must be >= 0, got {alpha}.")
    fused = log_softmax(np.asarray(trans_logits, dtype=np.float64))
    if alpha == 0:
        return fused
    return fused + alpha * np.asarray(lm_logprobs, dtype=np.float64)


def beam_search(
    logits: np.ndarray,
    lm: LanguageScorer,
    beam: int = 30,
    alpha: float = 5.0,
) -> BeamHypothesis:
    """Breadth-first beam search over per-keystroke logits fused with an LM.

    At each step every hypothesis is extended by every class; the top `beam`
    by total score survive. Ties rank by class id, then by the parent sequence.
    """
    if beam < 1:
        raise ParameterError(f"beam must be >= 1, got {beam}.")
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 2 or logits.shape[0] < 1:
        raise ShapeError(f"Expected an (n >= 1) x classes logit matrix, got shape {logits.shape}.")
    n_classes = logits.shape[1]

    hyps: List[BeamHypothesis] = [BeamHypothesis((), 0.0, lm.initial_state())]
    for row in logits:
        candidates = []
        for hyp in hyps:
            lm_row = lm.logprobs(hyp.lm_state)[:n_classes] if alpha > 0 else None
            step = fuse(row, lm_row, alpha)
            for c in range(n_classes):
                candidates.append((hyp.score + float(step[c]), c, hyp))
        candidates.sort(key=lambda t: (-t[0], t[1], t[2].sequence))
        hyps = [
            BeamHypothesis(hyp.sequence + (c,), score, lm.advance(hyp.lm_state, c))
            for score, c, hyp in candidates[:beam]
        ]
    return hyps[0]


def greedy_decode(logits: np.ndarray) -> List[int]:
    return [int(i) for i in np.argmax(np.asarray(logits), axis=1)]


def decode_logits(
    logits_per_sentence: Sequence[np.ndarray],
    lm: LanguageScorer | None,
    beam: int = 30,
    alpha: float = 5.0,
) -> List[BeamHypothesis]:
    """Decode a batch of sentences independently; lm=None means transformer argmax only."""
    out = []
    for logits in logits_per_sentence:
        if lm is None or alpha == 0:
            logits = np.asarray(logits, dtype=np.float64)
            seq = tuple(greedy_decode(logits))
            score = float(log_softmax(logits, axis=1)[np.arange(len(seq)), seq].sum())
            out.append(BeamHypothesis(seq, score, ()))
        else:
            out.append(beam_search(logits, lm, beam, alpha))
    return out
