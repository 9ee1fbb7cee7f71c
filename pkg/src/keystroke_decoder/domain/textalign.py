from __future__ import annotations

import logging
from difflib import SequenceMatcher
from typing import List, Sequence, Tuple

import pandas as pd

from .errors import DataIntegrityError
from .models import KeystrokeEvent, Pair, SentenceTrial

logger = logging.getLogger(__name__)

RETURN_KEY = "<return>"

MATCH, SUBSTITUTE, INSERT, DELETE = "match", "substitute", "insert", "delete"


def align(typed: str, target: str) -> List[Pair]:
    """Gestalt (Ratcliff-Obershelp) alignment of typed text against the displayed sentence.

    Returns (pressed, intended, tag) pairs in reading order. Every character of both
    strings appears exactly once; ties between longest common substrings resolve to
    the leftmost one in the target string.
    """
    matcher = SequenceMatcher(None, target, typed, autojunk=False)
    pairs: List[Pair] = []
    for tag, i1, i2, j1, j2 in matcher.get_opcodes():
        if tag == "equal":
            pairs.extend((typed[j], target[i], MATCH) for i, j in zip(range(i1, i2), range(j1, j2)))
            continue
        n_sub = min(i2 - i1, j2 - j1)
        pairs.extend((typed[j1 + k], target[i1 + k], SUBSTITUTE) for k in range(n_sub))
        pairs.extend((None, target[i], DELETE) for i in range(i1 + n_sub, i2))
        pairs.extend((typed[j], None, INSERT) for j in range(j1 + n_sub, j2))
    return pairs


def edit_counts(pairs: Sequence[Pair]) -> dict:
    counts = {MATCH: 0, SUBSTITUTE: 0, INSERT: 0, DELETE: 0}
    for _, _, tag in pairs:
        counts[tag] += 1
    return counts


def edit_count(pairs: Sequence[Pair]) -> int:
    return sum(1 for _, _, tag in pairs if tag != MATCH)


def label_events(trial: SentenceTrial) -> SentenceTrial:
    """Fill target/is_typo of every keystroke from the alignment of typed vs read text."""
    if len(trial.events) != len(trial.typed_text) or any(
        e.pressed != c for e, c in zip(trial.events, trial.typed_text)
    ):
        raise DataIntegrityError(
            f"Sentence {trial.sentence_id} (subject {trial.subject_id}): "
            f"{len(trial.events)} events do not match typed text of length {len(trial.typed_text)}."
        )

    pairs = align(trial.typed_text, trial.read_text)
    pressed_pairs = iter([p for p in pairs if p[0] is not None])
    events = [event.labeled(next(pressed_pairs)[1]) for event in trial.events]
    return SentenceTrial(
        subject_id=trial.subject_id,
        sentence_id=trial.sentence_id,
        read_text=trial.read_text,
        typed_text=trial.typed_text,
        events=events,
        edit_count=edit_count(pairs),
    )


def filter_sentences(trials: Sequence[SentenceTrial], max_typos: int = 10) -> Tuple[List[SentenceTrial], float]:
    """Drop trials with strictly more than `max_typos` edits; returns (kept, removed fraction)."""
    kept = [t for t in trials if t.edit_count <= max_typos]
    removed = 0.0 if not trials else 1.0 - len(kept) / len(trials)
    if removed:
        logger.info("Removed %d/%d sentences with more than %d typing errors.", len(trials) - len(kept), len(trials), max_typos)
    return kept, removed


def trials_from_frames(events: pd.DataFrame, sentences: pd.DataFrame) -> List[SentenceTrial]:
    """Build unlabeled trials from an event table and a sentence table.

    events: subject_id, sentence_id, time_s, pressed (the return key is `<return>`)
    sentences: sentence_id, read_text
    """
    read = dict(zip(sentences["sentence_id"].astype(int), sentences["read_text"].astype(str)))
    trials = []
    for (subject_id, sentence_id), group in events.groupby(["subject_id", "sentence_id"], sort=True):
        group = group.sort_values("time_s", kind="stable")
        group = group[group["pressed"] != RETURN_KEY]
        if int(sentence_id) not in read:
            raise DataIntegrityError(f"Sentence {sentence_id} has events but no read_text.")
        evs = [KeystrokeEvent(time=float(t), pressed=str(p)) for t, p in zip(group["time_s"], group["pressed"])]
        trials.append(
            SentenceTrial(
                subject_id=int(subject_id),
                sentence_id=int(sentence_id),
                read_text=read[int(sentence_id)],
                typed_text="".join(e.pressed for e in evs),
                events=evs,
            )
        )
    return trials


def trials_to_frame(trials: Sequence[SentenceTrial]) -> pd.DataFrame:
    """Flatten labeled trials into one row per keystroke."""
    rows = []
    for t in trials:
        for pos, e in enumerate(t.events):
            rows.append(
                {
                    "subject_id": t.subject_id,
                    "sentence_id": t.sentence_id,
                    "keystroke": pos,
                    "time_s": e.time,
                    "pressed": e.pressed,
                    "target": e.target if e.target is not None else "",
                    "is_typo": e.is_typo,
                }
            )
    return pd.DataFrame(rows, columns=["subject_id", "sentence_id", "keystroke", "time_s", "pressed", "target", "is_typo"])
