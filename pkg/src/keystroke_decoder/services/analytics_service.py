from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from sklearn.cluster import KMeans

from ..domain.errors import DataIntegrityError, ParameterError
from ..domain.keyboard import LETTERS, N_CLASSES, QWERTY, SPACE_ID, Hand, KeyboardLayout, is_letter_id, normalize_text
from ..domain.models import EvalReport, MetricRow, SentenceTrial, StatResult
from ..domain.scoring import cer, confusion_matrix, her, position_errors
from ..domain.stats import MIN_SAMPLES, fdr, mannwhitney, pearson, sem, wilcoxon

logger = logging.getLogger(__name__)

CENTROID_SHIFT = 1e-8


@dataclass
class DecodedSentence:
    subject_id: int
    sentence_id: int
    target: List[int]
    pred: List[int]
    is_typo: List[bool] = field(default_factory=list)


# ----------------------------
# Keystroke-level table
# ----------------------------
def keystroke_table(sentences: Sequence[DecodedSentence]) -> pd.DataFrame:
    """One row per target keystroke: attributed edit errors, position-aligned prediction, word span."""
    rows = []
    for s in sentences:
        errors = position_errors(s.pred, s.target)
        word, word_index = 0, []
        for c in s.target:
            if c == SPACE_ID:
                word += 1
                word_index.append(-1)
            else:
                word_index.append(word)
        words = _words(s.target)
        typo = s.is_typo or [False] * len(s.target)
        for pos, t in enumerate(s.target):
            aligned = s.pred[pos] if pos < len(s.pred) else -1
            rows.append({
                "subject_id": s.subject_id, "sentence_id": s.sentence_id, "position": pos,
                "target": t, "pred": aligned, "errors": int(errors[pos]), "is_typo": bool(typo[pos]),
                "word_index": word_index[pos],
                "word": words[word_index[pos]] if word_index[pos] >= 0 else "",
            })
    return pd.DataFrame(rows)


def _words(target: Sequence[int]) -> List[str]:
    text = "".join(LETTERS[c] if is_letter_id(c) else (" " if c == SPACE_ID else "*") for c in target)
    return text.split(" ")


def cer_by_group(table: pd.DataFrame, column: str, grouping: Optional[Dict[Tuple[int, int, int], object]] = None) -> pd.DataFrame:
    """Pooled CER per group: attributed edits / keystrokes, with SEM across sentences.

    `grouping` maps (subject_id, sentence_id, position) to a label; otherwise the
    existing `column` of the table is used.
    """
    table = table.copy()
    if grouping is not None:
        keys = set(zip(table["subject_id"], table["sentence_id"], table["position"]))
        unknown = [k for k in grouping if k not in keys]
        if unknown:
            raise DataIntegrityError(f"{len(unknown)} grouped keystrokes are not in the predictions, e.g. {unknown[0]}.")
        table[column] = [grouping.get(k) for k in zip(table["subject_id"], table["sentence_id"], table["position"])]
        table = table[table[column].notna()]

    rows = []
    for label, frame in table.groupby(column, sort=True):
        per_sentence = frame.groupby(["subject_id", "sentence_id"]).agg(errors=("errors", "sum"), n=("errors", "size"))
        ratios = per_sentence["errors"] / per_sentence["n"]
        rows.append({
            "group": label, "cer": frame["errors"].sum() / len(frame),
            "sem": sem(ratios.to_numpy()), "n": int(len(frame)), "n_sentences": int(len(per_sentence)),
        })
    return pd.DataFrame(rows, columns=["group", "cer", "sem", "n", "n_sentences"])


def pooled_cer(table: pd.DataFrame) -> float:
    return float(table["errors"].sum() / len(table))


# ----------------------------
# Frequency analyses
# ----------------------------
def word_groups(table: pd.DataFrame, train_sentences: Iterable[str], n_bins: int = 3) -> pd.DataFrame:
    """Adds `word_freq` (training-split frequency), `freq_bin` (q1 = rarest) and `oov` per keystroke."""
    counts = Counter(w for s in train_sentences for w in normalize_text(s).split())
    out = table.copy()
    out["word_freq"] = [counts.get(w, 0) if w else np.nan for w in out["word"]]
    out["oov"] = [bool(w) and counts.get(w, 0) == 0 for w in out["word"]]

    in_vocab = sorted({w for w in out["word"] if w and counts.get(w, 0) > 0})
    bins: Dict[str, str] = {}
    if in_vocab:
        freqs = pd.Series([math.log(counts[w]) for w in in_vocab], index=in_vocab)
        n = min(n_bins, freqs.nunique())
        labels = [f"q{i + 1}" for i in range(n)] if n > 1 else ["q1"]
        binned = pd.qcut(freqs.rank(method="first"), q=n, labels=labels) if n > 1 else pd.Series("q1", index=in_vocab)
        bins = {w: str(b) for w, b in binned.items()}
    out["freq_bin"] = [
        "space" if not w else ("oov" if counts.get(w, 0) == 0 else bins[w]) for w in out["word"]
    ]
    return out


def char_frequency_accuracy(table: pd.DataFrame, n_permutations: int = 10_000, seed: int = 0) -> Tuple[pd.DataFrame, Optional[StatResult]]:
    """Per target class: relative frequency and position-aligned accuracy; Pearson across classes."""
    grouped = table.assign(correct=table["pred"] == table["target"]).groupby("target")
    freq = grouped.size() / len(table)
    acc = grouped["correct"].mean()
    out = pd.DataFrame({"class_id": freq.index.astype(int), "frequency": freq.values, "accuracy": acc.values})
    stat = None
    if len(out) >= MIN_SAMPLES:
        stat = pearson(out["frequency"], out["accuracy"], n_permutations, seed)
    else:
        logger.warning("Only %d classes present; skipping frequency-accuracy correlation.", len(out))
    return out, stat


# ----------------------------
# Confusion structure
# ----------------------------
@dataclass
class DistanceConfusion:
    table: pd.DataFrame         # distance_bin, distance, rate, n_pairs
    r: Optional[float]
    p: Optional[float]
    undefined: bool = False


def confusion_vs_distance(
    confusion: np.ndarray,
    layout: KeyboardLayout = QWERTY,
    n_bins: int = 10,
    n_permutations: int = 10_000,
    seed: int = 0,
) -> DistanceConfusion:
    """Off-diagonal confusion rate of letter pairs against their normalized key distance.

    Each ordered letter pair's rate is its count over the total off-diagonal letter
    mass; pairs are pooled into equal-width distance bins and a bin's rate is the mean
    rate of its pairs. Pearson r runs over the non-empty bins.
    """
    letters = np.asarray(confusion, dtype=np.float64)[:26, :26]
    off = letters.copy()
    np.fill_diagonal(off, 0.0)
    total = off.sum()
    empty = pd.DataFrame(columns=["distance_bin", "distance", "rate", "n_pairs"])
    if total == 0:
        logger.warning("Confusion matrix has no off-diagonal letter mass; distance correlation undefined.")
        return DistanceConfusion(empty, None, None, undefined=True)

    dist = layout.distance_matrix()
    i, j = np.where(~np.eye(26, dtype=bool))
    pairs = pd.DataFrame({"distance": dist[i, j], "rate": off[i, j] / total})
    edges = np.linspace(0.0, 1.0, n_bins + 1)
    pairs["distance_bin"] = np.clip(np.digitize(pairs["distance"], edges[1:-1]), 0, n_bins - 1)
    table = (
        pairs.groupby("distance_bin")
        .agg(distance=("distance", "mean"), rate=("rate", "mean"), n_pairs=("rate", "size"))
        .reset_index()
    )
    if len(table) < MIN_SAMPLES:
        return DistanceConfusion(table, None, None, undefined=True)
    stat = pearson(table["distance"], table["rate"], n_permutations, seed)
    if stat.warning:
        return DistanceConfusion(table, None, None, undefined=True)
    return DistanceConfusion(table, stat.statistic, stat.pvalue)


def kmeans(embeddings: np.ndarray, k: int, seed: int = 0) -> np.ndarray:
    """k-means++ then Lloyd iterations until the centroids move less than 1e-8 (at most 300); deterministic per seed."""
    X = np.asarray(embeddings, dtype=np.float64)
    if not 2 <= k <= len(X):
        raise ParameterError(f"k must lie in [2, {len(X)}], got {k}.")
    # sklearn stops once the summed squared centroid shift is below tol * mean feature variance
    variance = float(np.mean(np.var(X, axis=0)))
    tol = CENTROID_SHIFT ** 2 / variance if variance > 0 else 0.0
    model = KMeans(n_clusters=k, init="k-means++", n_init=1, max_iter=300, tol=tol, random_state=seed)
    return model.fit_predict(X)


def hand_agreement(labels: np.ndarray, class_ids: Sequence[int], layout: KeyboardLayout = QWERTY) -> float:
    """Best agreement between a 2-cluster labeling and the typing hand (either label assignment)."""
    right = np.array([layout.hand_of(int(c)) is Hand.RIGHT for c in class_ids])
    match = np.mean((np.asarray(labels) == 1) == right)
    return float(max(match, 1.0 - match))


def layout_consistency(
    embeddings: np.ndarray,
    class_ids: Sequence[int],
    k: int = 10,
    seed: int = 0,
    layout: KeyboardLayout = QWERTY,
) -> Dict[str, float]:
    """Cluster per-letter mean embeddings; compare key distances within vs across clusters."""
    class_ids = np.asarray(class_ids)
    letters = sorted(int(c) for c in np.unique(class_ids) if is_letter_id(c))
    centroids = np.stack([np.asarray(embeddings)[class_ids == c].mean(axis=0) for c in letters])
    labels = kmeans(centroids, k, seed)
    dist = layout.distance_matrix()
    same, diff = [], []
    for a in range(len(letters)):
        for b in range(a + 1, len(letters)):
            (same if labels[a] == labels[b] else diff).append(dist[letters[a], letters[b]])
    return {
        "k": k,
        "n_letters": len(letters),
        "same_cluster_distance": float(np.mean(same)) if same else float("nan"),
        "diff_cluster_distance": float(np.mean(diff)) if diff else float("nan"),
    }


# ----------------------------
# Behaviour
# ----------------------------
def interkey_intervals(trials: Sequence[SentenceTrial], n_permutations: int = 10_000, seed: int = 0) -> Tuple[pd.DataFrame, StatResult]:
    """Preceding + following inter-key interval per keystroke, typo vs correct."""
    rows = []
    for trial in trials:
        times = np.array([e.time for e in trial.events])
        if len(times) < 2:
            continue
        gaps = np.diff(times)
        for i, event in enumerate(trial.events):
            before = gaps[i - 1] if i > 0 else 0.0
            after = gaps[i] if i < len(gaps) else 0.0
            rows.append({
                "subject_id": trial.subject_id, "sentence_id": trial.sentence_id, "position": i,
                "is_typo": event.is_typo, "interval": before + after,
            })
    table = pd.DataFrame(rows, columns=["subject_id", "sentence_id", "position", "is_typo", "interval"])
    if len(table) < 2:
        raise ParameterError("Inter-key intervals need at least 2 keystrokes in one sentence.")
    typo = table.loc[table["is_typo"], "interval"].to_numpy()
    correct = table.loc[~table["is_typo"], "interval"].to_numpy()
    if len(typo) == 0 or len(correct) == 0:
        missing = "typo" if len(typo) == 0 else "correct"
        logger.warning("No %s keystrokes; inter-key interval comparison is undefined.", missing)
        return table, StatResult("mannwhitney", None, None, len(table), warning=f"no {missing} keystrokes")
    return table, mannwhitney(typo, correct, n_permutations, seed)


def interval_ratio(table: pd.DataFrame) -> Optional[float]:
    """Mean typo interval over mean correct interval; None when either group is empty."""
    typo = table.loc[table["is_typo"], "interval"]
    correct = table.loc[~table["is_typo"], "interval"]
    if typo.empty or correct.empty or correct.mean() == 0:
        return None
    return float(typo.mean() / correct.mean())


def interval_summary(table: pd.DataFrame) -> pd.DataFrame:
    return (
        table.groupby("is_typo")["interval"]
        .agg(mean="mean", sem=lambda v: sem(v.to_numpy()), n="size")
        .reset_index()
    )


def typing_summary(trials: Sequence[SentenceTrial]) -> Dict[str, float]:
    cpm, production = [], []
    keystrokes = typos = with_typo = 0
    for trial in trials:
        if len(trial.events) >= 2:
            duration = trial.events[-1].time - trial.events[0].time
            production.append(duration)
            cpm.append(60.0 * (len(trial.events) - 1) / duration)
        keystrokes += len(trial.events)
        typos += sum(e.is_typo for e in trial.events)
        with_typo += trial.edit_count > 0
    return {
        "chars_per_minute": float(np.mean(cpm)) if cpm else float("nan"),
        "chars_per_minute_sem": sem(cpm),
        "production_time_s": float(np.mean(production)) if production else float("nan"),
        "production_time_s_sem": sem(production),
        "typo_rate": typos / keystrokes if keystrokes else 0.0,
        "sentences_with_typo": with_typo / len(trials) if trials else 0.0,
        "n_sentences": len(trials),
        "n_keystrokes": keystrokes,
    }


def subject_ranking(per_sentence: pd.DataFrame) -> pd.DataFrame:
    ranking = (
        per_sentence.groupby("subject_id")["cer"]
        .agg(cer_mean="mean", cer_sem=lambda v: sem(v.to_numpy()), n_sentences="size")
        .reset_index()
        .sort_values(["cer_mean", "subject_id"])
        .reset_index(drop=True)
    )
    ranking["rank"] = np.arange(1, len(ranking) + 1)
    ranking["label"] = ""
    if len(ranking):
        ranking.loc[0, "label"] = "best"
        if len(ranking) >= 2:
            ranking.loc[len(ranking) - 1, "label"] = "worst"
        if len(ranking) >= 3:
            ranking.loc[(len(ranking) - 1) // 2, "label"] = "median"
    return ranking


# ----------------------------
# Report
# ----------------------------
def per_sentence_cer(sentences: Sequence[DecodedSentence]) -> pd.DataFrame:
    return pd.DataFrame([
        {"subject_id": s.subject_id, "sentence_id": s.sentence_id, "cer": cer(s.pred, s.target), "n": len(s.target)}
        for s in sentences
    ], columns=["subject_id", "sentence_id", "cer", "n"])


def aligned_confusion(sentences: Sequence[DecodedSentence]) -> np.ndarray:
    """Position-aligned confusion counts over sentences decoded to the target length."""
    aligned = [s for s in sentences if len(s.pred) == len(s.target)]
    return confusion_matrix([c for s in aligned for c in s.target], [c for s in aligned for c in s.pred], N_CLASSES)


def build_report(
    decoded: Sequence[DecodedSentence],
    comparisons: Optional[Dict[str, Sequence[DecodedSentence]]] = None,
    n_permutations: int = 10_000,
    seed: int = 0,
    layout: KeyboardLayout = QWERTY,
) -> EvalReport:
    """CER/HER/confusion of the main decoder plus paired Wilcoxon tests against each comparison
    decoder (same sentences), FDR-adjusted together."""
    if not decoded:
        raise ParameterError("No decoded sentences to evaluate.")
    per_sentence = per_sentence_cer(decoded)
    aligned = [s for s in decoded if len(s.pred) == len(s.target)]
    preds = [c for s in aligned for c in s.pred]
    aligned_targets = [c for s in aligned for c in s.target]

    table = keystroke_table(decoded)
    by_typo = cer_by_group(table, "is_typo")
    metrics = [
        MetricRow("cer", float(per_sentence["cer"].mean()), len(per_sentence), sem(per_sentence["cer"].to_numpy())),
        MetricRow("cer_pooled", pooled_cer(table), len(table)),
        MetricRow("keystroke_accuracy", float(np.mean(np.asarray(preds) == np.asarray(aligned_targets))) if preds else None, len(preds)),
        MetricRow("her", her(preds, aligned_targets, layout), len(preds)),
    ]
    for _, row in by_typo.iterrows():
        name = "cer_typo" if row["group"] else "cer_correct"
        metrics.append(MetricRow(name, float(row["cer"]), int(row["n"]), float(row["sem"])))

    key = ["subject_id", "sentence_id"]
    tests: List[MetricRow] = []
    for name, other in (comparisons or {}).items():
        other_cer = per_sentence_cer(other).rename(columns={"cer": "other"})
        paired = per_sentence.merge(other_cer[key + ["other"]], on=key)
        row = MetricRow(f"cer_{name}", float(paired["other"].mean()), len(paired), sem(paired["other"].to_numpy()))
        if len(paired) >= MIN_SAMPLES:
            stat = wilcoxon(paired["cer"], paired["other"], n_permutations, seed)
            row.p = stat.pvalue
            tests.append(row)
        metrics.append(row)
        for _, typo_row in cer_by_group(keystroke_table(other), "is_typo").iterrows():
            split_name = "cer_typo" if typo_row["group"] else "cer_correct"
            metrics.append(MetricRow(f"{split_name}_{name}", float(typo_row["cer"]), int(typo_row["n"]), float(typo_row["sem"])))
    if tests:
        for row, adjusted in zip(tests, fdr([r.p for r in tests])):
            row.p_fdr = float(adjusted)

    per_subject = subject_ranking(per_sentence)
    logger.info("Evaluated %d sentences: mean CER %.3f.", len(per_sentence), metrics[0].value)
    return EvalReport(
        per_sentence=per_sentence,
        per_subject=per_subject,
        confusion=confusion_matrix(aligned_targets, preds, N_CLASSES),
        her=metrics[3].value,
        metrics=metrics,
        tables={"cer_by_typo": by_typo, "keystrokes": table},
    )


def report_dict(report: EvalReport) -> dict:
    return {
        "metrics": [vars(m) for m in report.metrics],
        "per_subject": report.per_subject.to_dict(orient="records"),
        "n_sentences": int(len(report.per_sentence)),
    }
