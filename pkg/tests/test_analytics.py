from __future__ import annotations

import numpy as np
import pandas as pd
import pytest

from keystroke_decoder.domain.errors import DataIntegrityError, ParameterError
from keystroke_decoder.domain.keyboard import LETTERS, N_CLASSES, QWERTY, Hand, encode_text
from keystroke_decoder.domain.models import KeystrokeEvent, SentenceTrial
from keystroke_decoder.services.analytics_service import (
    DecodedSentence, aligned_confusion, build_report, cer_by_group, char_frequency_accuracy, confusion_vs_distance,
    hand_agreement, interkey_intervals, interval_ratio, interval_summary, keystroke_table, kmeans, layout_consistency,
    report_dict, subject_ranking, typing_summary, word_groups,
)


def _decoded(target, pred, subject_id=0, sentence_id=0, typos=()):
    t = encode_text(target)
    return DecodedSentence(subject_id, sentence_id, t, encode_text(pred), [i in typos for i in range(len(t))])


def test_keystroke_table_words_and_errors():
    table = keystroke_table([_decoded("el sol", "el sil")])
    assert table["word"].tolist() == ["el", "el", "", "sol", "sol", "sol"]
    assert table["word_index"].tolist() == [0, 0, -1, 1, 1, 1]
    assert table["errors"].tolist() == [0, 0, 0, 0, 1, 0]


def test_cer_by_typo_uses_attributed_edits():
    table = keystroke_table([_decoded("abc", "abd", typos=(2,)), _decoded("ab", "ab", sentence_id=1)])
    out = cer_by_group(table, "is_typo").set_index("group")
    assert out.loc[True, "cer"] == 1.0 and out.loc[True, "n"] == 1
    assert out.loc[False, "cer"] == 0.0 and out.loc[False, "n_sentences"] == 2


def test_cer_by_group_with_external_grouping():
    table = keystroke_table([_decoded("ab", "xb")])
    out = cer_by_group(table, "pos", {(0, 0, 0): "noun", (0, 0, 1): "verb"}).set_index("group")
    assert out.loc["noun", "cer"] == 1.0 and out.loc["verb", "cer"] == 0.0
    with pytest.raises(DataIntegrityError):
        cer_by_group(table, "pos", {(0, 0, 7): "noun"})


def test_word_groups_bins_training_frequency():
    table = keystroke_table([_decoded("el sol", "el sol")])
    out = word_groups(table, ["el gato come", "el perro"], n_bins=3)
    assert out["freq_bin"].tolist() == ["q1", "q1", "space", "oov", "oov", "oov"]
    assert out["oov"].tolist() == [False, False, False, True, True, True]
    assert out["word_freq"].iloc[0] == 2


def test_char_frequency_needs_enough_classes():
    table = keystroke_table([_decoded("abab", "abbb")])
    out, stat = char_frequency_accuracy(table, n_permutations=100)
    assert out.set_index("class_id")["accuracy"].to_dict() == {0: 0.5, 1: 1.0}
    assert stat is None


def _distance_shaped_confusion():
    dist = QWERTY.distance_matrix()
    counts = np.zeros((N_CLASSES, N_CLASSES))
    counts[:26, :26] = np.round(1 + 100 * (1 - dist))
    np.fill_diagonal(counts, 500)
    return counts


def test_confusion_falls_with_key_distance():
    result = confusion_vs_distance(_distance_shaped_confusion(), n_bins=10, n_permutations=500)
    assert not result.undefined
    assert result.r < -0.95
    assert result.p < 0.05
    assert result.table["n_pairs"].sum() == 26 * 25
    assert result.table["rate"].iloc[0] > result.table["rate"].iloc[-1]


def test_diagonal_confusion_is_undefined():
    result = confusion_vs_distance(np.eye(N_CLASSES) * 10)
    assert result.undefined and result.r is None


def test_aligned_confusion_skips_length_mismatch():
    counts = aligned_confusion([_decoded("ab", "ac"), _decoded("ab", "abc", sentence_id=1)])
    assert counts.sum() == 2
    assert counts[0, 0] == 1 and counts[1, 2] == 1


def test_kmeans_finds_blobs():
    rng = np.random.default_rng(0)
    X = np.vstack([rng.normal(0, 0.1, size=(20, 2)), rng.normal(5, 0.1, size=(20, 2))])
    labels = kmeans(X, 2, seed=0)
    assert len(set(labels[:20])) == 1 and len(set(labels[20:])) == 1
    assert labels[0] != labels[-1]
    assert np.array_equal(labels, kmeans(X, 2, seed=0))
    with pytest.raises(ParameterError):
        kmeans(X, 41)
    with pytest.raises(ParameterError):
        kmeans(X, 1)


def test_kmeans_with_one_cluster_per_point():
    X = np.arange(12, dtype=float).reshape(6, 2) ** 1.5
    labels = kmeans(X, 6, seed=0)
    assert sorted(labels.tolist()) == list(range(6))


def test_hand_agreement_is_label_symmetric():
    class_ids = list(range(26))
    right = np.array([int(QWERTY.hand_of(c) is Hand.RIGHT) for c in class_ids])
    assert hand_agreement(right, class_ids) == 1.0
    assert hand_agreement(1 - right, class_ids) == 1.0
    assert 0.5 <= hand_agreement(np.zeros(26, dtype=int), class_ids) < 1.0


def test_layout_consistency_on_position_embeddings():
    rng = np.random.default_rng(0)
    coords = QWERTY.coordinates()
    class_ids = np.repeat(np.arange(26), 3)
    embeddings = coords[class_ids] + rng.normal(0, 0.05, size=(len(class_ids), 2))
    out = layout_consistency(embeddings, class_ids, k=4, seed=0)
    assert out["n_letters"] == 26
    assert out["same_cluster_distance"] < out["diff_cluster_distance"]


def _trial(sentence_id, times, typos=(), edit_count=0):
    events = [KeystrokeEvent(t, "a", "a", is_typo=i in typos) for i, t in enumerate(times)]
    return SentenceTrial(0, sentence_id, "aaaaa", "aaaaa", events, edit_count)


def test_interkey_intervals_sum_both_gaps():
    trials = [_trial(0, [0.0, 0.2, 0.4, 1.0, 1.2], typos=(3,)), _trial(1, [5.0, 5.3, 5.5])]
    table, stat = interkey_intervals(trials, n_permutations=100)
    assert table["interval"].tolist() == pytest.approx([0.2, 0.4, 0.8, 0.8, 0.2, 0.3, 0.5, 0.2])
    assert table["is_typo"].sum() == 1
    assert stat.test == "mannwhitney" and stat.n == 8
    summary = interval_summary(table).set_index("is_typo")
    assert summary.loc[True, "mean"] == pytest.approx(0.8)
    correct_mean = (0.2 + 0.4 + 0.8 + 0.2 + 0.3 + 0.5 + 0.2) / 7
    assert interval_ratio(table) == pytest.approx(0.8 / correct_mean)


def test_interkey_intervals_without_typos_are_undefined(caplog):
    trials = [_trial(0, [0.0, 0.2, 0.4, 1.0, 1.2]), _trial(1, [5.0, 5.3, 5.5])]
    with caplog.at_level("WARNING"):
        table, stat = interkey_intervals(trials, n_permutations=100)
    assert len(table) == 8
    assert stat.statistic is None and stat.pvalue is None
    assert stat.warning == "no typo keystrokes"
    assert "undefined" in caplog.text
    assert interval_ratio(table) is None
    assert interval_summary(table)["is_typo"].tolist() == [False]


def test_typing_summary():
    trials = [_trial(0, [0.0, 0.3, 0.6, 0.9, 1.2], typos=(1,), edit_count=1), _trial(1, [0.0, 0.6])]
    out = typing_summary(trials)
    assert out["chars_per_minute"] == pytest.approx((200 + 100) / 2)
    assert out["production_time_s"] == pytest.approx(0.9)
    assert out["typo_rate"] == pytest.approx(1 / 7)
    assert out["sentences_with_typo"] == 0.5
    assert out["n_keystrokes"] == 7


def test_subject_ranking_labels():
    per_sentence = pd.DataFrame({
        "subject_id": [0, 0, 1, 1, 2, 2],
        "sentence_id": [0, 1, 0, 1, 0, 1],
        "cer": [0.5, 0.7, 0.1, 0.1, 0.3, 0.2],
    })
    ranking = subject_ranking(per_sentence)
    assert ranking["subject_id"].tolist() == [1, 2, 0]
    assert ranking["label"].tolist() == ["best", "median", "worst"]
    assert ranking["rank"].tolist() == [1, 2, 3]


def test_report_compares_decoders():
    texts = ["el sol", "la casa", "un gato", "una mesa", "el perro", "la idea"]
    main = [_decoded(t, t, sentence_id=i, typos=(0,) if i == 0 else ()) for i, t in enumerate(texts)]
    worse = [_decoded(t, "q" * len(t), sentence_id=i, typos=(0,) if i == 0 else ()) for i, t in enumerate(texts)]
    report = build_report(main, {"worse": worse}, n_permutations=1000)

    assert report.metric("cer").value == 0.0
    assert report.metric("keystroke_accuracy").value == 1.0
    assert report.metric("her").value == 0.0
    assert report.metric("cer_worse").value == 1.0
    assert report.metric("cer_worse").p < 0.05
    assert report.metric("cer_worse").p_fdr == pytest.approx(report.metric("cer_worse").p)
    assert report.metric("cer_typo_worse").n == 1
    assert report.confusion.trace() == sum(len(t) for t in texts)
    assert report.per_subject["label"].tolist() == ["best"]

    as_dict = report_dict(report)
    assert as_dict["n_sentences"] == 6
    assert {m["metric"] for m in as_dict["metrics"]} >= {"cer", "cer_pooled", "cer_typo", "cer_correct", "cer_worse"}


def test_report_needs_sentences():
    with pytest.raises(ParameterError):
        build_report([])


def test_letters_constant_matches_layout():
    assert "".join(sorted(QWERTY.positions)) == LETTERS
