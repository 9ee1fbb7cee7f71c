"""Pipeline stages with file-based handoff.

generate -> split -> preprocess -> train-lm -> train -> decode -> evaluate -> analyze

Every stage checks its upstream manifests, writes its outputs under the output
directory and records a manifest (config hash, seed, input/output hashes, wall time).
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, replace
from functools import cached_property, partial
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import torch

from ..config import PipelineConfig, Settings, config_hash
from ..domain.errors import ConfigError, DataIntegrityError, MissingArtifactError, NumericalError
from ..domain.keyboard import QWERTY, KeyboardLayout, is_letter_id
from ..domain.models import Epoch, EpochMeta, KeystrokeEvent, SentenceTrial, SplitAssignment
from ..domain.stats import sem
from ..domain.textalign import RETURN_KEY, filter_sentences, label_events, trials_from_frames, trials_to_frame
from ..lm.beam import decode_logits
from ..lm.charlm import NgramModel, read_corpus
from ..model import baselines
from ..model.checkpoint import from_parts, to_parts
from ..model.inference import embed, predict_logits
from ..model.network import DecoderConfig, DecoderModel, count_parameters
from ..model.training import SentenceSample, TrainConfig, fit, make_samples, subsample
from ..services import analytics_service as analytics
from ..services.storage_service import ArtifactService
from .corpus import generate_corpus, generate_sentences, pos_lexicon
from .preprocess import EpochScaler, bandpass, baseline_correct, epochize, resample
from .split import cross_split_max_similarity, split_sentences, tfidf
from .synth import SynthConfig, synth_generate

logger = logging.getLogger(__name__)

SENTENCES = "sentences.csv"
EVENTS = "events.csv"
SPLIT = "split.csv"
TRIALS = "trials.csv"
SENTENCE_EDITS = "sentence_edits.csv"
LM_CORPUS = "lm_corpus.txt"
LM_MODEL = "lm.bin"
REPORT = "report.json"
ANALYSIS = "analysis.json"


def _recording_key(subject_id: int) -> str:
    return f"raw/subject-{subject_id:02d}.rec"


@dataclass
class StageContext:
    cfg: PipelineConfig
    settings: Settings
    artifacts: ArtifactService

    @classmethod
    def create(cls, cfg: PipelineConfig, settings: Settings, out_dir: Optional[str] = None, force: bool = False) -> "StageContext":
        artifacts = ArtifactService.from_settings(settings, config_hash(cfg), cfg.seed, out_dir, force)
        torch.set_num_threads(max(1, settings.torch_threads))
        return cls(cfg, settings, artifacts)

    @property
    def store(self):
        return self.artifacts.store

    @cached_property
    def layout(self) -> KeyboardLayout:
        """Keyboard geometry for typos, hands and distances; QWERTY unless keyboard.layout_file is set."""
        name = self.cfg.keyboard.layout_file
        if not name:
            return QWERTY
        path = Path(name)
        if not path.exists():
            path = Path(self.settings.data_dir) / path
        logger.info("Using keyboard layout from %s.", path)
        return KeyboardLayout.from_json(path)


def _finish(ctx: StageContext, stage: str, start: float, inputs: Sequence[str], outputs: Sequence[str], **extra) -> dict:
    return ctx.artifacts.write_manifest(stage, inputs, outputs, time.perf_counter() - start, extra)


# ----------------------------
# generate
# ----------------------------
def _read_sentences(ctx: StageContext) -> List[str]:
    s = ctx.cfg.synth
    if s.sentences_file:
        path = Path(s.sentences_file)
        if not path.exists():
            path = Path(ctx.settings.data_dir) / path
        if not path.exists():
            raise ConfigError(f"synth.sentences_file not found: {s.sentences_file}")
        return [line.strip() for line in path.read_text(encoding="utf-8").splitlines() if line.strip()]
    return generate_sentences(s.n_sentences, seed=ctx.cfg.seed)


def run_generate(ctx: StageContext) -> dict:
    start = time.perf_counter()
    sentences = _read_sentences(ctx)
    subjects = synth_generate(SynthConfig.from_section(ctx.cfg.synth, sentences, ctx.cfg.seed), ctx.layout)

    outputs = [ctx.store.put_csv(SENTENCES, pd.DataFrame({"sentence_id": range(len(sentences)), "read_text": sentences}))]
    rows = []
    for subject in subjects:
        sid = subject.recording.subject_id
        outputs.append(ctx.store.put_recording(_recording_key(sid), subject.recording))
        for trial in subject.trials:
            rows += [
                {"subject_id": sid, "sentence_id": trial.sentence_id, "time_s": e.time, "pressed": e.pressed}
                for e in trial.events
            ]
            rows.append({
                "subject_id": sid, "sentence_id": trial.sentence_id,
                "time_s": subject.return_times[trial.sentence_id], "pressed": RETURN_KEY,
            })
    outputs.append(ctx.store.put_csv(EVENTS, pd.DataFrame(rows)))
    return _finish(
        ctx, "generate", start, [], outputs,
        n_subjects=len(subjects), n_sentences=len(sentences),
        n_keystrokes=sum(s.n_keystrokes for s in subjects),
        injected_typos=sum(s.injected_typos for s in subjects),
        subject_ids=[s.recording.subject_id for s in subjects],
    )


# ----------------------------
# split
# ----------------------------
def _load_split(ctx: StageContext) -> SplitAssignment:
    df = ctx.store.get_csv(SPLIT)
    return SplitAssignment(
        split=dict(zip(df["sentence_id"].astype(int), df["split"].astype(str))),
        cluster=dict(zip(df["sentence_id"].astype(int), df["cluster"].astype(int))),
    )


def run_split(ctx: StageContext) -> dict:
    start = time.perf_counter()
    ctx.artifacts.require("split")
    df = ctx.store.get_csv(SENTENCES)
    sentences = dict(zip(df["sentence_id"].astype(int), df["read_text"].astype(str)))
    s = ctx.cfg.split
    assignment = split_sentences(sentences, s.threshold, s.ratios, ctx.cfg.seed)

    ids = sorted(sentences)
    out = pd.DataFrame({
        "sentence_id": ids,
        "split": [assignment.split[i] for i in ids],
        "cluster": [assignment.cluster[i] for i in ids],
    })
    key = ctx.store.put_csv(SPLIT, out)
    leak = cross_split_max_similarity(tfidf([sentences[i] for i in ids]), assignment, ids)
    sizes = out["split"].value_counts(normalize=True).round(4).to_dict()
    return _finish(
        ctx, "split", start, [SENTENCES], [key],
        fractions=sizes, n_clusters=int(out["cluster"].nunique()), max_cross_split_similarity=leak,
    )


# ----------------------------
# preprocess
# ----------------------------
META_COLUMNS = ["subject_id", "sentence_id", "position", "pressed", "target", "is_typo", "time", "label", "split"]


def _save_epochs(ctx: StageContext, name: str, epochs: Sequence[Epoch], split: SplitAssignment) -> List[str]:
    meta = pd.DataFrame([
        {**vars(ep.meta), "label": ep.label, "split": split.split[ep.meta.sentence_id]} for ep in epochs
    ], columns=META_COLUMNS)
    windows = np.stack([ep.window for ep in epochs]).astype(np.float32)
    tmin, sfreq = epochs[0].tmin, epochs[0].sfreq
    return [
        ctx.store.put_npz(f"{name}.npz", windows=windows, tmin=np.array(tmin), sfreq=np.array(sfreq)),
        ctx.store.put_csv(f"{name}.csv", meta),
    ]


def load_epochs(ctx: StageContext, name: str = "epochs", splits: Optional[Sequence[str]] = None) -> List[Epoch]:
    arrays = ctx.store.get_npz(f"{name}.npz")
    meta = ctx.store.get_csv(f"{name}.csv", dtype={"pressed": str, "target": str})
    tmin, sfreq = float(arrays["tmin"]), float(arrays["sfreq"])
    epochs = []
    for i, row in enumerate(meta.itertuples(index=False)):
        if splits is not None and row.split not in splits:
            continue
        epochs.append(Epoch(
            window=arrays["windows"][i], label=int(row.label), tmin=tmin, sfreq=sfreq,
            meta=EpochMeta(
                subject_id=int(row.subject_id), sentence_id=int(row.sentence_id), position=int(row.position),
                pressed=str(row.pressed), target=str(row.target), is_typo=bool(row.is_typo), time=float(row.time),
            ),
        ))
    return epochs


def load_trials(ctx: StageContext) -> List[SentenceTrial]:
    """Labeled, filtered trials written by the preprocess stage."""
    df = ctx.store.get_csv(TRIALS, dtype={"pressed": str, "target": str})
    edits = ctx.store.get_csv(SENTENCE_EDITS)
    read = ctx.store.get_csv(SENTENCES)
    texts = dict(zip(read["sentence_id"].astype(int), read["read_text"].astype(str)))
    edit_counts = {(int(a), int(b)): int(c) for a, b, c in zip(edits["subject_id"], edits["sentence_id"], edits["edit_count"])}
    trials = []
    for (subject_id, sentence_id), group in df.groupby(["subject_id", "sentence_id"], sort=True):
        group = group.sort_values("keystroke")
        events = [
            KeystrokeEvent(time=float(t), pressed=str(p), target=None if pd.isna(g) else str(g), is_typo=bool(y))
            for t, p, g, y in zip(group["time_s"], group["pressed"], group["target"], group["is_typo"])
        ]
        trials.append(SentenceTrial(
            subject_id=int(subject_id), sentence_id=int(sentence_id), read_text=texts[int(sentence_id)],
            typed_text="".join(e.pressed for e in events), events=events,
            edit_count=edit_counts[(int(subject_id), int(sentence_id))],
        ))
    return trials


def _scaled(epochs: List[Epoch], split: SplitAssignment, clamp: float) -> List[Epoch]:
    train = [ep for ep in epochs if split.split[ep.meta.sentence_id] == "train"]
    return EpochScaler(clamp).fit(train).transform(epochs)


def run_preprocess(ctx: StageContext) -> dict:
    start = time.perf_counter()
    ctx.artifacts.require("preprocess")
    p = ctx.cfg.preprocess
    split = _load_split(ctx)
    events = ctx.store.get_csv(EVENTS, dtype={"pressed": str})
    trials = [label_events(t) for t in trials_from_frames(events, ctx.store.get_csv(SENTENCES))]
    kept, removed = filter_sentences(trials, ctx.cfg.split.max_typos)

    by_subject: Dict[int, List[SentenceTrial]] = {}
    for t in kept:
        by_subject.setdefault(t.subject_id, []).append(t)
    subject_ids = ctx.artifacts.manifest("generate")["extra"]["subject_ids"]

    epochs, wide = [], []
    inputs = [SENTENCES, EVENTS, SPLIT]
    for sid in subject_ids:
        key = _recording_key(sid)
        inputs.append(key)
        rec = resample(bandpass(ctx.store.get_recording(key), p.l_freq, p.h_freq, p.filter_order), p.resample_to)
        subject_trials = by_subject.get(sid, [])
        epochs += [baseline_correct(ep) for ep in epochize(rec, subject_trials, p.tmin, p.tmax)]
        wide += [baseline_correct(ep) for ep in epochize(rec, subject_trials, p.wide_tmin, p.wide_tmax)]
    if not epochs:
        raise DataIntegrityError("Preprocessing produced no epochs.")

    outputs = _save_epochs(ctx, "epochs", _scaled(epochs, split, p.clamp), split)
    outputs += _save_epochs(ctx, "wide_epochs", _scaled(wide, split, p.clamp), split)
    outputs.append(ctx.store.put_csv(TRIALS, trials_to_frame(kept)))
    outputs.append(ctx.store.put_csv(SENTENCE_EDITS, pd.DataFrame(
        [{"subject_id": t.subject_id, "sentence_id": t.sentence_id, "edit_count": t.edit_count} for t in kept],
        columns=["subject_id", "sentence_id", "edit_count"],
    )))
    return _finish(
        ctx, "preprocess", start, inputs, outputs,
        n_epochs=len(epochs), n_wide_epochs=len(wide), removed_sentence_fraction=removed,
        n_channels=int(epochs[0].window.shape[0]), n_times=int(epochs[0].window.shape[1]),
    )


# ----------------------------
# train-lm
# ----------------------------
def run_train_lm(ctx: StageContext) -> dict:
    start = time.perf_counter()
    lm_cfg = ctx.cfg.lm
    if lm_cfg.corpus_file:
        path = Path(lm_cfg.corpus_file)
        if not path.exists():
            raise ConfigError(f"lm.corpus_file not found: {lm_cfg.corpus_file}")
        ctx.store.put_text(LM_CORPUS, "\n".join(read_corpus(path)) + "\n")
    else:
        ctx.store.put_text(LM_CORPUS, generate_corpus(lm_cfg.corpus_chars, lm_cfg.corpus_seed))
    lines = read_corpus(ctx.store.path(LM_CORPUS))
    model = NgramModel.fit(lines, lm_cfg.order, lm_cfg.discount, lm_cfg.end_marker)
    key = ctx.store.put_bytes(LM_MODEL, model.to_bytes())
    held_out = generate_corpus(20_000, lm_cfg.corpus_seed + 1).splitlines()
    return _finish(
        ctx, "train-lm", start, [LM_CORPUS], [LM_CORPUS, key],
        order=lm_cfg.order, n_lines=len(lines), held_out_perplexity=model.perplexity(held_out),
    )


# ----------------------------
# train
# ----------------------------
def _samples(ctx: StageContext, splits: Sequence[str]) -> List[SentenceSample]:
    return make_samples(load_epochs(ctx, "epochs", splits))


def _model_config(ctx: StageContext, use_transformer: Optional[bool]) -> DecoderConfig:
    extra = ctx.artifacts.manifest("preprocess")["extra"]
    n_subjects = len(ctx.artifacts.manifest("generate")["extra"]["subject_ids"])
    cfg = DecoderConfig.from_section(ctx.cfg.model, extra["n_channels"], n_subjects, extra["n_times"], ctx.cfg.seed)
    if use_transformer is not None:
        cfg = replace(cfg, use_transformer=use_transformer)
    return cfg


def load_model(ctx: StageContext, name: str = "model") -> DecoderModel:
    if not ctx.store.exists(f"{name}.json"):
        raise MissingArtifactError(str(ctx.store.path(f"{name}.json")), "train")
    return from_parts(*ctx.store.get_checkpoint(name))


def run_train(
    ctx: StageContext,
    name: str = "model",
    use_transformer: Optional[bool] = None,
    train_fraction: Optional[float] = None,
) -> dict:
    start = time.perf_counter()
    ctx.artifacts.require("train")
    fraction = ctx.cfg.train.train_fraction if train_fraction is None else train_fraction
    train = subsample(_samples(ctx, ["train"]), fraction, ctx.cfg.seed)
    valid = _samples(ctx, ["valid"])
    positions = ctx.store.get_recording(_recording_key(train[0].subject_id)).channel_positions

    torch.manual_seed(ctx.cfg.seed)
    model = DecoderModel(_model_config(ctx, use_transformer), positions)
    tcfg = TrainConfig.from_section(ctx.cfg.train, ctx.cfg.seed)
    try:
        result = fit(model, train, valid, tcfg)
    except NumericalError:
        # best weights seen so far, flagged so downstream stages can tell
        ctx.store.put_checkpoint(name, *to_parts(model, aborted=True))
        raise

    manifest, blob = to_parts(
        model, epoch=result.best_epoch, metrics={"valid_loss": result.best_valid_loss},
        train_fraction=fraction, n_train_sentences=len(train),
    )
    outputs = list(ctx.store.put_checkpoint(name, manifest, blob))
    outputs.append(ctx.store.put_csv(f"{name}_train_log.csv", pd.DataFrame(result.history)))
    stage = "train" if name == "model" else f"train-{name}"
    return _finish(
        ctx, stage, start, ["epochs.npz", "epochs.csv"], outputs,
        best_epoch=result.best_epoch, best_valid_loss=result.best_valid_loss, stopped_early=result.stopped_early,
        train_fraction=fraction, n_train_sentences=len(train), use_transformer=model.cfg.use_transformer,
        n_parameters=count_parameters(model),
    )


# ----------------------------
# decode
# ----------------------------
def _predictions_frame(samples: Sequence[SentenceSample], hyps) -> pd.DataFrame:
    return pd.DataFrame([
        {
            "sentence_id": s.sentence_id, "subject_id": s.subject_id,
            "target_classes": " ".join(map(str, s.labels.tolist())),
            "predicted_classes": " ".join(map(str, h.sequence)),
            "score": round(h.score, 10),
        }
        for s, h in zip(samples, hyps)
    ], columns=["sentence_id", "subject_id", "target_classes", "predicted_classes", "score"])


def decode_split(
    ctx: StageContext, model: DecoderModel, lm: Optional[NgramModel], split: str = "test",
) -> Tuple[pd.DataFrame, pd.DataFrame]:
    """(fused predictions, transformer-argmax predictions) for one split."""
    samples = _samples(ctx, [split])
    logits = predict_logits(model, samples, ctx.cfg.train.batch_keystrokes)
    fused = decode_logits(logits, lm, ctx.cfg.decode.beam, ctx.cfg.decode.alpha)
    greedy = decode_logits(logits, None)
    return _predictions_frame(samples, fused), _predictions_frame(samples, greedy)


def run_decode(ctx: StageContext, name: str = "model") -> dict:
    start = time.perf_counter()
    ctx.artifacts.require("decode")
    model = load_model(ctx, name)
    lm = NgramModel.from_bytes(ctx.store.get_bytes(LM_MODEL))
    fused, greedy = decode_split(ctx, model, lm)
    suffix = "" if name == "model" else f"-{name.removeprefix('model-')}"
    outputs = [
        ctx.store.put_csv(f"predictions{suffix}.csv", fused),
        ctx.store.put_csv(f"predictions{suffix}-nolm.csv", greedy),
    ]
    stage = "decode" if name == "model" else f"decode{suffix}"
    return _finish(
        ctx, stage, start, [f"{name}.json", f"{name}.bin", LM_MODEL], outputs,
        alpha=ctx.cfg.decode.alpha, beam=ctx.cfg.decode.beam, n_sentences=len(fused),
    )


# ----------------------------
# evaluate
# ----------------------------
def _parse(classes: str) -> List[int]:
    return [int(c) for c in str(classes).split()] if isinstance(classes, str) and classes.strip() else []


def decoded_from_frame(df: pd.DataFrame, epochs_meta: Optional[pd.DataFrame] = None) -> List[analytics.DecodedSentence]:
    typos: Dict[Tuple[int, int], List[bool]] = {}
    if epochs_meta is not None:
        for (subj, sent), g in epochs_meta.groupby(["subject_id", "sentence_id"]):
            typos[(int(subj), int(sent))] = g.sort_values("position")["is_typo"].astype(bool).tolist()
    return [
        analytics.DecodedSentence(
            subject_id=int(r.subject_id), sentence_id=int(r.sentence_id),
            target=_parse(r.target_classes), pred=_parse(r.predicted_classes),
            is_typo=typos.get((int(r.subject_id), int(r.sentence_id)), []),
        )
        for r in df.itertuples(index=False)
    ]


def load_decoded(ctx: StageContext, key: str, epochs_meta: Optional[pd.DataFrame] = None) -> List[analytics.DecodedSentence]:
    return decoded_from_frame(ctx.store.get_csv(key, dtype={"target_classes": str, "predicted_classes": str}), epochs_meta)


def _dummy_decoded(ctx: StageContext, meta: pd.DataFrame, decoded: Sequence[analytics.DecodedSentence]):
    chance = baselines.dummy(meta.loc[meta["split"] == "train", "label"].to_numpy())
    modal = int(chance.predict(np.zeros((1, 1)))[0])
    return [
        analytics.DecodedSentence(s.subject_id, s.sentence_id, s.target, [modal] * len(s.target), s.is_typo)
        for s in decoded
    ], modal


def run_evaluate(ctx: StageContext) -> dict:
    start = time.perf_counter()
    ctx.artifacts.require("evaluate")
    meta = ctx.store.get_csv("epochs.csv", dtype={"pressed": str, "target": str})
    decoded = load_decoded(ctx, "predictions.csv", meta)
    dummy_decoded, modal = _dummy_decoded(ctx, meta, decoded)
    comparisons = {"nolm": load_decoded(ctx, "predictions-nolm.csv", meta), "dummy": dummy_decoded}
    inputs = ["predictions.csv", "predictions-nolm.csv", "epochs.csv"]
    if ctx.store.exists("predictions-conv-nolm.csv"):
        comparisons["conv"] = load_decoded(ctx, "predictions-conv-nolm.csv", meta)
        inputs.append("predictions-conv-nolm.csv")

    e = ctx.cfg.eval
    # alpha and beam stay out of the config hash; report what produced the predictions
    decoded_with = ctx.artifacts.manifest("decode")["extra"]
    report = analytics.build_report(decoded, comparisons, e.n_permutations, ctx.cfg.seed, ctx.layout)
    body = analytics.report_dict(report)
    body.update({
        "config_hash": ctx.artifacts.config_hash, "seed": ctx.cfg.seed,
        "decode": {"alpha": decoded_with["alpha"], "beam": decoded_with["beam"]},
        "dummy_class": modal,
        "typing": analytics.typing_summary(load_trials(ctx)),
    })
    outputs = [
        ctx.store.put_json(REPORT, body),
        ctx.store.put_csv("per_sentence.csv", report.per_sentence),
        ctx.store.put_csv("per_subject.csv", report.per_subject),
        ctx.store.put_csv("confusion.csv", pd.DataFrame(report.confusion)),
        ctx.store.put_csv("cer_by_typo.csv", report.tables["cer_by_typo"]),
    ]
    return _finish(ctx, "evaluate", start, inputs, outputs, cer=report.metric("cer").value)


# ----------------------------
# analyze
# ----------------------------
def run_analyze(ctx: StageContext) -> dict:
    start = time.perf_counter()
    ctx.artifacts.require("analyze")
    e, seed = ctx.cfg.eval, ctx.cfg.seed
    store = ctx.store
    results: Dict[str, object] = {}
    outputs: List[str] = []

    # confusion structure of the network's own (position-aligned) predictions
    meta = store.get_csv("epochs.csv", dtype={"pressed": str, "target": str})
    greedy = load_decoded(ctx, "predictions-nolm.csv", meta)
    greedy_table = analytics.keystroke_table(greedy)
    confusion = analytics.aligned_confusion(greedy)
    dc = analytics.confusion_vs_distance(confusion, ctx.layout, e.confusion_bins, e.n_permutations, seed)
    outputs.append(store.put_csv("confusion_distance.csv", dc.table))
    results["confusion_distance"] = {"r": dc.r, "p": dc.p, "undefined": dc.undefined}

    freq, freq_stat = analytics.char_frequency_accuracy(greedy_table, e.n_permutations, seed)
    outputs.append(store.put_csv("char_frequency.csv", freq))
    results["char_frequency"] = vars(freq_stat) if freq_stat else None

    # word frequency and OOV groups of the fused predictions
    fused_table = analytics.keystroke_table(load_decoded(ctx, "predictions.csv", meta))
    split = _load_split(ctx)
    sentences = store.get_csv(SENTENCES)
    train_text = [t for i, t in zip(sentences["sentence_id"], sentences["read_text"]) if split.split[int(i)] == "train"]
    words = analytics.word_groups(fused_table, train_text, e.word_frequency_bins)
    by_freq = analytics.cer_by_group(words, "freq_bin")
    outputs.append(store.put_csv("cer_by_word_frequency.csv", by_freq))
    lexicon = pos_lexicon()
    words["pos"] = [lexicon.get(w, "other") if w else "space" for w in words["word"]]
    outputs.append(store.put_csv("cer_by_pos.csv", analytics.cer_by_group(words, "pos")))
    outputs.append(store.put_csv("cer_by_oov.csv", analytics.cer_by_group(words[words["word"] != ""], "oov")))

    # embeddings of test letters
    model = load_model(ctx)
    test_epochs = [ep for ep in load_epochs(ctx, "epochs", ["test"]) if is_letter_id(ep.label)]
    z = embed(model, test_epochs)
    labels = [ep.label for ep in test_epochs]
    clusters = {}
    for k in e.kmeans_k:
        if k == 2:
            assignment = analytics.kmeans(z, 2, seed)
            clusters["cluster_k2"] = assignment
            results["kmeans_hand_agreement"] = analytics.hand_agreement(assignment, labels, ctx.layout)
        elif len(set(labels)) >= k:
            results[f"layout_consistency_k{k}"] = analytics.layout_consistency(z, labels, k, seed, ctx.layout)
    outputs.append(store.put_csv("embedding_clusters.csv", pd.DataFrame({
        "subject_id": [ep.meta.subject_id for ep in test_epochs],
        "sentence_id": [ep.meta.sentence_id for ep in test_epochs],
        "position": [ep.meta.position for ep in test_epochs],
        "label": labels, **clusters,
    })))

    # time-resolved ridge decoding on wide epochs
    wide = load_epochs(ctx, "wide_epochs")
    label_fns = {"hand": partial(baselines.hand_label, layout=ctx.layout), "class": baselines.class_label}
    for label_name, label_fn in label_fns.items():
        curve = baselines.time_resolved(
            wide, label_fn, e.cv_folds, n_permutations=e.timecourse_permutations, seed=seed,
        )
        outputs.append(store.put_csv("timecourse.csv" if label_name == "hand" else f"timecourse_{label_name}.csv", curve))
        results[f"timecourse_{label_name}_peak_s"] = baselines.peak_time(curve)

    # typing behaviour
    trials = load_trials(ctx)
    intervals, interval_stat = analytics.interkey_intervals(trials, e.n_permutations, seed)
    outputs.append(store.put_csv("interkey_intervals.csv", analytics.interval_summary(intervals)))
    results["interkey_intervals"] = {**vars(interval_stat), "ratio": analytics.interval_ratio(intervals)}
    results["typing"] = analytics.typing_summary(trials)

    outputs.append(store.put_json(ANALYSIS, results))
    return _finish(ctx, "analyze", start, ["predictions.csv", "predictions-nolm.csv", "wide_epochs.npz"], outputs)


# ----------------------------
# run-all
# ----------------------------
STAGE_RUNNERS: Dict[str, Callable[[StageContext], dict]] = {
    "generate": run_generate,
    "split": run_split,
    "preprocess": run_preprocess,
    "train-lm": run_train_lm,
    "train": run_train,
    "decode": run_decode,
    "evaluate": run_evaluate,
    "analyze": run_analyze,
}


def run_scaling(ctx: StageContext, fractions: Sequence[float]) -> pd.DataFrame:
    """Retrain on uniformly drawn subsets of the training sentences; CER of the fused decoder on test."""
    lm = NgramModel.from_bytes(ctx.store.get_bytes(LM_MODEL))
    rows = []
    for fraction in sorted(set(fractions) | {1.0}):
        name = "model" if fraction == 1.0 else f"model-f{fraction:g}"
        if fraction != 1.0:
            run_train(ctx, name=name, train_fraction=fraction)
        fused, _ = decode_split(ctx, load_model(ctx, name), lm)
        ctx.store.put_csv(f"scaling/{name}-predictions.csv", fused)
        cers = analytics.per_sentence_cer(decoded_from_frame(fused))["cer"]
        n_train = ctx.store.get_json(f"{name}.json").get("n_train_sentences")
        rows.append({"fraction": fraction, "n_train_sentences": n_train, "cer_mean": cers.mean(), "cer_sem": sem(cers.to_numpy())})
    table = pd.DataFrame(rows)
    ctx.store.put_csv("scaling.csv", table)
    return table


def run_all(ctx: StageContext) -> None:
    e = ctx.cfg.eval
    for stage in ("generate", "split", "preprocess", "train-lm", "train"):
        STAGE_RUNNERS[stage](ctx)
    if e.conv_ablation:
        run_train(ctx, name="model-conv", use_transformer=False)
    run_decode(ctx)
    if e.conv_ablation:
        run_decode(ctx, name="model-conv")
    run_evaluate(ctx)
    run_analyze(ctx)
    if e.scaling_fractions:
        run_scaling(ctx, e.scaling_fractions)
