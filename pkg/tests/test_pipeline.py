from __future__ import annotations

import json
import shutil
from pathlib import Path

import pandas as pd
import pytest

from keystroke_decoder.config import Settings, load_config
from keystroke_decoder.domain.errors import ConfigError, MissingArtifactError
from keystroke_decoder.domain.keyboard import QWERTY, Hand
from keystroke_decoder.pipeline.pipeline import (
    StageContext, decode_split, load_epochs, load_model, load_trials, run_all, run_decode, run_evaluate, run_generate,
    run_scaling, run_split,
)

SMOKE = Path(__file__).resolve().parents[1] / "configs" / "smoke.json"

pytestmark = pytest.mark.slow


def _ctx(out_dir, **overrides):
    cfg = load_config(SMOKE, overrides)
    return StageContext.create(cfg, Settings(out_dir=str(out_dir)), str(out_dir))


@pytest.fixture(scope="module")
def finished(tmp_path_factory):
    ctx = _ctx(tmp_path_factory.mktemp("smoke"))
    run_all(ctx)
    return ctx


def test_every_stage_leaves_a_manifest(finished):
    for stage in ("generate", "split", "preprocess", "train-lm", "train", "decode", "evaluate", "analyze"):
        manifest = finished.artifacts.manifest(stage)
        assert manifest["config_hash"] == finished.artifacts.config_hash
        assert manifest["seed"] == 0
        for key, digest in manifest["outputs"].items():
            assert finished.store.sha256(key) == digest
    assert finished.artifacts.manifest("train")["extra"]["n_parameters"] > 0


def test_report_contents(finished):
    report = finished.store.get_json("report.json")
    names = {m["metric"] for m in report["metrics"]}
    assert {"cer", "cer_pooled", "her", "keystroke_accuracy", "cer_nolm", "cer_dummy"} <= names
    cer = next(m for m in report["metrics"] if m["metric"] == "cer")
    assert 0.0 <= cer["value"]
    assert report["decode"] == {"alpha": 5.0, "beam": 5}
    assert report["n_sentences"] == len(finished.store.get_csv("predictions.csv"))
    assert report["typing"]["n_keystrokes"] > 0


def test_predictions_cover_test_split(finished):
    fused = finished.store.get_csv("predictions.csv", dtype={"target_classes": str, "predicted_classes": str})
    split = finished.store.get_csv("split.csv")
    test_ids = set(split.loc[split["split"] == "test", "sentence_id"])
    assert set(fused["sentence_id"]) <= test_ids
    for target, pred in zip(fused["target_classes"], fused["predicted_classes"]):
        assert len(target.split()) == len(pred.split())


def test_epochs_round_trip(finished):
    epochs = load_epochs(finished, "epochs", ["train"])
    assert epochs and all(ep.window.shape == (8, 25) for ep in epochs)
    assert all(0 <= ep.label < 29 for ep in epochs)
    trials = load_trials(finished)
    assert {t.subject_id for t in trials} == {0, 1}


def test_analysis_outputs(finished):
    analysis = finished.store.get_json("analysis.json")
    assert 0.5 <= analysis["kmeans_hand_agreement"] <= 1.0
    assert "timecourse_hand_peak_s" in analysis
    timecourse = finished.store.get_csv("timecourse.csv")
    assert set(timecourse["subject_id"]) == {-1, 0, 1}
    for name in ("confusion_distance.csv", "cer_by_word_frequency.csv", "cer_by_pos.csv", "interkey_intervals.csv"):
        assert finished.store.exists(name)


def test_decoding_is_deterministic(finished):
    model = load_model(finished)
    fused, _ = decode_split(finished, model, None)
    again, _ = decode_split(finished, load_model(finished), None)
    pd.testing.assert_frame_equal(fused, again)


def test_scaling_retrains_on_subsets(finished):
    table = run_scaling(finished, [0.5])
    assert table["fraction"].tolist() == [0.5, 1.0]
    assert table["n_train_sentences"].iloc[0] < table["n_train_sentences"].iloc[1]
    assert finished.store.exists("scaling/model-f0.5-predictions.csv")


def test_generate_is_reproducible(tmp_path):
    a, b = _ctx(tmp_path / "a"), _ctx(tmp_path / "b")
    run_generate(a)
    run_generate(b)
    for key in ("sentences.csv", "events.csv", "raw/subject-00.rec"):
        assert a.store.sha256(key) == b.store.sha256(key)


def test_missing_upstream_stage(tmp_path):
    with pytest.raises(MissingArtifactError):
        run_split(_ctx(tmp_path))
    with pytest.raises(MissingArtifactError):
        load_model(_ctx(tmp_path))


def test_config_change_is_detected(tmp_path):
    run_generate(_ctx(tmp_path))
    with pytest.raises(ConfigError):
        run_split(_ctx(tmp_path, seed=1))
    run_split(_ctx(tmp_path, **{"decode.alpha": 1.0}))


def test_layout_override_reaches_generation(tmp_path):
    mirrored = {
        k: [x, y, (Hand.LEFT if QWERTY.hand_of(k) is Hand.RIGHT else Hand.RIGHT).value]
        for k, (x, y) in QWERTY.positions.items()
    }
    (tmp_path / "mirrored.json").write_text(json.dumps(mirrored))
    settings = Settings(out_dir=str(tmp_path / "m"), data_dir=str(tmp_path))
    ctx = StageContext.create(load_config(SMOKE, {"keyboard.layout_file": "mirrored.json"}), settings, str(tmp_path / "m"))
    assert ctx.layout.hand_of("q") is Hand.RIGHT
    run_generate(ctx)

    plain = _ctx(tmp_path / "q")
    run_generate(plain)
    assert plain.layout is QWERTY
    assert ctx.store.sha256("raw/subject-00.rec") != plain.store.sha256("raw/subject-00.rec")
    assert ctx.artifacts.config_hash != plain.artifacts.config_hash


def test_report_records_the_decode_run_settings(finished, tmp_path):
    out = tmp_path / "copy"
    shutil.copytree(finished.store.root, out)
    run_decode(_ctx(out, **{"decode.alpha": 0.0, "decode.beam": 2}))
    run_evaluate(_ctx(out))
    assert _ctx(out).artifacts.manifest("decode")["extra"]["alpha"] == 0.0
    report = json.loads((out / "report.json").read_text())
    assert report["decode"] == {"alpha": 0.0, "beam": 2}


def test_run_all_is_byte_reproducible(finished, tmp_path):
    again = _ctx(tmp_path / "again")
    run_all(again)
    for key in ("predictions.csv", "predictions-nolm.csv", "report.json", "analysis.json"):
        assert again.store.sha256(key) == finished.store.sha256(key), key
