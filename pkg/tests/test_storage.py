from __future__ import annotations

import numpy as np
import pandas as pd
import pytest

from keystroke_decoder.adapters.storage_local import LocalStorageAdapter
from keystroke_decoder.domain.errors import ConfigError, FormatError, MissingArtifactError
from keystroke_decoder.domain.models import Recording
from keystroke_decoder.services.storage_service import ArtifactService, manifest_key


@pytest.fixture
def store(tmp_path):
    return LocalStorageAdapter(tmp_path)


def _recording(n_channels=3, n_samples=50):
    rng = np.random.default_rng(0)
    return Recording(
        data=rng.normal(size=(n_channels, n_samples)).astype(np.float32), sfreq=250.0,
        channel_positions=rng.uniform(-1, 1, size=(n_channels, 2)), device="eeg", subject_id=2,
    )


def test_recording_round_trip(store):
    rec = _recording()
    store.put_recording("raw/subject-02.rec", rec)
    back = store.get_recording("raw/subject-02.rec")
    assert np.array_equal(back.data, rec.data)
    assert np.allclose(back.channel_positions, rec.channel_positions)
    assert (back.sfreq, back.device, back.subject_id) == (250.0, "eeg", 2)


def test_truncated_recording_raises(store):
    store.put_recording("r.rec", _recording())
    blob = store.get_bytes("r.rec")
    store.put_bytes("r.rec", blob[:-4])
    with pytest.raises(FormatError):
        store.get_recording("r.rec")


@pytest.mark.parametrize("blob", [b"no header", b"{not json\n", b'{"format": "other/1"}\n'])
def test_bad_recording_header_raises(store, blob):
    store.put_bytes("r.rec", blob)
    with pytest.raises(FormatError):
        store.get_recording("r.rec")


def test_csv_keeps_literal_strings(store):
    df = pd.DataFrame({"pressed": ["n", "a", "NA", " "], "target": ["n", None, "NA", " "]})
    store.put_csv("events.csv", df)
    back = store.get_csv("events.csv")
    assert back["pressed"].tolist() == ["n", "a", "NA", " "]
    assert pd.isna(back["target"][1])
    assert back["target"][2] == "NA"


def test_json_handles_numpy(store):
    store.put_json("x.json", {"a": np.float64(1.5), "b": np.arange(3)})
    assert store.get_json("x.json") == {"a": 1.5, "b": [0, 1, 2]}


def _service(store, config_hash="a" * 64, force=False):
    return ArtifactService(store, config_hash, seed=3, force=force)


def test_manifest_records_hashes(store):
    store.put_text("sentences.csv", "sentence_id,text\n0,hola\n")
    svc = _service(store)
    m = svc.write_manifest("generate", [], ["sentences.csv"], 1.23456, {"n": 1})
    assert m["outputs"]["sentences.csv"] == store.sha256("sentences.csv")
    assert len(m["outputs"]["sentences.csv"]) == 64
    assert m["seed"] == 3 and m["wall_time_s"] == 1.235 and m["extra"] == {"n": 1}
    assert store.get_json(manifest_key("generate")) == m


def test_require_missing_upstream(store):
    with pytest.raises(MissingArtifactError) as info:
        _service(store).require("split")
    assert info.value.stage == "generate"
    assert info.value.exit_code == 3


def test_require_missing_output(store):
    store.put_text("sentences.csv", "x")
    _service(store).write_manifest("generate", [], ["sentences.csv"], 0.0)
    store.path("sentences.csv").unlink()
    with pytest.raises(MissingArtifactError):
        _service(store).require("split")


def test_require_config_hash_mismatch(store):
    store.put_text("sentences.csv", "x")
    _service(store, "a" * 64).write_manifest("generate", [], ["sentences.csv"], 0.0)
    _service(store, "a" * 64).require("split")
    with pytest.raises(ConfigError):
        _service(store, "b" * 64).require("split")
    _service(store, "b" * 64, force=True).require("split")


def test_train_lm_has_no_upstream(store):
    _service(store).require("train-lm")
