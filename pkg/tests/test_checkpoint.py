from __future__ import annotations

import json

import pytest
import torch

from keystroke_decoder.adapters.storage_local import LocalStorageAdapter
from keystroke_decoder.domain.errors import FormatError
from keystroke_decoder.model.checkpoint import FORMAT, from_parts, to_parts


def test_round_trip_preserves_outputs(tiny_model, tmp_path):
    tiny_model.eval()
    windows = torch.randn(5, 8, 25)
    subjects = torch.tensor([0, 0, 1, 1, 1])
    with torch.no_grad():
        expected, _ = tiny_model(windows, subjects, [2, 3])

    manifest, blob = to_parts(tiny_model, best_epoch=4, aborted=False)
    store = LocalStorageAdapter(tmp_path)
    store.put_checkpoint("model", manifest, blob)
    model = from_parts(*store.get_checkpoint("model"))

    assert not model.training
    assert model.cfg == tiny_model.cfg
    with torch.no_grad():
        got, _ = model(windows, subjects, [2, 3])
    assert torch.allclose(got, expected, atol=1e-6)


def test_manifest_indexes_the_blob(tiny_model):
    manifest, blob = to_parts(tiny_model, best_epoch=1)
    assert manifest["format"] == FORMAT and manifest["best_epoch"] == 1
    assert len(blob) == 4 * sum(e["count"] for e in manifest["tensors"])
    entry = next(e for e in manifest["tensors"] if e["name"] == "subjects.weights")
    assert entry["shape"] == [2, 4, 4]
    assert json.loads(json.dumps(manifest)) == manifest


def test_wrong_format_raises(tiny_model):
    manifest, blob = to_parts(tiny_model)
    manifest["format"] = "something/2"
    with pytest.raises(FormatError):
        from_parts(manifest, blob)


def test_short_blob_raises(tiny_model):
    manifest, blob = to_parts(tiny_model)
    with pytest.raises(FormatError):
        from_parts(manifest, blob[:-8])


def test_architecture_mismatch_raises(tiny_model):
    manifest, blob = to_parts(tiny_model)
    manifest["config"]["n_subjects"] = 3
    with pytest.raises(FormatError):
        from_parts(manifest, blob)
