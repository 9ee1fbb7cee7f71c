from __future__ import annotations

import json

import pytest

from keystroke_decoder.cli import build_parser, main


def test_parser_knows_every_stage():
    parser = build_parser()
    for command in ("generate", "split", "preprocess", "train-lm", "train", "decode", "evaluate", "analyze", "run-all"):
        args = parser.parse_args([command, "--alpha", "2.5"])
        assert args.command == command and args.alpha == 2.5


def test_unknown_command_exits():
    with pytest.raises(SystemExit):
        build_parser().parse_args(["deploy"])


def test_missing_artifact_exit_code(tmp_path):
    assert main(["evaluate", "--out", str(tmp_path)]) == 3


def test_bad_config_exit_code(tmp_path):
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"synth": {"colour": "red"}}))
    assert main(["generate", "--config", str(cfg), "--out", str(tmp_path)]) == 2
    assert main(["generate", "--config", str(tmp_path / "absent.json"), "--out", str(tmp_path)]) == 2
    assert main(["generate", "--alpha", "-1", "--out", str(tmp_path)]) == 2
    assert main(["generate", "--layout", str(tmp_path / "absent-layout.json"), "--out", str(tmp_path)]) == 2


@pytest.mark.slow
def test_generate_and_split(tmp_path):
    cfg = tmp_path / "tiny.json"
    cfg.write_text(json.dumps({"synth": {"n_subjects": 1, "n_sentences": 20, "n_channels": 4}}))
    assert main(["generate", "--config", str(cfg), "--out", str(tmp_path / "run")]) == 0
    assert main(["split", "--config", str(cfg), "--out", str(tmp_path / "run")]) == 0
    assert main(["split", "--config", str(cfg), "--seed", "3", "--out", str(tmp_path / "run")]) == 2
    assert main(["split", "--config", str(cfg), "--seed", "3", "--force", "--out", str(tmp_path / "run")]) == 0
    assert (tmp_path / "run" / "manifests" / "split.json").exists()
