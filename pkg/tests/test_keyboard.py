from __future__ import annotations

import json
from itertools import combinations

import numpy as np
import pytest

from keystroke_decoder.domain.errors import ConfigError, ParameterError
from keystroke_decoder.domain.keyboard import (
    LETTERS,
    NUMBER_ID,
    QWERTY,
    SPACE_ID,
    SPECIAL_ID,
    Hand,
    KeyboardLayout,
    classify_key,
    encode_text,
    key_distance,
    normalize_text,
    render,
)


@pytest.mark.parametrize(
    "char, expected",
    [("a", 0), ("A", 0), ("z", 25), (" ", SPACE_ID), ("7", NUMBER_ID), ("ñ", SPECIAL_ID), (",", SPECIAL_ID)],
)
def test_classify_key(char, expected):
    assert classify_key(char).id == expected


def test_render_uses_placeholder_glyphs():
    assert render(encode_text("Hola 2, mundo")) == "hola #* mundo"
    assert normalize_text("ABC") == "abc"


@pytest.mark.parametrize("key, hand", [("q", Hand.LEFT), ("b", Hand.RIGHT), ("h", Hand.RIGHT), ("y", Hand.RIGHT), ("t", Hand.LEFT)])
def test_hand_of(key, hand):
    assert QWERTY.hand_of(key) is hand


def test_hand_of_rejects_non_letters():
    with pytest.raises(ParameterError):
        QWERTY.hand_of(SPACE_ID)


def test_key_distance_identity_and_adjacent_keys():
    assert key_distance("q", "q") == 0.0
    assert key_distance("f", "g") == pytest.approx(1.0 / QWERTY.max_pairwise_distance)


def test_max_distance_is_normalized_to_one():
    assert QWERTY.distance_matrix().max() == pytest.approx(1.0)
    coords = QWERTY.coordinates()
    brute = max(np.linalg.norm(coords[i] - coords[j]) for i, j in combinations(range(26), 2))
    assert QWERTY.max_pairwise_distance == pytest.approx(brute)


def test_distance_is_a_metric():
    d = QWERTY.distance_matrix()
    assert np.allclose(d, d.T)
    assert np.all(np.diag(d) == 0)
    off = d + np.eye(26)
    assert np.all(off > 0)
    # triangle inequality
    assert np.all(d[:, None, :] <= d[:, :, None] + d[None, :, :] + 1e-12)


def test_layout_from_json(tmp_path):
    raw = {k: [x, y, QWERTY.hand_of(k).value] for k, (x, y) in QWERTY.positions.items()}
    raw["a"] = [0.0, 5.0, "left"]
    path = tmp_path / "layout.json"
    path.write_text(json.dumps(raw))
    layout = KeyboardLayout.from_json(path)
    assert layout.positions["a"] == (0.0, 5.0)
    assert layout.hand_of("p") is Hand.RIGHT
    assert set(layout.positions) == set(LETTERS)


def test_layout_from_json_rejects_bad_files(tmp_path):
    with pytest.raises(ConfigError):
        KeyboardLayout.from_json(tmp_path / "absent.json")
    broken = tmp_path / "broken.json"
    broken.write_text("{not json")
    with pytest.raises(ConfigError):
        KeyboardLayout.from_json(broken)
    partial = tmp_path / "partial.json"
    partial.write_text(json.dumps({"a": [0, 0, "left"]}))
    with pytest.raises(ConfigError):
        KeyboardLayout.from_json(partial)
    bad_hand = tmp_path / "bad_hand.json"
    bad_hand.write_text(json.dumps({k: [x, y, "middle"] for k, (x, y) in QWERTY.positions.items()}))
    with pytest.raises(ConfigError):
        KeyboardLayout.from_json(bad_hand)
