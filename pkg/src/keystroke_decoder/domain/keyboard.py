from __future__ import annotations

import json
import string
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Dict, Iterable, List, Tuple, Union

import numpy as np

from .errors import ConfigError, ParameterError


class KeyKind(str, Enum):
    LETTER = "letter"
    SPACE = "space"
    NUMBER = "number"
    SPECIAL = "special"


class Hand(str, Enum):
    LEFT = "left"
    RIGHT = "right"


LETTERS = string.ascii_lowercase
N_CLASSES = 29
SPACE_ID = 26
NUMBER_ID = 27
SPECIAL_ID = 28
# one glyph per class; Number and Special collapse many characters
CLASS_GLYPHS = LETTERS + " #*"


@dataclass(frozen=True)
class KeyClass:
    id: int
    kind: KeyKind

    @property
    def glyph(self) -> str:
        return CLASS_GLYPHS[self.id]

    @property
    def is_letter(self) -> bool:
        return self.kind is KeyKind.LETTER


KEY_CLASSES: Tuple[KeyClass, ...] = tuple(
    [KeyClass(i, KeyKind.LETTER) for i in range(26)]
    + [KeyClass(SPACE_ID, KeyKind.SPACE), KeyClass(NUMBER_ID, KeyKind.NUMBER), KeyClass(SPECIAL_ID, KeyKind.SPECIAL)]
)


def classify_key(c: str) -> KeyClass:
    """Map one typed character to its class (case-folded; total on single characters)."""
    lower = c.lower()
    if len(lower) == 1 and lower in LETTERS:
        return KEY_CLASSES[ord(lower) - ord("a")]
    if c == " ":
        return KEY_CLASSES[SPACE_ID]
    if c in string.digits:
        return KEY_CLASSES[NUMBER_ID]
    return KEY_CLASSES[SPECIAL_ID]


def encode_text(text: str) -> List[int]:
    return [classify_key(c).id for c in text]


def render(ids: Iterable[int]) -> str:
    return "".join(CLASS_GLYPHS[int(i)] for i in ids)


def normalize_text(text: str) -> str:
    """Lowercase and collapse every character onto its class glyph."""
    return render(encode_text(text))


def is_letter_id(i: int) -> bool:
    return 0 <= int(i) < 26


# ----------------------------
# QWERTY geometry
# ----------------------------
_ROWS = ("qwertyuiop", "asdfghjkl", "zxcvbnm")
_ROW_STAGGER = (0.0, 0.25, 0.75)
_RIGHT_HAND = frozenset("yuiophjklnmb")

LetterKey = Union[str, int]


class KeyboardLayout:
    """Letter-key coordinates (key units) and hand assignment."""

    def __init__(self, positions: Dict[str, Tuple[float, float]], hands: Dict[str, Hand]):
        missing = set(LETTERS) - set(positions)
        if missing or set(positions) != set(hands):
            raise ConfigError(f"Layout must define position and hand for all 26 letters (missing: {sorted(missing)}).")
        self.positions = {k: (float(x), float(y)) for k, (x, y) in positions.items()}
        self.hands = dict(hands)

        coords = self.coordinates()
        diff = coords[:, None, :] - coords[None, :, :]
        self._distances = np.sqrt((diff ** 2).sum(-1))
        self.max_pairwise_distance = float(self._distances.max())
        if self.max_pairwise_distance <= 0:
            raise ConfigError("Layout keys must not all share one position.")

    @classmethod
    def qwerty(cls) -> "KeyboardLayout":
        positions, hands = {}, {}
        for y, (row, offset) in enumerate(zip(_ROWS, _ROW_STAGGER)):
            for x, key in enumerate(row):
                positions[key] = (x + offset, float(y))
                hands[key] = Hand.RIGHT if key in _RIGHT_HAND else Hand.LEFT
        return cls(positions, hands)

    @classmethod
    def from_json(cls, path: str | Path) -> "KeyboardLayout":
        """Read an override file mapping key -> [x, y, hand]."""
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError as e:
            raise ConfigError(f"Keyboard layout file not found: {path}") from e
        except json.JSONDecodeError as e:
            raise ConfigError(f"Keyboard layout file {path} is not valid JSON: {e}") from e
        positions, hands = {}, {}
        try:
            for key, (x, y, hand) in raw.items():
                positions[key.lower()] = (float(x), float(y))
                hands[key.lower()] = Hand(str(hand).lower())
        except (AttributeError, TypeError, ValueError) as e:
            raise ConfigError(f"Keyboard layout entries must be key -> [x, y, \"left\"|\"right\"]: {e}") from e
        return cls(positions, hands)

    def coordinates(self) -> np.ndarray:
        return np.array([self.positions[k] for k in LETTERS], dtype=np.float64)

    def hand_of(self, key: LetterKey) -> Hand:
        return self.hands[LETTERS[_letter_index(key)]]

    def key_distance(self, a: LetterKey, b: LetterKey) -> float:
        return float(self._distances[_letter_index(a), _letter_index(b)] / self.max_pairwise_distance)

    def distance_matrix(self) -> np.ndarray:
        """Normalized 26x26 distance matrix in alphabetical order."""
        return self._distances / self.max_pairwise_distance

    def neighbors(self, key: LetterKey, max_units: float = 1.3) -> List[str]:
        i = _letter_index(key)
        return [LETTERS[j] for j in range(26) if j != i and self._distances[i, j] <= max_units]



def _letter_index(key: LetterKey) -> int:
    if isinstance(key, (int, np.integer)):
        if is_letter_id(int(key)):
            return int(key)
    elif isinstance(key, str) and len(key) == 1 and key.lower() in LETTERS:
        return LETTERS.index(key.lower())
    raise ParameterError(f"Hands and distances are only defined for letters, got {key!r}.")


QWERTY = KeyboardLayout.qwerty()


def hand_of(key: LetterKey) -> Hand:
    return QWERTY.hand_of(key)


def key_distance(a: LetterKey, b: LetterKey) -> float:
    return QWERTY.key_distance(a, b)
