"""Character n-gram language model over the 29 key classes.

Interpolated Kneser-Ney with one absolute discount. The model is stored the way
backoff tables are usually stored: one sorted key array per order holding
log10 P(c | h) for every seen n-gram, and one per context length holding the
log10 backoff weight of every seen history. Keys pack symbols in base 32.
"""
from __future__ import annotations

import io
import logging
import math
import struct
from pathlib import Path
from typing import Dict, Iterable, List, Sequence, Tuple

import numpy as np

from ..domain.errors import FormatError, ParameterError
from ..domain.keyboard import N_CLASSES, encode_text

logger = logging.getLogger(__name__)

EOS = N_CLASSES            # scored only when the model is built with end markers
BOS = N_CLASSES + 1        # history padding, never predicted
BASE = 32

MAGIC = b"KDLM"
VERSION = 1
_HEADER = struct.Struct("<4sHHdBHd")   # magic, version, order, discount, end_marker, vocab, empty-history bow
_COUNT = struct.Struct("<Q")

State = Tuple[int, ...]


def _encode(symbols: Sequence[int]) -> int:
    key = 0
    for s in symbols:
        key = key * BASE + int(s)
    return key


def _lookup(keys: np.ndarray, values: np.ndarray, key: int, default: float = 0.0) -> float:
    i = int(np.searchsorted(keys, key))
    if i < len(keys) and keys[i] == key:
        return float(values[i])
    return default


class NgramModel:
    def __init__(
        self,
        order: int,
        discount: float,
        end_marker: bool,
        probs: List[Tuple[np.ndarray, np.ndarray]],
        bows: List[Tuple[np.ndarray, np.ndarray]],
        empty_bow: float,
    ):
        self.order = order
        self.discount = discount
        self.end_marker = end_marker
        self.vocab = N_CLASSES + (1 if end_marker else 0)
        self._probs = probs          # index k: n-grams of order k + 1
        self._bows = bows            # index k: histories of length k + 1
        self._empty_bow = empty_bow
        self._cache: Dict[State, np.ndarray] = {}

    # ----------------------------
    # Training
    # ----------------------------
    @classmethod
    def fit(
        cls,
        corpus: Iterable[str],
        order: int = 9,
        discount: float = 0.75,
        end_marker: bool = False,
    ) -> "NgramModel":
        if order < 1:
            raise ParameterError(f"order must be >= 1, got {order}.")
        if not 0.0 <= discount <= 1.0:
            raise ParameterError(f"discount must lie in [0, 1], got {discount}.")

        pad = [BOS] * (order - 1)
        stream: List[int] = []
        n_sentences = 0
        for line in corpus:
            line = line.rstrip("\n")
            if not line:
                continue
            stream += pad + encode_text(line) + ([EOS] if end_marker else [])
            n_sentences += 1
        if not n_sentences:
            raise ParameterError("Cannot fit a language model on an empty corpus.")

        symbols = np.asarray(stream, dtype=np.int64)
        predicted = symbols != BOS
        vocab = N_CLASSES + (1 if end_marker else 0)

        # windows of length k ending at every position; padding keeps them inside one sentence
        windows: List[np.ndarray] = []
        key = symbols.copy()
        for k in range(1, order + 1):
            if k > 1:
                key = np.zeros_like(symbols)
                key[k - 1:] = symbols[: len(symbols) - k + 1] * BASE ** (k - 1) + windows[-1][k - 1:]
            windows.append(key)

        counts: List[Tuple[np.ndarray, np.ndarray]] = [None] * order   # type: ignore[list-item]
        top_keys, top_counts = np.unique(windows[order - 1][predicted], return_counts=True)
        counts[order - 1] = (top_keys, top_counts.astype(np.float64))
        for k in range(order - 1, 0, -1):
            # continuation counts: distinct left extensions of each n-gram
            suffixes = counts[k][0] % BASE ** k
            keys, cont = np.unique(suffixes, return_counts=True)
            counts[k - 1] = (keys, cont.astype(np.float64))

        probs: List[Tuple[np.ndarray, np.ndarray]] = []
        bows: List[Tuple[np.ndarray, np.ndarray]] = []
        empty_bow = 0.0
        with np.errstate(divide="ignore"):
            for k in range(order):
                keys, cnt = counts[k]
                contexts, inverse, n_types = np.unique(keys // BASE, return_inverse=True, return_counts=True)
                totals = np.bincount(inverse, weights=cnt)
                gamma = discount * n_types / totals
                if k == 0:
                    lower = np.full(len(keys), 1.0 / vocab)
                    empty_bow = float(np.log10(gamma[0]))
                else:
                    lower_keys, lower_logp = probs[k - 1]
                    idx = np.searchsorted(lower_keys, keys % BASE ** k)
                    lower = 10.0 ** lower_logp[idx]
                    bows.append((contexts, np.log10(gamma)))
                p = np.maximum(cnt - discount, 0.0) / totals[inverse] + gamma[inverse] * lower
                probs.append((keys, np.log10(p)))

        model = cls(order, discount, end_marker, probs, bows, empty_bow)
        logger.info(
            "Fitted %d-gram model on %d sentences (%d n-grams).",
            order, n_sentences, sum(len(k) for k, _ in probs),
        )
        return model

    # ----------------------------
    # Queries
    # ----------------------------
    def initial_state(self) -> State:
        return (BOS,) * (self.order - 1)

    def advance(self, state: State, c: int) -> State:
        if self.order == 1:
            return ()
        return (tuple(state) + (int(c),))[-(self.order - 1):]

    def logprobs(self, history: Sequence[int]) -> np.ndarray:
        """Natural-log P(c | history) for every predictable symbol c."""
        h = tuple(int(s) for s in history)[-(self.order - 1):] if self.order > 1 else ()
        cached = self._cache.get(h)
        if cached is not None:
            return cached

        out = np.zeros(self.vocab)
        resolved = np.zeros(self.vocab, dtype=bool)
        acc = 0.0
        for start in range(len(h) + 1):
            ctx = h[start:]
            keys, logp = self._probs[len(ctx)]
            base = _encode(ctx) * BASE
            lo, hi = np.searchsorted(keys, [base, base + BASE])
            syms = (keys[lo:hi] - base).astype(int)
            fresh = ~resolved[syms]
            out[syms[fresh]] = acc + logp[lo:hi][fresh]
            resolved[syms[fresh]] = True
            if resolved.all():
                break
            acc += self._bow(ctx)
        else:
            out[~resolved] = acc + math.log10(1.0 / self.vocab)

        out = out * math.log(10.0)
        out.setflags(write=False)
        self._cache[h] = out
        return out

    def _bow(self, ctx: State) -> float:
        if not ctx:
            return self._empty_bow
        keys, values = self._bows[len(ctx) - 1]
        return _lookup(keys, values, _encode(ctx))

    def logprob(self, c: int, history: Sequence[int]) -> float:
        return float(self.logprobs(history)[int(c)])

    def score_sentence(self, text: str) -> float:
        """Chain-rule natural-log probability of one sentence (plus its end marker when modeled)."""
        state = self.initial_state()
        total = 0.0
        symbols = encode_text(text) + ([EOS] if self.end_marker else [])
        for c in symbols:
            total += self.logprob(c, state)
            state = self.advance(state, c)
        return total

    def perplexity(self, lines: Iterable[str]) -> float:
        total, n = 0.0, 0
        for line in lines:
            line = line.rstrip("\n")
            if not line:
                continue
            total += self.score_sentence(line)
            n += len(line) + (1 if self.end_marker else 0)
        if n == 0:
            raise ParameterError("Perplexity needs at least one non-empty line.")
        return math.exp(-total / n)

    # ----------------------------
    # Binary format
    # ----------------------------
    def to_bytes(self) -> bytes:
        buf = io.BytesIO()
        buf.write(_HEADER.pack(MAGIC, VERSION, self.order, self.discount, int(self.end_marker), self.vocab, self._empty_bow))
        for keys, values in self._probs + self._bows:
            buf.write(_COUNT.pack(len(keys)))
            buf.write(keys.astype("<i8").tobytes())
            buf.write(values.astype("<f8").tobytes())
        return buf.getvalue()

    @classmethod
    def from_bytes(cls, blob: bytes) -> "NgramModel":
        if len(blob) < _HEADER.size:
            raise FormatError("Language model file is truncated (header).")
        magic, version, order, discount, end_marker, vocab, empty_bow = _HEADER.unpack_from(blob, 0)
        if magic != MAGIC:
            raise FormatError(f"Not a language model file (magic {magic!r}).")
        if version != VERSION:
            raise FormatError(f"Unsupported language model version {version} (expected {VERSION}).")
        if order < 1 or vocab != N_CLASSES + end_marker:
            raise FormatError("Corrupt language model header.")

        offset = _HEADER.size
        tables = []
        for _ in range(2 * order - 1):
            if offset + _COUNT.size > len(blob):
                raise FormatError("Language model file is truncated (table header).")
            (n,) = _COUNT.unpack_from(blob, offset)
            offset += _COUNT.size
            end = offset + 16 * n
            if end > len(blob):
                raise FormatError("Language model file is truncated (table body).")
            keys = np.frombuffer(blob, dtype="<i8", count=n, offset=offset).astype(np.int64)
            values = np.frombuffer(blob, dtype="<f8", count=n, offset=offset + 8 * n).astype(np.float64)
            tables.append((keys, values))
            offset = end
        if offset != len(blob):
            raise FormatError("Trailing bytes after language model tables.")
        return cls(order, discount, bool(end_marker), tables[:order], tables[order:], empty_bow)

    def save(self, path: str | Path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path: str | Path) -> "NgramModel":
        return cls.from_bytes(Path(path).read_bytes())


def read_corpus(path: str | Path) -> List[str]:
    return [line for line in Path(path).read_text(encoding="utf-8").splitlines() if line.strip()]
