from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Tuple

import numpy as np


@dataclass(frozen=True)
class KeystrokeEvent:
    time: float                     # seconds from recording start
    pressed: str
    target: Optional[str] = None    # None = insertion (no intended character)
    is_typo: bool = False

    def labeled(self, target: Optional[str]) -> "KeystrokeEvent":
        return replace(self, target=target, is_typo=(target is None or target != self.pressed))


@dataclass
class SentenceTrial:
    subject_id: int
    sentence_id: int
    read_text: str
    typed_text: str
    events: List[KeystrokeEvent]
    edit_count: int = 0

    def __post_init__(self):
        times = [e.time for e in self.events]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError(f"Events of sentence {self.sentence_id} are not strictly increasing in time.")


@dataclass
class Recording:
    data: np.ndarray                # channels x samples
    sfreq: float
    channel_positions: np.ndarray   # channels x 2
    device: str                     # eeg|meg
    subject_id: int

    def __post_init__(self):
        if self.sfreq <= 0:
            raise ValueError("sfreq must be > 0.")
        if self.data.ndim != 2 or self.data.shape[0] < 1:
            raise ValueError("data must be a channels x samples matrix with at least one channel.")
        if len(self.channel_positions) != self.data.shape[0]:
            raise ValueError("channel_positions must have one row per channel.")

    @property
    def n_channels(self) -> int:
        return self.data.shape[0]

    @property
    def duration(self) -> float:
        return self.data.shape[1] / self.sfreq

    def with_data(self, data: np.ndarray, sfreq: Optional[float] = None) -> "Recording":
        return replace(self, data=data, sfreq=self.sfreq if sfreq is None else sfreq)


@dataclass(frozen=True)
class EpochMeta:
    subject_id: int
    sentence_id: int
    position: int                   # keystroke index within the labeled sequence of the sentence
    pressed: str
    target: str
    is_typo: bool
    time: float


@dataclass
class Epoch:
    window: np.ndarray              # channels x t
    label: int                      # key class id of the target key
    meta: EpochMeta
    tmin: float = -0.2
    sfreq: float = 50.0

    @property
    def times(self) -> np.ndarray:
        return self.tmin + np.arange(self.window.shape[1]) / self.sfreq

    def with_window(self, window: np.ndarray) -> "Epoch":
        return replace(self, window=window)


@dataclass
class SplitAssignment:
    split: Dict[int, str]           # sentence_id -> train|valid|test
    cluster: Dict[int, int]         # sentence_id -> cluster id

    def sentences(self, name: str) -> List[int]:
        return sorted(s for s, v in self.split.items() if v == name)


@dataclass
class StatResult:
    test: str
    statistic: Optional[float]     # None when the test is undefined for the data
    pvalue: Optional[float]
    n: int
    warning: Optional[str] = None


@dataclass
class MetricRow:
    metric: str
    value: Optional[float]
    n: int
    dispersion: Optional[float] = None     # SEM unless stated otherwise
    p: Optional[float] = None
    p_fdr: Optional[float] = None


@dataclass
class EvalReport:
    per_sentence: "object"                 # pandas DataFrame (sentence_id, subject_id, cer, n)
    per_subject: "object"                  # pandas DataFrame (subject_id, cer_mean, cer_sem, n_sentences)
    confusion: np.ndarray                  # 29 x 29 target x predicted counts
    her: Optional[float]
    metrics: List[MetricRow] = field(default_factory=list)
    tables: Dict[str, "object"] = field(default_factory=dict)

    def metric(self, name: str) -> MetricRow:
        for row in self.metrics:
            if row.metric == name:
                return row
        raise KeyError(name)


Pair = Tuple[Optional[str], Optional[str], str]    # (pressed, intended, tag)
