from __future__ import annotations

import logging
from fractions import Fraction
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np
from scipy.signal import butter, firwin, resample_poly, sosfiltfilt
from sklearn.preprocessing import RobustScaler

from ..domain.errors import ParameterError
from ..domain.keyboard import classify_key
from ..domain.models import Epoch, EpochMeta, Recording, SentenceTrial

logger = logging.getLogger(__name__)


def bandpass(rec: Recording, lo: float = 0.1, hi: float = 20.0, order: int = 4) -> Recording:
    """Zero-phase Butterworth band-pass (second-order sections, forward-backward)."""
    nyq = rec.sfreq / 2.0
    if not 0 < lo < hi < nyq:
        raise ParameterError(f"Invalid band-pass {lo}-{hi} Hz for sfreq {rec.sfreq} Hz (need 0 < lo < hi < {nyq}).")
    sos = butter(order, [lo, hi], btype="bandpass", fs=rec.sfreq, output="sos")
    # reflect-pad one period of the lowest passband frequency
    padlen = min(rec.data.shape[1] - 1, int(round(rec.sfreq / lo)))
    out = sosfiltfilt(sos, rec.data.astype(np.float64), axis=1, padtype="even", padlen=padlen)
    return rec.with_data(out.astype(rec.data.dtype))


def resample(rec: Recording, target: float = 50.0) -> Recording:
    """Polyphase rational resampling with an anti-alias low-pass at 0.9 x the new Nyquist."""
    if target > rec.sfreq:
        raise ParameterError(f"Upsampling is not supported ({rec.sfreq} Hz -> {target} Hz).")
    if target == rec.sfreq:
        return rec
    ratio = Fraction(target / rec.sfreq).limit_denominator(1000)
    up, down = ratio.numerator, ratio.denominator
    max_rate = max(up, down)
    taps = firwin(2 * 10 * max_rate + 1, 0.9 / max_rate, window=("kaiser", 5.0))
    out = resample_poly(rec.data.astype(np.float64), up, down, axis=1, window=taps)
    return rec.with_data(out.astype(rec.data.dtype), sfreq=float(target))


def epochize(
    rec: Recording,
    trials: Iterable[SentenceTrial],
    tmin: float = -0.2,
    tmax: float = 0.3,
) -> List[Epoch]:
    """One window [tmin, tmax) per labeled keystroke; insertions (no target) are skipped."""
    n_times = int(round((tmax - tmin) * rec.sfreq))
    offset = int(round(tmin * rec.sfreq))
    epochs: List[Epoch] = []
    dropped = 0
    for trial in trials:
        position = 0
        for event in trial.events:
            if event.target is None:
                continue
            start = int(round(event.time * rec.sfreq)) + offset
            stop = start + n_times
            pos = position
            position += 1
            if start < 0 or stop > rec.data.shape[1]:
                dropped += 1
                logger.warning(
                    "Dropping keystroke %d of sentence %d (subject %d): window exceeds recording bounds.",
                    pos, trial.sentence_id, trial.subject_id,
                )
                continue
            meta = EpochMeta(
                subject_id=trial.subject_id, sentence_id=trial.sentence_id, position=pos,
                pressed=event.pressed, target=event.target, is_typo=event.is_typo, time=event.time,
            )
            epochs.append(Epoch(
                window=np.array(rec.data[:, start:stop]), label=classify_key(event.target).id,
                meta=meta, tmin=tmin, sfreq=rec.sfreq,
            ))
    if dropped:
        logger.warning("Dropped %d epochs too close to the recording edges.", dropped)
    return epochs


def baseline_correct(ep: Epoch, baseline: tuple = (None, 0.0)) -> Epoch:
    """Subtract the per-channel mean over the pre-press interval."""
    start, stop = baseline
    times = ep.times
    mask = (times >= (ep.tmin if start is None else start)) & (times < stop)
    if not mask.any():
        raise ParameterError("Baseline interval contains no samples of the window.")
    mean = ep.window[:, mask].mean(axis=1, keepdims=True)
    return ep.with_window(ep.window - mean)


class EpochScaler:
    """Per-subject robust scaling (median / IQR per channel, across epochs and time) plus clamping.

    Statistics are fit on the training epochs of each subject only and applied unchanged
    to every split.
    """

    def __init__(self, clamp: float = 20.0):
        self.clamp = clamp
        self.scalers: Dict[int, RobustScaler] = {}

    @staticmethod
    def _stack(epochs: Sequence[Epoch]) -> np.ndarray:
        # (epochs * time) x channels
        return np.concatenate([ep.window.T for ep in epochs], axis=0).astype(np.float64)

    def fit(self, epochs: Sequence[Epoch]) -> "EpochScaler":
        by_subject: Dict[int, List[Epoch]] = {}
        for ep in epochs:
            by_subject.setdefault(ep.meta.subject_id, []).append(ep)
        for subject_id, subject_epochs in sorted(by_subject.items()):
            if len(subject_epochs) < 2:
                raise ParameterError(f"Subject {subject_id} needs at least 2 training epochs to fit the scaler.")
            stacked = self._stack(subject_epochs)
            q25, q75 = np.percentile(stacked, [25, 75], axis=0)
            degenerate = np.flatnonzero(q75 - q25 == 0)
            if degenerate.size:
                logger.warning("Subject %d: zero IQR on channels %s, scaling by 1.", subject_id, degenerate.tolist())
            self.scalers[subject_id] = RobustScaler(quantile_range=(25.0, 75.0)).fit(stacked)
        return self

    def transform(self, epochs: Sequence[Epoch]) -> List[Epoch]:
        out = []
        for ep in epochs:
            scaler = self.scalers.get(ep.meta.subject_id)
            if scaler is None:
                raise ParameterError(f"No scaler fitted for subject {ep.meta.subject_id}.")
            scaled = scaler.transform(ep.window.T.astype(np.float64)).T
            out.append(ep.with_window(np.clip(scaled, -self.clamp, self.clamp)))
        return out


def robust_scale_clamp(
    epochs: Sequence[Epoch],
    clamp: float = 20.0,
    fit_on: Optional[Sequence[Epoch]] = None,
) -> List[Epoch]:
    """Scale `epochs` with statistics fit on `fit_on` (defaults to `epochs` themselves)."""
    scaler = EpochScaler(clamp).fit(epochs if fit_on is None else fit_on)
    return scaler.transform(epochs)