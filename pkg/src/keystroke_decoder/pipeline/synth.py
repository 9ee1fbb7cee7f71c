"""Synthetic keystroke-evoked recordings.

Forward model: ongoing 1/f plus white noise on every channel, and for every key
press a spatiotemporal response = spatial pattern of the pressed key x Gaussian
temporal kernel peaking `evoked_peak_latency` after the press. Letter patterns
carry a hemispheric component whose sign follows the typing hand, plus a fixed
per-key random component; each subject sees the patterns through its own
per-channel gains.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Sequence

import numpy as np

from ..config import SynthSection
from ..domain.errors import ParameterError
from ..domain.keyboard import N_CLASSES, QWERTY, Hand, KeyboardLayout, classify_key, is_letter_id
from ..domain.models import KeystrokeEvent, Recording, SentenceTrial

logger = logging.getLogger(__name__)

DEVICE_CHANNELS = {"eeg": 61, "meg": 306}
DEVICE_SNR_GAIN = {"eeg": 1.0, "meg": 2.0}
LEAD_IN_S = 1.0
TAIL_S = 1.0
KERNEL_SUPPORT_SIGMAS = 6.0


@dataclass(frozen=True)
class SynthConfig:
    n_subjects: int
    sentences: Sequence[str]
    snr: float = 5.0
    evoked_peak_latency: float = 0.04
    evoked_sigma: float = 0.03
    lateralization_strength: float = 1.0
    key_specificity: float = 0.6
    subject_variability: float = 0.2
    typo_rate: float = 0.04
    typo_interkey_factor: float = 2.0
    iki_median: float = 0.25
    iki_log_sigma: float = 0.3
    sentence_gap: float = 2.0
    sfreq: float = 250.0
    device: str = "eeg"
    n_channels: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.snr <= 0:
            raise ParameterError("snr must be > 0 (use math.inf for noiseless data).")
        if not 0 <= self.typo_rate < 1:
            raise ParameterError("typo_rate must lie in [0, 1).")
        if not self.sentences:
            raise ParameterError("At least one sentence is required.")
        if self.device not in DEVICE_CHANNELS:
            raise ParameterError(f"Unknown device {self.device!r}.")

    @classmethod
    def from_section(cls, section: SynthSection, sentences: Sequence[str], seed: int) -> "SynthConfig":
        return cls(
            n_subjects=section.n_subjects, sentences=tuple(sentences), snr=section.snr,
            evoked_peak_latency=section.evoked_peak_latency, evoked_sigma=section.evoked_sigma,
            lateralization_strength=section.lateralization_strength, key_specificity=section.key_specificity,
            subject_variability=section.subject_variability, typo_rate=section.typo_rate,
            typo_interkey_factor=section.typo_interkey_factor, iki_median=section.iki_median,
            iki_log_sigma=section.iki_log_sigma, sentence_gap=section.sentence_gap, sfreq=section.sfreq,
            device=section.device, n_channels=section.n_channels, seed=seed,
        )

    @property
    def channels(self) -> int:
        return self.n_channels or DEVICE_CHANNELS[self.device]

    @property
    def effective_snr(self) -> float:
        return self.snr * DEVICE_SNR_GAIN[self.device]


@dataclass
class SyntheticSubject:
    recording: Recording
    trials: List[SentenceTrial]                      # unlabeled: pressed keys and times only
    return_times: Dict[int, float] = field(default_factory=dict)
    injected_typos: int = 0

    @property
    def n_keystrokes(self) -> int:
        return sum(len(t.events) for t in self.trials)


# ----------------------------
# Spatial and temporal model
# ----------------------------
def montage(n_channels: int) -> np.ndarray:
    """Sunflower layout of sensors on the unit disk (x: left->right, y: back->front)."""
    k = np.arange(n_channels) + 0.5
    r = np.sqrt(k / n_channels)
    theta = k * math.pi * (3 - math.sqrt(5))
    return np.stack([r * np.cos(theta), r * np.sin(theta)], axis=1)


def _unit_rms(v: np.ndarray) -> np.ndarray:
    rms = np.sqrt(np.mean(v ** 2))
    return v / rms if rms > 0 else v


def hemispheric_pattern(positions: np.ndarray) -> np.ndarray:
    """Left-minus-right motor blob; positive over the left hemisphere (right hand)."""
    def blob(cx):
        return np.exp(-((positions[:, 0] - cx) ** 2 + (positions[:, 1] - 0.2) ** 2) / 0.18)
    return _unit_rms(blob(-0.5) - blob(0.5))


def key_patterns(cfg: SynthConfig, positions: np.ndarray, layout: KeyboardLayout = QWERTY) -> np.ndarray:
    """Spatial pattern per key class, shared by all subjects (classes x channels)."""
    rng = np.random.default_rng([cfg.seed, 7919])
    lateral = hemispheric_pattern(positions)
    patterns = np.zeros((N_CLASSES, len(positions)))
    for cls in range(N_CLASSES):
        specific = _unit_rms(rng.standard_normal(len(positions)))
        patterns[cls] = cfg.key_specificity * specific
        if is_letter_id(cls):
            sign = 1.0 if layout.hand_of(cls) is Hand.RIGHT else -1.0
            patterns[cls] += cfg.lateralization_strength * sign * lateral
    return patterns


def temporal_kernel(t: np.ndarray, latency: float, sigma: float = 0.03) -> np.ndarray:
    return np.exp(-0.5 * ((t - latency) / sigma) ** 2)


def colored_noise(n_channels: int, n_samples: int, sfreq: float, rng: np.random.Generator) -> np.ndarray:
    """Equal-power mix of 1/f and white noise, unit RMS per channel."""
    white = rng.standard_normal((n_channels, n_samples))
    spectrum = np.fft.rfft(rng.standard_normal((n_channels, n_samples)), axis=1)
    freqs = np.fft.rfftfreq(n_samples, d=1.0 / sfreq)
    spectrum[:, 0] = 0.0
    spectrum[:, 1:] /= np.sqrt(freqs[1:])
    pink = np.fft.irfft(spectrum, n=n_samples, axis=1)
    pink /= np.sqrt(np.mean(pink ** 2, axis=1, keepdims=True))
    return (pink + white) / math.sqrt(2.0)


# ----------------------------
# Behaviour
# ----------------------------
def _type_sentence(text: str, cfg: SynthConfig, rng: np.random.Generator, layout: KeyboardLayout):
    """Returns (pressed characters, intervals before each key and before return, typo flags)."""
    letters = [i for i, c in enumerate(text) if classify_key(c).is_letter]
    p_typo = min(1.0, cfg.typo_rate * len(text) / len(letters)) if letters else 0.0

    pressed, typos = [], []
    for c in text:
        if classify_key(c).is_letter and rng.random() < p_typo:
            options = layout.neighbors(c.lower())
            pressed.append(options[rng.integers(len(options))])
            typos.append(True)
        else:
            pressed.append(c)
            typos.append(False)

    intervals = rng.lognormal(math.log(cfg.iki_median), cfg.iki_log_sigma, size=len(text) + 1)
    for i, is_typo in enumerate(typos):
        if is_typo:
            intervals[i] *= cfg.typo_interkey_factor
            intervals[i + 1] *= cfg.typo_interkey_factor
    return pressed, intervals, typos


def synth_generate(cfg: SynthConfig, layout: KeyboardLayout = QWERTY) -> List[SyntheticSubject]:
    """Generate one recording and its typing trials per subject; deterministic given cfg.seed."""
    positions = montage(cfg.channels)
    patterns = key_patterns(cfg, positions, layout)
    half_support = KERNEL_SUPPORT_SIGMAS * cfg.evoked_sigma
    noise_scale = 0.0 if math.isinf(cfg.effective_snr) else 1.0 / cfg.effective_snr

    subjects = []
    for subject_id in range(cfg.n_subjects):
        rng = np.random.default_rng([cfg.seed, subject_id])
        gains = 1.0 + cfg.subject_variability * rng.standard_normal(cfg.channels)

        trials, return_times, injected = [], {}, 0
        t = LEAD_IN_S
        for sentence_id, text in enumerate(cfg.sentences):
            pressed, intervals, typos = _type_sentence(text, cfg, rng, layout)
            t += cfg.sentence_gap
            events = []
            for key, gap in zip(pressed, intervals[:-1]):
                t += gap
                events.append(KeystrokeEvent(time=float(t), pressed=key))
            t += intervals[-1]
            return_times[sentence_id] = float(t)
            injected += sum(typos)
            trials.append(SentenceTrial(subject_id, sentence_id, text, "".join(pressed), events))

        n_samples = int(math.ceil((t + TAIL_S) * cfg.sfreq))
        if noise_scale > 0:
            data = noise_scale * colored_noise(cfg.channels, n_samples, cfg.sfreq, rng)
        else:
            data = np.zeros((cfg.channels, n_samples))

        subject_patterns = patterns * gains[None, :]
        for trial in trials:
            for event in trial.events:
                s0 = max(0, int(math.floor((event.time - half_support) * cfg.sfreq)))
                s1 = min(n_samples, int(math.ceil((event.time + half_support) * cfg.sfreq)) + 1)
                rel = np.arange(s0, s1) / cfg.sfreq - event.time
                kernel = temporal_kernel(rel, cfg.evoked_peak_latency, cfg.evoked_sigma)
                data[:, s0:s1] += np.outer(subject_patterns[classify_key(event.pressed).id], kernel)

        recording = Recording(
            data=data.astype(np.float32), sfreq=cfg.sfreq, channel_positions=positions,
            device=cfg.device, subject_id=subject_id,
        )
        subject = SyntheticSubject(recording, trials, return_times, injected)
        logger.info(
            "Subject %d: %.1f s, %d keystrokes, %d injected typos.",
            subject_id, recording.duration, subject.n_keystrokes, injected,
        )
        subjects.append(subject)
    return subjects
