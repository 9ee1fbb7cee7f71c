from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field, fields, is_dataclass, replace
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

from dotenv import load_dotenv

from .domain.errors import ConfigError


@dataclass(frozen=True)
class Settings:
    out_dir: str = field(default_factory=lambda: os.getenv("KD_OUT_DIR", "runs/desk"))
    data_dir: str = field(default_factory=lambda: os.getenv("KD_DATA_DIR", "data"))
    log_level: str = field(default_factory=lambda: os.getenv("KD_LOG_LEVEL", "INFO"))   # DEBUG|INFO|WARNING
    torch_threads: int = field(default_factory=lambda: int(os.getenv("KD_TORCH_THREADS", "1")))


def get_settings() -> Settings:
    load_dotenv()
    return Settings()


# ----------------------------
# Pipeline configuration tree
# ----------------------------
@dataclass(frozen=True)
class KeyboardSection:
    layout_file: Optional[str] = None         # JSON key -> [x, y, hand]; QWERTY when unset


@dataclass(frozen=True)
class SynthSection:
    n_subjects: int = 4
    n_sentences: int = 200
    sentences_file: Optional[str] = None      # one sentence per line; generated when unset
    device: str = "eeg"                       # eeg|meg
    n_channels: Optional[int] = None          # device default when unset (61 eeg, 306 meg)
    sfreq: float = 250.0
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


@dataclass(frozen=True)
class PreprocessSection:
    l_freq: float = 0.1
    h_freq: float = 20.0
    filter_order: int = 4
    resample_to: float = 50.0
    tmin: float = -0.2
    tmax: float = 0.3
    clamp: float = 20.0
    wide_tmin: float = -0.5
    wide_tmax: float = 0.5


@dataclass(frozen=True)
class SplitSection:
    threshold: float = 0.5
    ratios: Tuple[float, float, float] = (0.8, 0.1, 0.1)
    max_typos: int = 10


@dataclass(frozen=True)
class ModelSection:
    d_spatial: int = 32
    h: int = 64
    n_fourier: int = 32
    n_conv_blocks: int = 8
    kernel: int = 3
    dilation_cycle: Tuple[int, ...] = (1, 3, 9)
    dropout: float = 0.3
    n_transformer_layers: int = 4
    n_heads: int = 2
    max_sentence_len: int = 128
    use_transformer: bool = True


@dataclass(frozen=True)
class TrainSection:
    epochs: int = 100
    batch_keystrokes: int = 128
    peak_lr: float = 1e-4
    pct_start: float = 0.1
    weight_decay: float = 1e-4
    patience: int = 10
    train_fraction: float = 1.0


@dataclass(frozen=True)
class LMSection:
    order: int = 9
    discount: float = 0.75
    corpus_file: Optional[str] = None         # plain text, one sentence per line; generated when unset
    corpus_chars: int = 1_000_000
    corpus_seed: int = 1234
    end_marker: bool = False


@dataclass(frozen=True)
class DecodeSection:
    beam: int = 30
    alpha: float = 5.0


@dataclass(frozen=True)
class EvalSection:
    n_permutations: int = 10_000
    timecourse_permutations: int = 100
    cv_folds: int = 5
    confusion_bins: int = 10
    kmeans_k: Tuple[int, ...] = (2, 10)
    word_frequency_bins: int = 3
    conv_ablation: bool = False
    scaling_fractions: Tuple[float, ...] = ()


@dataclass(frozen=True)
class PipelineConfig:
    seed: int = 0
    keyboard: KeyboardSection = field(default_factory=KeyboardSection)
    synth: SynthSection = field(default_factory=SynthSection)
    preprocess: PreprocessSection = field(default_factory=PreprocessSection)
    split: SplitSection = field(default_factory=SplitSection)
    model: ModelSection = field(default_factory=ModelSection)
    train: TrainSection = field(default_factory=TrainSection)
    lm: LMSection = field(default_factory=LMSection)
    decode: DecodeSection = field(default_factory=DecodeSection)
    eval: EvalSection = field(default_factory=EvalSection)


# keys that tune a single stage run; recorded in that stage's manifest instead of the hash
RUNTIME_KEYS = ("decode.alpha", "decode.beam", "train.train_fraction")


def _build(cls, data: Dict[str, Any], where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where or 'config'} must be a JSON object.")
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigError(f"Unknown config keys in {where or 'root'}: {', '.join(unknown)}")

    defaults = cls()
    kwargs = {}
    for name, value in data.items():
        current = getattr(defaults, name)
        key = f"{where}.{name}" if where else name
        if is_dataclass(current):
            kwargs[name] = _build(type(current), value, key)
        elif isinstance(current, tuple):
            if not isinstance(value, list):
                raise ConfigError(f"{key} must be a list.")
            kwargs[name] = tuple(value)
        else:
            kwargs[name] = value
    return cls(**kwargs)


def _validate(cfg: PipelineConfig) -> None:
    s = cfg.synth
    if s.snr <= 0:
        raise ConfigError("synth.snr must be > 0.")
    if not 0 <= s.typo_rate < 1:
        raise ConfigError("synth.typo_rate must lie in [0, 1).")
    if s.device not in ("eeg", "meg"):
        raise ConfigError(f"synth.device must be 'eeg' or 'meg', got {s.device!r}.")
    if cfg.model.h % cfg.model.n_heads:
        raise ConfigError("model.h must be divisible by model.n_heads.")
    if abs(sum(cfg.split.ratios) - 1.0) > 1e-9:
        raise ConfigError("split.ratios must sum to 1.")
    if not 0 < cfg.train.train_fraction <= 1:
        raise ConfigError("train.train_fraction must lie in (0, 1].")
    if cfg.decode.beam < 1 or cfg.decode.alpha < 0:
        raise ConfigError("decode.beam must be >= 1 and decode.alpha >= 0.")


def load_config(path: Optional[str | Path] = None, overrides: Optional[Dict[str, Any]] = None) -> PipelineConfig:
    """Load a JSON config (defaults when path is None) and apply dotted-key overrides."""
    data: Dict[str, Any] = {}
    if path is not None:
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError as e:
            raise ConfigError(f"Config file not found: {path}") from e
        except json.JSONDecodeError as e:
            raise ConfigError(f"Config file {path} is not valid JSON: {e}") from e

    cfg = _build(PipelineConfig, data, "")
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        cfg = _override(cfg, key.split("."), value)
    _validate(cfg)
    return cfg


def _override(node, parts, value):
    head, *rest = parts
    if head not in {f.name for f in fields(node)}:
        raise ConfigError(f"Unknown config key: {head}")
    if rest:
        return replace(node, **{head: _override(getattr(node, head), rest, value)})
    return replace(node, **{head: value})


def to_dict(cfg: PipelineConfig) -> Dict[str, Any]:
    return asdict(cfg)


def config_hash(cfg: PipelineConfig) -> str:
    tree = to_dict(cfg)
    for key in RUNTIME_KEYS:
        section, name = key.split(".")
        tree[section].pop(name, None)
    canonical = json.dumps(tree, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()
