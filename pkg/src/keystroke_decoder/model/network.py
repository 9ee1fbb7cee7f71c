"""Keystroke decoder network.

A convolutional module embeds each keystroke window (sensors x time) into a
vector z; a transformer then contextualizes the embeddings of one sentence and
a linear head maps each position to the 29 key classes.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import List, Sequence, Tuple

import numpy as np
import torch
from torch import nn

from ..config import ModelSection
from ..domain.errors import ParameterError, SequenceLengthError, ShapeError
from ..domain.keyboard import N_CLASSES


@dataclass(frozen=True)
class DecoderConfig:
    n_sensors: int
    n_subjects: int
    n_times: int = 25
    d_spatial: int = 32
    h: int = 64
    n_fourier: int = 32
    n_conv_blocks: int = 8
    kernel: int = 3
    dilation_cycle: Tuple[int, ...] = (1, 3, 9)
    dropout: float = 0.3
    n_transformer_layers: int = 4
    n_heads: int = 2
    n_classes: int = N_CLASSES
    max_sentence_len: int = 128
    use_transformer: bool = True
    fourier_seed: int = 0

    def __post_init__(self):
        if self.h % self.n_heads:
            raise ParameterError(f"h={self.h} must be divisible by n_heads={self.n_heads}.")
        if self.kernel % 2 == 0:
            raise ParameterError("Convolution kernel must be odd to keep the window length.")
        if self.n_fourier % 2:
            raise ParameterError("n_fourier must be even (cosine and sine pairs).")
        if min(self.n_sensors, self.n_subjects, self.n_times) < 1:
            raise ParameterError("n_sensors, n_subjects and n_times must be >= 1.")

    @property
    def dilations(self) -> Tuple[int, ...]:
        return tuple(self.dilation_cycle[i % len(self.dilation_cycle)] for i in range(self.n_conv_blocks))

    @classmethod
    def from_section(cls, section: ModelSection, n_sensors: int, n_subjects: int, n_times: int, seed: int = 0):
        return cls(
            n_sensors=n_sensors, n_subjects=n_subjects, n_times=n_times, d_spatial=section.d_spatial,
            h=section.h, n_fourier=section.n_fourier, n_conv_blocks=section.n_conv_blocks, kernel=section.kernel,
            dilation_cycle=tuple(section.dilation_cycle), dropout=section.dropout,
            n_transformer_layers=section.n_transformer_layers, n_heads=section.n_heads,
            max_sentence_len=section.max_sentence_len, use_transformer=section.use_transformer, fourier_seed=seed,
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["dilation_cycle"] = list(self.dilation_cycle)
        return d


# ----------------------------
# Convolutional module
# ----------------------------
class SpatialAttention(nn.Module):
    """Each virtual channel is a softmax-weighted average over sensors.

    The weights are a learned linear map of fixed random Fourier features of the
    normalized 2D sensor positions.
    """

    def __init__(self, positions: np.ndarray, d_spatial: int, n_fourier: int, seed: int = 0):
        super().__init__()
        pos = torch.as_tensor(np.asarray(positions, dtype=np.float64))
        span = (pos.max(0).values - pos.min(0).values).clamp_min(1e-12)
        unit = (pos - pos.min(0).values) / span
        gen = torch.Generator().manual_seed(seed)
        freqs = 2 * math.pi * torch.randn(2, n_fourier // 2, generator=gen, dtype=torch.float64)
        proj = unit @ freqs
        self.register_buffer("features", torch.cat([proj.cos(), proj.sin()], dim=1).float())
        self.n_sensors = pos.shape[0]
        self.score = nn.Linear(n_fourier, d_spatial)

    def weights(self) -> torch.Tensor:
        # virtual channels x sensors
        return torch.softmax(self.score(self.features), dim=0).T

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[1] != self.n_sensors:
            raise ShapeError(f"Expected {self.n_sensors} sensors, got {x.shape[1]}.")
        return torch.einsum("os,bst->bot", self.weights(), x)


class SubjectLayers(nn.Module):
    """One square channel-mixing matrix per subject, identity at initialization."""

    def __init__(self, n_subjects: int, channels: int):
        super().__init__()
        self.weights = nn.Parameter(torch.eye(channels).repeat(n_subjects, 1, 1))

    def forward(self, x: torch.Tensor, subjects: torch.Tensor) -> torch.Tensor:
        return torch.einsum("bij,bjt->bit", self.weights[subjects], x)


class ConvBlock(nn.Module):
    def __init__(self, channels: int, kernel: int, dilation: int, dropout: float):
        super().__init__()
        self.conv = nn.Conv1d(channels, channels, kernel, dilation=dilation, padding=dilation * (kernel - 1) // 2)
        self.act = nn.GELU()
        self.drop = nn.Dropout(dropout)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return x + self.drop(self.act(self.conv(x)))


class AttentionPool(nn.Module):
    """Single-head attention over time with a learned query."""

    def __init__(self, channels: int):
        super().__init__()
        self.query = nn.Parameter(torch.randn(1, 1, channels) / math.sqrt(channels))
        self.attn = nn.MultiheadAttention(channels, num_heads=1, batch_first=True)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        seq = x.transpose(1, 2)                                   # B x T x h
        query = self.query.expand(seq.shape[0], -1, -1)
        pooled, _ = self.attn(query, seq, seq, need_weights=False)
        return pooled[:, 0]


# ----------------------------
# Sentence module
# ----------------------------
class PositionalEncoding(nn.Module):
    def __init__(self, d_model: int, max_len: int):
        super().__init__()
        position = torch.arange(max_len, dtype=torch.float32).unsqueeze(1)
        div_term = torch.exp(torch.arange(0, d_model, 2).float() * (-math.log(10000.0) / d_model))
        pe = torch.zeros(max_len, d_model)
        pe[:, 0::2] = torch.sin(position * div_term)
        pe[:, 1::2] = torch.cos(position * div_term[: d_model // 2])
        self.register_buffer("pe", pe.unsqueeze(0), persistent=False)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return x + self.pe[:, : x.shape[1]].to(x.dtype)


class DecoderModel(nn.Module):
    def __init__(self, cfg: DecoderConfig, positions: np.ndarray):
        super().__init__()
        if len(positions) != cfg.n_sensors:
            raise ShapeError(f"{len(positions)} sensor positions for n_sensors={cfg.n_sensors}.")
        self.cfg = cfg
        self.positions = np.asarray(positions, dtype=np.float64)
        self.spatial = SpatialAttention(positions, cfg.d_spatial, cfg.n_fourier, cfg.fourier_seed)
        self.subjects = SubjectLayers(cfg.n_subjects, cfg.d_spatial)
        self.inp = nn.Conv1d(cfg.d_spatial, cfg.h, 1)
        self.blocks = nn.Sequential(*[ConvBlock(cfg.h, cfg.kernel, d, cfg.dropout) for d in cfg.dilations])
        self.pool = AttentionPool(cfg.h)
        if cfg.use_transformer:
            layer = nn.TransformerEncoderLayer(
                d_model=cfg.h, nhead=cfg.n_heads, dim_feedforward=4 * cfg.h, dropout=cfg.dropout,
                activation="gelu", batch_first=True,
            )
            self.position = PositionalEncoding(cfg.h, cfg.max_sentence_len)
            self.transformer = nn.TransformerEncoder(layer, cfg.n_transformer_layers, enable_nested_tensor=False)
        self.head = nn.Linear(cfg.h, cfg.n_classes)

    def conv_forward(self, windows: torch.Tensor, subjects: torch.Tensor) -> torch.Tensor:
        """(B x sensors x time) windows -> (B x h) keystroke embeddings."""
        if windows.ndim != 3:
            raise ShapeError(f"Expected B x sensors x time windows, got shape {tuple(windows.shape)}.")
        if int(subjects.max()) >= self.cfg.n_subjects or int(subjects.min()) < 0:
            raise ParameterError(f"Subject ids must lie in [0, {self.cfg.n_subjects}).")
        x = self.spatial(windows)
        x = self.subjects(x, subjects)
        x = self.blocks(self.inp(x))
        return self.pool(x)

    def transformer_forward(self, z: torch.Tensor, pad_mask: torch.Tensor | None = None) -> torch.Tensor:
        """(B x n x h) sentence embeddings -> (B x n x classes) logits; pad_mask is True at padding."""
        if z.shape[1] > self.cfg.max_sentence_len:
            raise SequenceLengthError(f"Sentence of {z.shape[1]} keystrokes exceeds max_sentence_len={self.cfg.max_sentence_len}.")
        if not self.cfg.use_transformer:
            return self.head(z)
        x = self.transformer(self.position(z), src_key_padding_mask=pad_mask)
        return self.head(x)

    def forward(
        self, windows: torch.Tensor, subjects: torch.Tensor, lengths: Sequence[int],
    ) -> Tuple[torch.Tensor, torch.Tensor]:
        """Keystrokes of consecutive sentences -> padded logits (B x L x classes) and pad mask (B x L)."""
        z = self.conv_forward(windows, subjects)
        padded, mask = pad_sentences(z, lengths)
        return self.transformer_forward(padded, mask), mask


def pad_sentences(z: torch.Tensor, lengths: Sequence[int]) -> Tuple[torch.Tensor, torch.Tensor]:
    if sum(lengths) != z.shape[0]:
        raise ShapeError(f"Sentence lengths sum to {sum(lengths)} but {z.shape[0]} embeddings were given.")
    chunks: List[torch.Tensor] = list(torch.split(z, list(lengths)))
    padded = nn.utils.rnn.pad_sequence(chunks, batch_first=True)
    idx = torch.arange(padded.shape[1])
    mask = idx[None, :] >= torch.as_tensor(list(lengths))[:, None]
    return padded, mask


def count_parameters(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters() if p.requires_grad)
