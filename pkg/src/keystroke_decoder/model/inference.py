from __future__ import annotations

from typing import List, Optional, Sequence

import numpy as np
import torch

from ..domain.keyboard import render
from ..domain.models import Epoch
from ..lm.beam import BeamHypothesis, LanguageScorer, decode_logits
from .network import DecoderModel
from .training import SentenceSample, iter_batches, make_samples


@torch.no_grad()
def predict_logits(model: DecoderModel, samples: Sequence[SentenceSample], budget: int = 128) -> List[np.ndarray]:
    """Per-sentence (n x classes) logits in eval mode, in the order of `samples`."""
    model.eval()
    out: List[np.ndarray] = []
    for batch in iter_batches(samples, budget):
        logits, _ = model(batch.windows, batch.subjects, batch.lengths)
        for row, n in enumerate(batch.lengths):
            out.append(logits[row, :n].double().numpy())
    return out


@torch.no_grad()
def embed(model: DecoderModel, epochs: Sequence[Epoch], batch_size: int = 256) -> np.ndarray:
    """Convolutional-module embedding z of every epoch (epochs x h)."""
    model.eval()
    if not epochs:
        return np.zeros((0, model.cfg.h))
    rows = []
    for start in range(0, len(epochs), batch_size):
        chunk = epochs[start:start + batch_size]
        windows = torch.as_tensor(np.stack([e.window for e in chunk]).astype(np.float32))
        subjects = torch.as_tensor([e.meta.subject_id for e in chunk], dtype=torch.long)
        rows.append(model.conv_forward(windows, subjects).double().numpy())
    return np.concatenate(rows)


def decode_samples(
    model: DecoderModel,
    lm: Optional[LanguageScorer],
    samples: Sequence[SentenceSample],
    beam: int = 30,
    alpha: float = 5.0,
) -> List[BeamHypothesis]:
    return decode_logits(predict_logits(model, samples), lm, beam, alpha)


def decode_sentence(
    model: DecoderModel,
    lm: Optional[LanguageScorer],
    epochs: Sequence[Epoch],
    beam: int = 30,
    alpha: float = 5.0,
) -> str:
    """Epochs of one sentence (any order) -> decoded text with '#'/'*' placeholder glyphs."""
    (sample,) = make_samples(epochs)
    (hyp,) = decode_samples(model, lm, [sample], beam, alpha)
    return render(hyp.sequence)
