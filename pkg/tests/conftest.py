from __future__ import annotations

import numpy as np
import pytest

from keystroke_decoder.domain.keyboard import CLASS_GLYPHS, encode_text
from keystroke_decoder.domain.models import Epoch, EpochMeta
from keystroke_decoder.model.network import DecoderConfig, DecoderModel
from keystroke_decoder.pipeline.corpus import generate_sentences
from keystroke_decoder.pipeline.synth import SynthConfig, montage, synth_generate


@pytest.fixture(scope="session")
def sentences():
    return generate_sentences(12, seed=0)


@pytest.fixture(scope="session")
def synth_cfg(sentences):
    return SynthConfig(n_subjects=2, sentences=tuple(sentences), n_channels=8, seed=0)


@pytest.fixture(scope="session")
def subjects(synth_cfg):
    return synth_generate(synth_cfg)


def make_epochs(texts, n_subjects=2, n_sensors=8, n_times=25, seed=0):
    """Random windows with a class-dependent offset on channel 0, one sentence per text and subject."""
    rng = np.random.default_rng(seed)
    epochs = []
    for subject_id in range(n_subjects):
        for sentence_id, text in enumerate(texts):
            for position, label in enumerate(encode_text(text)):
                window = rng.normal(size=(n_sensors, n_times)).astype(np.float32)
                window[0] += label / 10.0
                meta = EpochMeta(
                    subject_id=subject_id, sentence_id=sentence_id, position=position,
                    pressed=CLASS_GLYPHS[label], target=CLASS_GLYPHS[label], is_typo=False,
                    time=1.0 + position * 0.25,
                )
                epochs.append(Epoch(window=window, label=label, meta=meta))
    return epochs


@pytest.fixture
def tiny_epochs():
    return make_epochs(["el gato", "la casa", "un perro come", "la idea"])


@pytest.fixture
def tiny_cfg():
    return DecoderConfig(
        n_sensors=8, n_subjects=2, n_times=25, d_spatial=4, h=8, n_fourier=4,
        n_conv_blocks=2, n_transformer_layers=1, n_heads=2, dropout=0.0,
    )


@pytest.fixture
def tiny_model(tiny_cfg):
    import torch

    torch.manual_seed(0)
    return DecoderModel(tiny_cfg, montage(8))
