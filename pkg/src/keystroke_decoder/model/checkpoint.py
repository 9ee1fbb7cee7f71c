"""Checkpoint = JSON manifest + raw little-endian float32 parameter blob.

The manifest indexes the blob by tensor name (offset and shape in elements),
so a checkpoint can be inspected without torch.
"""
from __future__ import annotations

from typing import Any, Dict, Tuple

import numpy as np
import torch

from ..domain.errors import FormatError
from .network import DecoderConfig, DecoderModel

FORMAT = "kd-checkpoint/1"


def to_parts(model: DecoderModel, **extra: Any) -> Tuple[Dict[str, Any], bytes]:
    index, chunks, offset = [], [], 0
    for name, tensor in model.state_dict().items():
        values = tensor.detach().cpu().numpy().astype("<f4").ravel()
        index.append({"name": name, "shape": list(tensor.shape), "offset": offset, "count": int(values.size)})
        chunks.append(values.tobytes())
        offset += values.size
    manifest = {
        "format": FORMAT,
        "config": model.cfg.to_dict(),
        "positions": model.positions.tolist(),
        "tensors": index,
        **extra,
    }
    return manifest, b"".join(chunks)


def from_parts(manifest: Dict[str, Any], blob: bytes) -> DecoderModel:
    if manifest.get("format") != FORMAT:
        raise FormatError(f"Unsupported checkpoint format {manifest.get('format')!r}.")
    cfg_dict = dict(manifest["config"])
    cfg_dict["dilation_cycle"] = tuple(cfg_dict["dilation_cycle"])
    model = DecoderModel(DecoderConfig(**cfg_dict), np.asarray(manifest["positions"]))

    values = np.frombuffer(blob, dtype="<f4")
    state = {}
    for entry in manifest["tensors"]:
        start, count = entry["offset"], entry["count"]
        if start + count > values.size:
            raise FormatError(f"Checkpoint blob too short for tensor {entry['name']!r}.")
        state[entry["name"]] = torch.from_numpy(values[start:start + count].copy()).reshape(entry["shape"])
    try:
        model.load_state_dict(state)
    except RuntimeError as exc:
        raise FormatError(f"Checkpoint does not match the model architecture: {exc}") from exc
    model.eval()
    return model
