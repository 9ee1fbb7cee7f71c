from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Any, Dict, Tuple

import numpy as np
import pandas as pd

from ..domain.errors import FormatError
from ..domain.models import Recording

RECORDING_FORMAT = "kd-recording/1"


class LocalStorageAdapter:
    """Artifacts as plain files under one root directory."""

    def __init__(self, root: str | Path):
        self.root = Path(root)

    def path(self, key: str) -> Path:
        return self.root / key

    def exists(self, key: str) -> bool:
        return self.path(key).exists()

    def _target(self, key: str) -> Path:
        p = self.path(key)
        p.parent.mkdir(parents=True, exist_ok=True)
        return p

    # text / bytes / json
    def put_text(self, key: str, content: str) -> str:
        self._target(key).write_text(content, encoding="utf-8")
        return key

    def get_text(self, key: str) -> str:
        return self.path(key).read_text(encoding="utf-8")

    def put_bytes(self, key: str, content: bytes) -> str:
        self._target(key).write_bytes(content)
        return key

    def get_bytes(self, key: str) -> bytes:
        return self.path(key).read_bytes()

    def put_json(self, key: str, obj: Any) -> str:
        return self.put_text(key, json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")

    def get_json(self, key: str) -> Any:
        return json.loads(self.get_text(key))

    # tables / arrays
    def put_csv(self, key: str, df: pd.DataFrame) -> str:
        df.to_csv(self._target(key), index=False, lineterminator="\n", float_format="%.10g")
        return key

    def get_csv(self, key: str, **kwargs) -> pd.DataFrame:
        return pd.read_csv(self.path(key), keep_default_na=False, na_values=[""], **kwargs)

    def put_npz(self, key: str, **arrays: np.ndarray) -> str:
        with self._target(key).open("wb") as fh:
            np.savez(fh, **arrays)
        return key

    def get_npz(self, key: str) -> Dict[str, np.ndarray]:
        with np.load(self.path(key)) as data:
            return {k: data[k] for k in data.files}

    def sha256(self, key: str) -> str:
        h = hashlib.sha256()
        with self.path(key).open("rb") as fh:
            for chunk in iter(lambda: fh.read(1 << 20), b""):
                h.update(chunk)
        return h.hexdigest()

    # recordings: one JSON header line, then row-major little-endian float32 samples
    def put_recording(self, key: str, rec: Recording) -> str:
        header = {
            "format": RECORDING_FORMAT, "n_channels": rec.n_channels, "n_samples": int(rec.data.shape[1]),
            "sfreq": rec.sfreq, "device": rec.device, "subject_id": rec.subject_id,
            "positions": np.asarray(rec.channel_positions).tolist(),
        }
        with self._target(key).open("wb") as fh:
            fh.write(json.dumps(header).encode("utf-8") + b"\n")
            fh.write(np.ascontiguousarray(rec.data, dtype="<f4").tobytes())
        return key

    def get_recording(self, key: str) -> Recording:
        blob = self.get_bytes(key)
        newline = blob.find(b"\n")
        if newline < 0:
            raise FormatError(f"{key}: missing recording header.")
        try:
            header = json.loads(blob[:newline])
        except json.JSONDecodeError as exc:
            raise FormatError(f"{key}: unreadable recording header ({exc}).") from exc
        if header.get("format") != RECORDING_FORMAT:
            raise FormatError(f"{key}: unsupported recording format {header.get('format')!r}.")
        n_ch, n_s = header["n_channels"], header["n_samples"]
        body = blob[newline + 1:]
        if len(body) != 4 * n_ch * n_s:
            raise FormatError(f"{key}: expected {4 * n_ch * n_s} sample bytes, found {len(body)}.")
        data = np.frombuffer(body, dtype="<f4").reshape(n_ch, n_s).astype(np.float32)
        return Recording(
            data=data, sfreq=float(header["sfreq"]), channel_positions=np.asarray(header["positions"]),
            device=header["device"], subject_id=int(header["subject_id"]),
        )

    # checkpoints: <key>.json manifest + <key>.bin parameter blob
    def put_checkpoint(self, key: str, manifest: Dict[str, Any], blob: bytes) -> Tuple[str, str]:
        return self.put_json(f"{key}.json", manifest), self.put_bytes(f"{key}.bin", blob)

    def get_checkpoint(self, key: str) -> Tuple[Dict[str, Any], bytes]:
        return self.get_json(f"{key}.json"), self.get_bytes(f"{key}.bin")


def _json_default(obj: Any) -> Any:
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"Not JSON serializable: {type(obj).__name__}")
