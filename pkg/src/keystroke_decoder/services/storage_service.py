from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Any, Dict, Iterable, Optional, Tuple

from .. import __version__
from ..adapters.storage_local import LocalStorageAdapter
from ..config import Settings
from ..domain.errors import ConfigError, MissingArtifactError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class StageSpec:
    name: str
    requires: Tuple[str, ...]


# stage -> upstream stages whose artifacts it reads
STAGES: Dict[str, StageSpec] = {s.name: s for s in (
    StageSpec("generate", ()),
    StageSpec("split", ("generate",)),
    StageSpec("preprocess", ("generate", "split")),
    StageSpec("train-lm", ()),
    StageSpec("train", ("preprocess",)),
    StageSpec("decode", ("preprocess", "train", "train-lm")),
    StageSpec("evaluate", ("preprocess", "decode")),
    StageSpec("analyze", ("generate", "split", "preprocess", "train", "decode")),
)}

STAGE_ORDER: Tuple[str, ...] = tuple(STAGES)


def manifest_key(stage: str) -> str:
    return f"manifests/{stage}.json"


class ArtifactService:
    """Stage bookkeeping on top of a storage adapter: manifests, upstream checks, hashes."""

    def __init__(self, adapter: LocalStorageAdapter, config_hash: str, seed: int, force: bool = False):
        self.adapter = adapter
        self.config_hash = config_hash
        self.seed = seed
        self.force = force

    @staticmethod
    def from_settings(s: Settings, config_hash: str, seed: int, out_dir: Optional[str] = None, force: bool = False) -> "ArtifactService":
        return ArtifactService(LocalStorageAdapter(out_dir or s.out_dir), config_hash, seed, force)

    @property
    def store(self) -> LocalStorageAdapter:
        return self.adapter

    def manifest(self, stage: str) -> Dict[str, Any]:
        key = manifest_key(stage)
        if not self.adapter.exists(key):
            raise MissingArtifactError(str(self.adapter.path(key)), stage)
        return self.adapter.get_json(key)

    def require(self, stage: str) -> None:
        """Every upstream stage of `stage` must have run, with all its outputs present and the same config hash."""
        for upstream in STAGES[stage].requires:
            manifest = self.manifest(upstream)
            for key in manifest.get("outputs", {}):
                if not self.adapter.exists(key):
                    raise MissingArtifactError(str(self.adapter.path(key)), upstream)
            theirs = manifest.get("config_hash")
            if theirs != self.config_hash:
                msg = (
                    f"Stage '{upstream}' ran with config hash {str(theirs)[:12]}, "
                    f"current config is {self.config_hash[:12]}."
                )
                if not self.force:
                    raise ConfigError(msg + " Re-run it or pass --force.")
                logger.warning("%s Continuing because of --force.", msg)

    def input_hashes(self, keys: Iterable[str]) -> Dict[str, str]:
        return {key: self.adapter.sha256(key) for key in keys}

    def write_manifest(
        self,
        stage: str,
        inputs: Iterable[str],
        outputs: Iterable[str],
        wall_time: float,
        extra: Optional[Dict[str, Any]] = None,
    ) -> Dict[str, Any]:
        manifest = {
            "stage": stage,
            "version": __version__,
            "config_hash": self.config_hash,
            "seed": self.seed,
            "inputs": self.input_hashes(inputs),
            "outputs": self.input_hashes(outputs),
            "wall_time_s": round(wall_time, 3),
            "extra": extra or {},
        }
        self.adapter.put_json(manifest_key(stage), manifest)
        logger.info("Stage '%s' finished in %.1f s (%d outputs).", stage, wall_time, len(manifest["outputs"]))
        return manifest

