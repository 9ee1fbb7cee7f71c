from __future__ import annotations

import copy
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
import torch
import torch.nn.functional as F
from torch.optim import AdamW
from torch.optim.lr_scheduler import OneCycleLR

from ..config import TrainSection
from ..domain.errors import ConfigError, NumericalError, ParameterError
from ..domain.models import Epoch
from .network import DecoderModel

logger = logging.getLogger(__name__)


@dataclass
class SentenceSample:
    """All keystroke windows of one typed sentence, in keystroke order."""

    subject_id: int
    sentence_id: int
    windows: np.ndarray          # n x sensors x time
    labels: np.ndarray           # n
    epochs: List[Epoch] = field(default_factory=list, repr=False)

    def __len__(self) -> int:
        return len(self.labels)


def make_samples(epochs: Sequence[Epoch]) -> List[SentenceSample]:
    groups: Dict[Tuple[int, int], List[Epoch]] = {}
    for ep in epochs:
        groups.setdefault((ep.meta.subject_id, ep.meta.sentence_id), []).append(ep)
    samples = []
    for (subject_id, sentence_id), group in sorted(groups.items()):
        group.sort(key=lambda e: e.meta.position)
        samples.append(SentenceSample(
            subject_id=subject_id, sentence_id=sentence_id,
            windows=np.stack([e.window for e in group]).astype(np.float32),
            labels=np.array([e.label for e in group], dtype=np.int64),
            epochs=group,
        ))
    return samples


def subsample(samples: Sequence[SentenceSample], fraction: float, seed: int) -> List[SentenceSample]:
    """Uniformly drawn subset of sentences (at least one)."""
    if not 0 < fraction <= 1:
        raise ParameterError(f"train fraction must lie in (0, 1], got {fraction}.")
    if fraction == 1:
        return list(samples)
    rng = np.random.default_rng([seed, 2])
    n = max(1, int(round(fraction * len(samples))))
    keep = np.sort(rng.choice(len(samples), size=n, replace=False))
    return [samples[i] for i in keep]


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    batch_keystrokes: int = 128
    peak_lr: float = 1e-4
    pct_start: float = 0.1
    weight_decay: float = 1e-4
    patience: int = 10
    seed: int = 0

    @classmethod
    def from_section(cls, section: TrainSection, seed: int) -> "TrainConfig":
        return cls(
            epochs=section.epochs, batch_keystrokes=section.batch_keystrokes, peak_lr=section.peak_lr,
            pct_start=section.pct_start, weight_decay=section.weight_decay, patience=section.patience, seed=seed,
        )


@dataclass
class Batch:
    windows: torch.Tensor        # keystrokes x sensors x time
    subjects: torch.Tensor       # keystrokes
    labels: torch.Tensor         # B x L, padded with -100
    lengths: List[int]
    sentence_ids: List[int]


@dataclass
class TrainResult:
    history: List[dict]
    best_epoch: int
    best_valid_loss: float
    stopped_early: bool


# ----------------------------
# Batching
# ----------------------------
def pack_sentences(lengths: Sequence[int], order: Sequence[int], budget: int) -> List[List[int]]:
    """Greedily group sentences (in `order`) while the keystroke total stays within `budget`."""
    batches: List[List[int]] = []
    current: List[int] = []
    total = 0
    for i in order:
        if current and total + lengths[i] > budget:
            batches.append(current)
            current, total = [], 0
        current.append(int(i))
        total += lengths[i]
    if current:
        batches.append(current)
    return batches


def plan_batches(samples: Sequence[SentenceSample], cfg: TrainConfig) -> List[List[List[int]]]:
    """Batch plan for every epoch, fixed up front so the scheduler knows the step count."""
    rng = np.random.default_rng([cfg.seed, 1])
    lengths = [len(s) for s in samples]
    return [pack_sentences(lengths, rng.permutation(len(samples)), cfg.batch_keystrokes) for _ in range(cfg.epochs)]


def collate(samples: Sequence[SentenceSample], dtype: torch.dtype = torch.float32) -> Batch:
    lengths = [len(s) for s in samples]
    labels = torch.full((len(samples), max(lengths)), -100, dtype=torch.long)
    for row, s in enumerate(samples):
        labels[row, : len(s)] = torch.as_tensor(s.labels)
    return Batch(
        windows=torch.as_tensor(np.concatenate([s.windows for s in samples])).to(dtype),
        subjects=torch.as_tensor(np.concatenate([np.full(len(s), s.subject_id) for s in samples])).long(),
        labels=labels,
        lengths=lengths,
        sentence_ids=[s.sentence_id for s in samples],
    )


def iter_batches(samples: Sequence[SentenceSample], budget: int, dtype=torch.float32) -> Iterator[Batch]:
    lengths = [len(s) for s in samples]
    for idx in pack_sentences(lengths, range(len(samples)), budget):
        yield collate([samples[i] for i in idx], dtype)


# ----------------------------
# Objective
# ----------------------------
def loss_fn(logits: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    """Mean cross-entropy over real keystrokes; label -100 marks padding."""
    return F.cross_entropy(logits.reshape(-1, logits.shape[-1]), labels.reshape(-1), ignore_index=-100)


def batch_loss(model: DecoderModel, batch: Batch) -> torch.Tensor:
    logits, _ = model(batch.windows, batch.subjects, batch.lengths)
    return loss_fn(logits, batch.labels)


def _check_finite(loss: torch.Tensor, batch: Batch) -> None:
    if not torch.isfinite(loss):
        raise NumericalError(
            f"Non-finite loss {loss.item()} on batch of sentences {batch.sentence_ids} "
            f"({sum(batch.lengths)} keystrokes, max |x|={batch.windows.abs().max().item():.3g})."
        )


def grad(model: DecoderModel, batch: Batch) -> Dict[str, torch.Tensor]:
    """Gradients of the batch loss with respect to every named parameter."""
    model.zero_grad(set_to_none=False)
    loss = batch_loss(model, batch)
    _check_finite(loss, batch)
    loss.backward()
    return {name: p.grad.detach().clone() for name, p in model.named_parameters()}


@torch.no_grad()
def evaluate(model: DecoderModel, samples: Sequence[SentenceSample], budget: int = 128) -> Tuple[float, float]:
    """(mean cross-entropy, keystroke accuracy) in eval mode."""
    model.eval()
    total_loss, total_correct, total_n = 0.0, 0, 0
    for batch in iter_batches(samples, budget):
        logits, mask = model(batch.windows, batch.subjects, batch.lengths)
        n = int((~mask).sum())
        total_loss += float(loss_fn(logits, batch.labels)) * n
        total_correct += int((logits.argmax(-1) == batch.labels)[~mask].sum())
        total_n += n
    return total_loss / total_n, total_correct / total_n


# ----------------------------
# Training loop
# ----------------------------
# OneCycleLR cannot start at exactly 0; peak / 1e4 at both ends stands in for it
WARMUP_DIV = 1e4


def one_cycle(optimizer: torch.optim.Optimizer, cfg: TrainConfig, total_steps: int) -> OneCycleLR:
    """Linear warmup to peak_lr over the first pct_start of steps, then linear decay back toward 0."""
    return OneCycleLR(
        optimizer, max_lr=cfg.peak_lr, total_steps=total_steps, pct_start=cfg.pct_start,
        anneal_strategy="linear", cycle_momentum=False, div_factor=WARMUP_DIV, final_div_factor=1.0,
    )


def fit(
    model: DecoderModel,
    train: Sequence[SentenceSample],
    valid: Sequence[SentenceSample],
    cfg: TrainConfig,
    on_epoch: Optional[Callable[[dict], None]] = None,
) -> TrainResult:
    """AdamW with a one-cycle schedule (linear warmup then linear decay) and early stopping.

    The model is left holding the parameters of the best validation epoch.
    """
    if not train or not valid:
        raise ConfigError("Training needs non-empty train and validation splits.")
    torch.manual_seed(cfg.seed)
    plan = plan_batches(train, cfg)
    total_steps = sum(len(epoch) for epoch in plan)

    optimizer = AdamW(model.parameters(), lr=cfg.peak_lr, weight_decay=cfg.weight_decay)
    scheduler = one_cycle(optimizer, cfg, total_steps)

    history: List[dict] = []
    best_state = copy.deepcopy(model.state_dict())
    best_loss, best_epoch, bad_epochs = math.inf, -1, 0
    stopped_early = False
    for epoch, batches in enumerate(plan):
        model.train()
        lrs, losses = [], []
        for idx in batches:
            batch = collate([train[i] for i in idx])
            optimizer.zero_grad()
            loss = batch_loss(model, batch)
            try:
                _check_finite(loss, batch)
            except NumericalError:
                model.load_state_dict(best_state)
                logger.error("Aborting at epoch %d; restored parameters of epoch %d.", epoch, best_epoch)
                raise
            loss.backward()
            lrs.append(optimizer.param_groups[0]["lr"])
            optimizer.step()
            scheduler.step()
            losses.append(float(loss))

        valid_loss, valid_acc = evaluate(model, valid, cfg.batch_keystrokes)
        row = {
            "epoch": epoch, "train_loss": float(np.mean(losses)), "valid_loss": valid_loss,
            "valid_acc": valid_acc, "lr_first": lrs[0], "lr_last": lrs[-1], "steps": len(lrs),
        }
        history.append(row)
        if on_epoch:
            on_epoch(row)
        logger.info(
            "epoch %3d  train %.4f  valid %.4f  acc %.3f  lr %.2e",
            epoch, row["train_loss"], valid_loss, valid_acc, lrs[-1],
        )

        if valid_loss < best_loss:
            best_loss, best_epoch, bad_epochs = valid_loss, epoch, 0
            best_state = copy.deepcopy(model.state_dict())
        else:
            bad_epochs += 1
            if bad_epochs >= cfg.patience:
                logger.info("Early stopping at epoch %d (best %d).", epoch, best_epoch)
                stopped_early = True
                break

    model.load_state_dict(best_state)
    model.eval()
    return TrainResult(history=history, best_epoch=best_epoch, best_valid_loss=best_loss, stopped_early=stopped_early)

