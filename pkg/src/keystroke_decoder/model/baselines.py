from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from scipy import linalg
from sklearn.dummy import DummyClassifier
from sklearn.model_selection import KFold, StratifiedKFold

from ..domain.errors import ParameterError
from ..domain.keyboard import QWERTY, Hand, KeyboardLayout, is_letter_id
from ..domain.models import Epoch
from ..domain.stats import fdr, sem

logger = logging.getLogger(__name__)

DEFAULT_ALPHAS = np.logspace(-2, 8, 11)


def _augment(X: np.ndarray) -> np.ndarray:
    return np.hstack([np.asarray(X, dtype=np.float64), np.ones((len(X), 1))])


def _targets(y: np.ndarray, classes: np.ndarray) -> np.ndarray:
    return np.where(y[:, None] == classes[None, :], 1.0, -1.0)


def _ridge_path(Xa: np.ndarray, Y: np.ndarray, alphas: Sequence[float]) -> np.ndarray:
    """Weights for every alpha at once: (alphas x features x classes) from one eigendecomposition."""
    evals, evecs = linalg.eigh(Xa.T @ Xa)
    proj = evecs.T @ (Xa.T @ Y)
    return np.stack([evecs @ (proj / (evals + a)[:, None]) for a in alphas])


@dataclass
class RidgeClassifier:
    weights: np.ndarray         # (channels + 1) x classes, bias in the last row
    classes: np.ndarray
    alpha: float

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        return _augment(X) @ self.weights

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.classes[np.argmax(self.decision_function(X), axis=1)]

    def score(self, X: np.ndarray, y: np.ndarray) -> float:
        return float(np.mean(self.predict(X) == np.asarray(y)))


def ridge_solve(X: np.ndarray, y: np.ndarray, alpha: float) -> RidgeClassifier:
    """One-vs-rest ridge with +/-1 targets at a fixed alpha (bias penalized with the rest)."""
    if alpha <= 0:
        raise ParameterError(f"alpha must be > 0, got {alpha}.")
    y = np.asarray(y)
    classes = np.unique(y)
    Xa = _augment(X)
    A = Xa.T @ Xa + alpha * np.eye(Xa.shape[1])
    W = linalg.solve(A, Xa.T @ _targets(y, classes), assume_a="pos")
    return RidgeClassifier(W, classes, float(alpha))


def _folds(y: np.ndarray, n_splits: int, seed: int):
    counts = np.unique(y, return_counts=True)[1]
    if counts.min() >= n_splits:
        return StratifiedKFold(n_splits, shuffle=True, random_state=seed).split(np.zeros(len(y)), y)
    return KFold(min(n_splits, len(y)), shuffle=True, random_state=seed).split(np.zeros(len(y)))


def select_alpha(X: np.ndarray, y: np.ndarray, alphas: Sequence[float] = DEFAULT_ALPHAS, cv: int = 5, seed: int = 0) -> float:
    """Alpha with the best mean inner cross-validated accuracy (smallest alpha on ties)."""
    y = np.asarray(y)
    classes = np.unique(y)
    Xa = _augment(X)
    scores = np.zeros(len(alphas))
    for train, test in _folds(y, cv, seed):
        if len(np.unique(y[train])) < 2:
            continue
        path = _ridge_path(Xa[train], _targets(y[train], classes), alphas)
        preds = classes[np.argmax(np.einsum("nf,afc->anc", Xa[test], path), axis=2)]
        scores += (preds == y[test][None, :]).mean(axis=1)
    return float(alphas[int(np.argmax(scores))])


def ridge_fit(
    X: np.ndarray,
    y: np.ndarray,
    alphas: Sequence[float] = DEFAULT_ALPHAS,
    cv: int = 5,
    seed: int = 0,
) -> RidgeClassifier:
    y = np.asarray(y)
    if len(np.unique(y)) < 2:
        raise ParameterError("Ridge classification needs at least 2 classes.")
    alpha = select_alpha(X, y, alphas, cv, seed) if len(alphas) > 1 else float(alphas[0])
    return ridge_solve(X, y, alpha)


# ----------------------------
# Time-resolved decoding
# ----------------------------
def hand_label(ep: Epoch, layout: KeyboardLayout = QWERTY) -> Optional[int]:
    if not is_letter_id(ep.label):
        return None
    return int(layout.hand_of(ep.label) is Hand.RIGHT)


def class_label(ep: Epoch) -> Optional[int]:
    return int(ep.label)


def _cv_accuracy(X: np.ndarray, y: np.ndarray, cv: int, seed: int, alpha: Optional[float], alphas) -> tuple:
    correct, total, chosen = 0, 0, []
    for train, test in _folds(y, cv, seed):
        if len(np.unique(y[train])) < 2:
            logger.warning("Skipping a fold with a single training class.")
            continue
        model = ridge_solve(X[train], y[train], alpha) if alpha else ridge_fit(X[train], y[train], alphas, cv, seed)
        correct += int(np.sum(model.predict(X[test]) == y[test]))
        total += len(test)
        chosen.append(model.alpha)
    return (correct / total if total else float("nan")), chosen


def time_resolved(
    epochs: Sequence[Epoch],
    label_fn: Callable[[Epoch], Optional[int]] = hand_label,
    cv: int = 5,
    alphas: Sequence[float] = DEFAULT_ALPHAS,
    n_permutations: int = 100,
    seed: int = 0,
) -> pd.DataFrame:
    """Cross-validated ridge accuracy at every time sample, per subject, with a permuted-label null.

    Returns one row per (subject, time) plus one row per time with subject_id = -1
    holding the across-subject mean, SEM, permutation p and FDR-adjusted p.
    """
    by_subject: Dict[int, List[Epoch]] = {}
    for ep in epochs:
        if label_fn(ep) is not None:
            by_subject.setdefault(ep.meta.subject_id, []).append(ep)
    if not by_subject:
        raise ParameterError("No labeled epochs for time-resolved decoding.")

    rows = []
    nulls: Dict[int, np.ndarray] = {}
    for subject_id, subject_epochs in sorted(by_subject.items()):
        data = np.stack([ep.window for ep in subject_epochs]).astype(np.float64)   # n x channels x time
        y = np.array([label_fn(ep) for ep in subject_epochs])
        times = subject_epochs[0].times
        rng = np.random.default_rng([seed, subject_id])
        perms = [rng.permutation(len(y)) for _ in range(n_permutations)]
        null = np.zeros((n_permutations, len(times)))
        for t_idx, t in enumerate(times):
            X = data[:, :, t_idx]
            acc, chosen = _cv_accuracy(X, y, cv, seed, None, alphas)
            alpha = float(np.median(chosen)) if chosen else float(alphas[0])
            for k, perm in enumerate(perms):
                null[k, t_idx] = _cv_accuracy(X, y[perm], cv, seed, alpha, alphas)[0]
            rows.append({
                "subject_id": subject_id, "time_s": float(t), "accuracy": acc,
                "chance": float(np.mean(null[:, t_idx])) if n_permutations else float("nan"),
            })
        nulls[subject_id] = null
        logger.info("Time-resolved decoding done for subject %d (%d epochs).", subject_id, len(y))

    per_subject = pd.DataFrame(rows)
    group = []
    for t, frame in per_subject.groupby("time_s", sort=True):
        t_idx = int(np.argmin(np.abs(times - t)))
        observed = frame["accuracy"].mean()
        p = float("nan")
        if n_permutations:
            null_mean = np.mean([nulls[s][:, t_idx] for s in frame["subject_id"]], axis=0)
            p = (1 + np.sum(null_mean >= observed)) / (1 + n_permutations)
        group.append({
            "subject_id": -1, "time_s": float(t), "accuracy": observed,
            "chance": frame["chance"].mean(), "sem": sem(frame["accuracy"]), "p": p,
        })
    summary = pd.DataFrame(group)
    summary["p_fdr"] = fdr(summary["p"].to_numpy()) if n_permutations else np.nan
    return pd.concat([summary, per_subject], ignore_index=True)


def peak_time(curve: pd.DataFrame) -> float:
    summary = curve[curve["subject_id"] == -1]
    return float(summary.loc[summary["accuracy"].idxmax(), "time_s"])


# ----------------------------
# Chance level
# ----------------------------
def dummy(train_labels: Sequence[int]) -> DummyClassifier:
    """Most-frequent-class predictor (ties go to the smallest class id)."""
    labels = np.asarray(train_labels)
    return DummyClassifier(strategy="most_frequent").fit(np.zeros((len(labels), 1)), labels)
