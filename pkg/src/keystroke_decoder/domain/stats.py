from __future__ import annotations

import logging
from typing import Sequence

import numpy as np
from scipy import stats

from .errors import ParameterError
from .models import StatResult

logger = logging.getLogger(__name__)

MIN_SAMPLES = 5
N_RESAMPLES = 10_000


def _check(n: int, name: str) -> None:
    if n < MIN_SAMPLES:
        raise ParameterError(f"{name} needs at least {MIN_SAMPLES} samples, got {n}.")


def _signed_rank_sum(x, y, axis=-1):
    d = np.asarray(x) - np.asarray(y)
    ranks = stats.rankdata(np.abs(d), axis=axis)
    # zero differences keep rank mass but carry no sign
    return np.sum(np.sign(d) * ranks, axis=axis)


def _u_statistic(x, y, axis=-1):
    ranks = stats.rankdata(np.concatenate([x, y], axis=axis), axis=axis)
    n_x = np.shape(x)[axis]
    r_x = np.take(ranks, np.arange(n_x), axis=axis)
    return np.sum(r_x, axis=axis) - n_x * (n_x + 1) / 2


def _pearson_r(x, y, axis=-1):
    x = np.asarray(x) - np.mean(x, axis=axis, keepdims=True)
    y = np.asarray(y) - np.mean(y, axis=axis, keepdims=True)
    return np.sum(x * y, axis=axis) / np.sqrt(np.sum(x * x, axis=axis) * np.sum(y * y, axis=axis))


def wilcoxon(a: Sequence[float], b: Sequence[float], n_resamples: int = N_RESAMPLES, seed: int = 0) -> StatResult:
    """Paired signed-rank test with a sign-flip permutation p-value (two-sided)."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ParameterError("Wilcoxon needs paired samples of equal length.")
    _check(len(a), "Wilcoxon")
    if np.all(a == b):
        logger.warning("Wilcoxon: all paired differences are zero, reporting p=1.")
        return StatResult("wilcoxon", 0.0, 1.0, len(a), warning="all differences tied at zero")

    res = stats.permutation_test(
        (a, b), _signed_rank_sum, permutation_type="samples", vectorized=True,
        n_resamples=n_resamples, alternative="two-sided", random_state=np.random.default_rng(seed),
    )
    return StatResult("wilcoxon", float(res.statistic), float(min(res.pvalue, 1.0)), len(a))


def mannwhitney(a: Sequence[float], b: Sequence[float], n_resamples: int = N_RESAMPLES, seed: int = 0) -> StatResult:
    """Rank-sum U test with a label-permutation p-value (two-sided)."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    _check(len(a) + len(b), "Mann-Whitney")
    if len(a) == 0 or len(b) == 0:
        raise ParameterError("Mann-Whitney needs two non-empty samples.")
    if np.unique(np.concatenate([a, b])).size == 1:
        logger.warning("Mann-Whitney: all values tied, reporting p=1.")
        return StatResult("mannwhitney", float(len(a) * len(b) / 2), 1.0, len(a) + len(b), warning="all values tied")

    res = stats.permutation_test(
        (a, b), _u_statistic, permutation_type="independent", vectorized=True,
        n_resamples=n_resamples, alternative="two-sided", random_state=np.random.default_rng(seed),
    )
    return StatResult("mannwhitney", float(res.statistic), float(min(res.pvalue, 1.0)), len(a) + len(b))


def pearson(x: Sequence[float], y: Sequence[float], n_resamples: int = N_RESAMPLES, seed: int = 0) -> StatResult:
    """Pearson r with a pairing-permutation p-value (two-sided)."""
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise ParameterError("Pearson needs paired samples of equal length.")
    _check(len(x), "Pearson")
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        logger.warning("Pearson: constant input, correlation undefined.")
        return StatResult("pearson", float("nan"), 1.0, len(x), warning="constant input")

    res = stats.permutation_test(
        (x, y), _pearson_r, permutation_type="pairings", vectorized=True,
        n_resamples=n_resamples, alternative="two-sided", random_state=np.random.default_rng(seed),
    )
    return StatResult("pearson", float(res.statistic), float(min(res.pvalue, 1.0)), len(x))


def fdr(pvalues: Sequence[float]) -> np.ndarray:
    """Benjamini-Hochberg adjusted p-values."""
    p = np.asarray(pvalues, dtype=float)
    if p.size == 0:
        return p
    if np.any(~np.isfinite(p)) or np.any((p < 0) | (p > 1)):
        raise ParameterError("p-values must lie in [0, 1].")
    return stats.false_discovery_control(p, method="bh")


def sem(values: Sequence[float]) -> float:
    v = np.asarray(values, dtype=float)
    return float(stats.sem(v)) if v.size > 1 else 0.0
