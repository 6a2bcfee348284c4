"""Classification metrics: threshold accuracy and rank-statistic AUC."""

from __future__ import annotations

import numpy as np
from scipy.stats import rankdata

__all__ = ["accuracy", "roc_auc", "domain_breakdown"]


def accuracy(scores: np.ndarray, labels: np.ndarray, threshold: float = 0.5) -> float:
    """Fraction of correct predictions at the given score threshold."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError(f"accuracy: need matching 1-D arrays, got {scores.shape} and {labels.shape}")
    if scores.size == 0:
        raise ValueError("accuracy: empty input")
    return float(np.mean((scores >= threshold).astype(np.int64) == labels))


def roc_auc(scores: np.ndarray, labels: np.ndarray) -> float | None:
    """P(random positive outscores random negative), ties counted half.

    Computed from the Mann-Whitney rank sum with average ranks, which equals
    exhaustive pair counting exactly. Returns None (undefined) when only one
    class is present.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError(f"roc_auc: need matching 1-D arrays, got {scores.shape} and {labels.shape}")
    pos = labels == 1
    n1 = int(pos.sum())
    n0 = int(scores.size - n1)
    if n1 == 0 or n0 == 0:
        return None
    ranks = rankdata(scores, method="average")
    return float((ranks[pos].sum() - n1 * (n1 + 1) / 2.0) / (n1 * n0))


def domain_breakdown(
    scores: np.ndarray,
    labels: np.ndarray,
    domains: np.ndarray,
) -> dict[int, dict[str, float | None]]:
    """Per-domain metrics, each mixing that domain's fakes with all reals."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    domains = np.asarray(domains)
    real = labels == 0
    table: dict[int, dict[str, float | None]] = {}
    for d in sorted(int(v) for v in np.unique(domains[labels == 1])):
        keep = real | ((labels == 1) & (domains == d))
        table[d] = {
            "acc": accuracy(scores[keep], labels[keep]),
            "auc": roc_auc(scores[keep], labels[keep]),
            "n_fake": int(((labels == 1) & (domains == d)).sum()),
        }
    return table
