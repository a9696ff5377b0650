"""Implicit-feedback prediction losses with hand-derived gradients.

Both losses return (mean loss, d_loss/d_pos_scores, d_loss/d_neg_scores)
with the 1/N factor already folded into the gradients.
"""

from __future__ import annotations

import numpy as np


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softplus(x: np.ndarray) -> np.ndarray:
    # log(1 + e^x), overflow-safe for large |x|.
    return np.logaddexp(0.0, x)


def bce_loss(pos_scores: np.ndarray,
             neg_scores: np.ndarray) -> tuple[float, np.ndarray, np.ndarray]:
    """Binary cross entropy: -ln sigma(s) for positives, -ln(1 - sigma(s))
    for negatives, averaged over all entries."""
    pos = np.asarray(pos_scores, dtype=np.float64)
    neg = np.asarray(neg_scores, dtype=np.float64)
    n = pos.size + neg.size
    if n == 0:
        raise ValueError("bce_loss needs at least one score")
    loss = (softplus(-pos).sum() + softplus(neg).sum()) / n
    d_pos = (sigmoid(pos) - 1.0) / n
    d_neg = sigmoid(neg) / n
    return float(loss), d_pos, d_neg


def bpr_loss(pos_scores: np.ndarray,
             neg_scores: np.ndarray) -> tuple[float, np.ndarray, np.ndarray]:
    """Pairwise ranking loss: mean -ln sigma(s_pos - s_neg) over paired
    positive/negative scores."""
    pos = np.asarray(pos_scores, dtype=np.float64)
    neg = np.asarray(neg_scores, dtype=np.float64)
    if pos.shape != neg.shape:
        raise ValueError("bpr_loss needs paired scores of equal length")
    if pos.size == 0:
        raise ValueError("bpr_loss needs at least one pair")
    margin = pos - neg
    loss = softplus(-margin).mean()
    d_pos = (sigmoid(margin) - 1.0) / pos.size
    return float(loss), d_pos, -d_pos
