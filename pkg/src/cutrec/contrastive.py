"""Contrastive similarity-preservation regulariser and the combined
training objective.

For one batch with similar pair set S and all-ordered-pair set A over the
distinct batch users, the regulariser is

    -(1/|S|) * sum_{(i,j) in S} log( |A| * exp(z_ij / tau)
                                     / sum_{(x,y) in A} exp(z_xy / tau) )

where z is the raw dot product of the transformed user vectors. The |A|
factor means individual terms may go negative; the value is 0 when all
transformed vectors coincide or when S is empty.
"""

from __future__ import annotations

import numpy as np

from .similarity import PairSets


def contrastive_loss(transformed: np.ndarray, pairs: PairSets, tau: float,
                     *, normalize: bool = False
                     ) -> tuple[float, np.ndarray]:
    """Loss and gradient w.r.t. the transformed vectors.

    ``transformed`` rows must align with ``pairs.users``. With
    ``normalize=True``, dot products are taken between unit-normalised
    vectors (non-default variant).
    """
    if tau <= 0.0:
        raise ValueError("tau must be positive")
    n = pairs.n_users
    if transformed.shape[0] != n:
        raise ValueError("transformed rows do not match pair-set users")
    d_transformed = np.zeros_like(transformed, dtype=np.float64)
    n_similar = pairs.n_similar
    if n < 2 or n_similar == 0:
        return 0.0, d_transformed

    values = transformed.astype(np.float64, copy=False)
    if normalize:
        norms = np.linalg.norm(values, axis=1, keepdims=True)
        safe = np.maximum(norms, 1e-12)
        feats = values / safe
    else:
        feats = values

    logits = (feats @ feats.T) / tau
    off_diag = ~np.eye(n, dtype=bool)
    sim = pairs.sim_mask

    z_max = logits[off_diag].max()
    exp_shift = np.where(off_diag, np.exp(logits - z_max), 0.0)
    denom = exp_shift.sum()
    log_denom = np.log(denom) + z_max

    n_all = pairs.n_all
    loss = -(np.log(n_all) * n_similar
             + logits[sim].sum()
             - log_denom * n_similar) / n_similar

    softmax = exp_shift / denom
    # d loss / d logits, nonzero on the off-diagonal only.
    d_logits = (softmax - sim / n_similar) / tau
    d_feats = (d_logits + d_logits.T) @ feats

    if normalize:
        # Through f = v / max(||v||, eps): remove the radial component.
        radial = np.einsum("ij,ij->i", d_feats, feats)[:, None] * feats
        d_values = (d_feats - radial) / safe
        zero = (norms[:, 0] == 0.0)
        d_values[zero] = 0.0
        d_transformed[...] = d_values
    else:
        d_transformed[...] = d_feats
    return float(loss), d_transformed


def total_loss(l_target: float, l_source: float, l_contrastive: float,
               alpha: float, lam: float) -> float:
    """Weighted combination: (1 - alpha) * L_t + alpha * L_s + lambda * L_c."""
    return (1.0 - alpha) * l_target + alpha * l_source + lam * l_contrastive
