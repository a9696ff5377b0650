"""Full-ranking top-K evaluation: Recall@K, HR@K, NDCG@K.

Items a user has already seen (train plus valid when scoring the test
set) are masked out of the ranking by default; ties are broken by
ascending item index.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .corpus import SplitDataset

METRIC_NAMES = ("recall", "hr", "ndcg")


def rank_items(scores: np.ndarray, mask, k: int) -> np.ndarray:
    """Top-k item indices by score, masked items excluded, ties broken by
    ascending index. Returns all unmasked items (sorted) when k exceeds
    their count."""
    if k < 1:
        raise ValueError("k must be >= 1")
    scores = np.asarray(scores)
    masked = np.zeros(scores.size, dtype=bool)
    if mask is not None:
        mask_idx = np.asarray(list(mask) if isinstance(mask, (set, frozenset))
                              else mask, dtype=np.int64)
        masked[mask_idx] = True
    available = np.flatnonzero(~masked)
    if available.size == 0:
        return available
    neg = -scores[available]
    if k >= available.size:
        order = np.argsort(neg, kind="stable")
        return available[order]
    # Partial selection: strictly-better items plus lowest-index ties at
    # the boundary value, then ordered by (score desc, index asc).
    kth = np.partition(neg, k - 1)[k - 1]
    better = available[neg < kth]
    ties = available[neg == kth]
    chosen = np.concatenate([better, ties[:k - better.size]])
    order = np.lexsort((chosen, -scores[chosen]))
    return chosen[order]


def recall_at_k(topk, test_items, k: int = 10) -> float:
    if k < 1:
        raise ValueError("k must be >= 1")
    test = set(int(i) for i in test_items)
    if not test:
        raise ValueError("test set must be non-empty")
    hits = sum(1 for item in list(topk)[:k] if int(item) in test)
    return hits / len(test)


def hr_at_k(topk, test_items, k: int = 10) -> int:
    if k < 1:
        raise ValueError("k must be >= 1")
    test = set(int(i) for i in test_items)
    if not test:
        raise ValueError("test set must be non-empty")
    return int(any(int(item) in test for item in list(topk)[:k]))


def ndcg_at_k(topk, test_items, k: int = 10) -> float:
    if k < 1:
        raise ValueError("k must be >= 1")
    test = set(int(i) for i in test_items)
    if not test:
        raise ValueError("test set must be non-empty")
    dcg = sum(1.0 / math.log2(rank + 1)
              for rank, item in enumerate(list(topk)[:k], start=1)
              if int(item) in test)
    idcg = sum(1.0 / math.log2(rank + 1)
               for rank in range(1, min(k, len(test)) + 1))
    return dcg / idcg


@dataclass(frozen=True)
class MetricsReport:
    means: dict[str, float]
    stds: dict[str, float]
    k: int
    n_users: int
    seed: int | None = None
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {name: {"mean": self.means[name], "std": self.stds[name]}
               for name in METRIC_NAMES}
        out["K"] = self.k
        out["users"] = self.n_users
        out["seed"] = self.seed
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"


def format_report(report: MetricsReport) -> str:
    lines = [f"{'metric':<12}{'mean':>12}{'std':>12}"]
    for name in METRIC_NAMES:
        lines.append(f"{name + '@' + str(report.k):<12}"
                     f"{report.means[name]:>12.6f}"
                     f"{report.stds[name]:>12.6f}")
    lines.append(f"users={report.n_users}"
                 + (f" seed={report.seed}" if report.seed is not None else ""))
    return "\n".join(lines) + "\n"


def evaluate_full(scorer, split: SplitDataset, *, k: int = 10,
                  part: str = "test", mask_seen: bool = True,
                  seed: int | None = None) -> MetricsReport:
    """Score every item per user with ``scorer(user)`` and aggregate
    metrics over users with at least one held-out interaction.

    ``part='test'`` masks train+valid items; ``part='valid'`` masks train
    items only.
    """
    if part == "test":
        held = split.test
        mask_parts = (split.train, split.valid)
    elif part == "valid":
        held = split.valid
        mask_parts = (split.train,)
    else:
        raise ValueError(f"part must be 'test' or 'valid', got {part!r}")

    per_user = {name: [] for name in METRIC_NAMES}
    evaluated = 0
    for user in range(held.n_users):
        test_items = held.rows[user]
        if test_items.size == 0:
            continue
        mask = (np.concatenate([p.rows[user] for p in mask_parts])
                if mask_seen else None)
        topk = rank_items(scorer(user), mask, k)
        per_user["recall"].append(recall_at_k(topk, test_items, k))
        per_user["hr"].append(hr_at_k(topk, test_items, k))
        per_user["ndcg"].append(ndcg_at_k(topk, test_items, k))
        evaluated += 1
    if evaluated == 0:
        raise ValueError("no users with held-out interactions to evaluate")
    means = {name: float(np.mean(vals)) for name, vals in per_user.items()}
    stds = {name: float(np.std(vals)) for name, vals in per_user.items()}
    return MetricsReport(means, stds, k, evaluated, seed)
