"""Dense embedding tables with role tags."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import TrainingDivergedError

ROLE_USER_TARGET_PHASE1 = "user-target-phase1"
ROLE_USER_TARGET_ONLY = "user-target-only"
ROLE_USER_OVERLAP = "user-overlap"
ROLE_USER_SOURCE_ONLY = "user-source-only"
ROLE_ITEM_TARGET = "item-target"
ROLE_ITEM_SOURCE = "item-source"

KNOWN_ROLES = frozenset({
    ROLE_USER_TARGET_PHASE1, ROLE_USER_TARGET_ONLY, ROLE_USER_OVERLAP,
    ROLE_USER_SOURCE_ONLY, ROLE_ITEM_TARGET, ROLE_ITEM_SOURCE,
})


@dataclass
class EmbeddingTable:
    role: str
    values: np.ndarray

    def __post_init__(self):
        if self.values.ndim != 2:
            raise ValueError("embedding values must be a 2-D matrix")

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def copy(self) -> "EmbeddingTable":
        return EmbeddingTable(self.role, self.values.copy())

    def assert_finite(self, context: str = "") -> None:
        if not np.all(np.isfinite(self.values)):
            where = f" ({context})" if context else ""
            raise TrainingDivergedError(
                f"non-finite values in embedding table {self.role!r}{where}")


def init_embeddings(rows: int, dim: int, seed, *, role: str = "user",
                    scale: float = 0.1, dtype=np.float32) -> EmbeddingTable:
    """Gaussian-initialised table: entries i.i.d. normal(0, scale)."""
    if rows <= 0 or dim <= 0:
        raise ValueError("rows and dim must be positive")
    rng = np.random.default_rng(seed)
    values = rng.normal(0.0, scale, size=(rows, dim)).astype(dtype)
    return EmbeddingTable(role, values)


def empty_table(dim: int, *, role: str, dtype=np.float32) -> EmbeddingTable:
    """A zero-row table for partitions that happen to be empty."""
    return EmbeddingTable(role, np.zeros((0, dim), dtype=dtype))
