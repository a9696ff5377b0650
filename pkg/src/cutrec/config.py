"""Training configuration and named presets."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

from .errors import ConfigError

# Per-dataset-style defaults: prediction loss, contrastive weight, weight
# decay. Everything else keeps the shared defaults below.
PRESETS = {
    "amazon-like": {"loss_kind": "bce", "contrastive_weight": 1e-4,
                    "weight_decay": 1e-6},
    "douban-like": {"loss_kind": "bpr", "contrastive_weight": 5e-5,
                    "weight_decay": 1e-7},
}


@dataclass
class TrainingConfig:
    alpha: float = 0.2
    contrastive_weight: float = 1e-4
    temperature: float = 0.1
    gamma: float = 0.9
    batch_size: int = 2048
    lr: float = 0.001
    weight_decay: float = 0.0
    loss_kind: str = "bce"
    backbone: str = "mf"
    k_layers: int = 2
    embedding_dim: int = 64
    max_epochs: int = 100
    patience: int = 10
    seed: int = 0
    # Ablation switches.
    no_contrastive: bool = False
    no_transform: bool = False
    history_similarity: bool = False
    joint_training_baseline: bool = False
    # Non-default variants.
    warm_start: bool = False
    normalized_contrastive: bool = False
    transform_init: str = "identity"

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"alpha must be in [0, 1], got {self.alpha}")
        if self.contrastive_weight < 0.0:
            raise ConfigError("contrastive_weight must be >= 0")
        if self.temperature <= 0.0:
            raise ConfigError("temperature must be > 0")
        if not -1.0 < self.gamma <= 1.0:
            raise ConfigError(f"gamma must be in (-1, 1], got {self.gamma}")
        if self.loss_kind not in ("bce", "bpr"):
            raise ConfigError(f"loss_kind must be 'bce' or 'bpr', "
                              f"got {self.loss_kind!r}")
        if self.backbone not in ("mf", "lightgcn"):
            raise ConfigError(f"backbone must be 'mf' or 'lightgcn', "
                              f"got {self.backbone!r}")
        if self.transform_init not in ("identity", "random"):
            raise ConfigError(f"transform_init must be 'identity' or "
                              f"'random', got {self.transform_init!r}")
        for field in ("batch_size", "k_layers", "embedding_dim",
                      "max_epochs", "patience"):
            value = getattr(self, field)
            minimum = 0 if field == "k_layers" else 1
            if value < minimum:
                raise ConfigError(f"{field} must be >= {minimum}, got {value}")

    @property
    def effective_no_transform(self) -> bool:
        return self.no_transform or self.joint_training_baseline

    @property
    def effective_no_contrastive(self) -> bool:
        return self.no_contrastive or self.joint_training_baseline

    def replace(self, **changes) -> "TrainingConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict, preset: str | None = None) -> "TrainingConfig":
        merged: dict = {}
        if preset is not None:
            if preset not in PRESETS:
                raise ConfigError(f"unknown preset {preset!r}; "
                                  f"available: {sorted(PRESETS)}")
            merged.update(PRESETS[preset])
        known = {f.name for f in dataclasses.fields(cls)}
        for key, value in data.items():
            if key not in known:
                raise ConfigError(f"unknown training config key {key!r}")
            merged[key] = value
        return cls(**merged)
