"""Training and decoding configuration, loadable from YAML."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import yaml


@dataclass
class TrainConfig:
    # Optimization
    epochs: int = 15
    learning_rate: float = 2e-5
    attention_dropout: float = 0.12
    batch_size: int = 16
    lr_decay: str = "none"            # "none" | "linear"
    grad_clip: float = 1.0
    seed: int = 42

    # Decoding (grouped beam search)
    beams: int = 20
    beam_groups: int = 0              # 0 -> beams // 2
    diversity_penalty: float = 1.5
    max_new_tokens: int = 25
    num_return: int = 10

    # Toy model size
    d_model: int = 96
    n_heads: int = 4
    n_layers: int = 2
    ffn_dim: int = 192
    max_len: int = 512

    def __post_init__(self) -> None:
        if self.num_return > self.beams:
            raise ValueError("num_return must not exceed beams")
        if self.beam_groups == 0:
            self.beam_groups = max(1, self.beams // 2)
        if self.beams % self.beam_groups != 0:
            raise ValueError("beams must be divisible by beam_groups")
        if self.epochs < 1 or self.max_new_tokens < 1:
            raise ValueError("epochs and max_new_tokens must be positive")

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "TrainConfig":
        known = {f for f in cls.__dataclass_fields__}  # noqa: C416
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_yaml(cls, path: str | Path) -> "TrainConfig":
        with open(path, "r", encoding="utf-8") as f:
            data = yaml.safe_load(f) or {}
        return cls.from_dict(data)
