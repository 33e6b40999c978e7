"""TrainConfig defaults, YAML loading, and validation."""

from __future__ import annotations

import pytest

from citetrainer.config import TrainConfig


def test_defaults_mirror_published_settings():
    cfg = TrainConfig()
    assert cfg.epochs == 15
    assert cfg.learning_rate == 2e-5
    assert cfg.attention_dropout == 0.12
    assert cfg.beams == 20
    assert cfg.diversity_penalty == 1.5
    assert cfg.max_new_tokens == 25
    assert cfg.num_return == 10


def test_beam_groups_default_is_half_the_beams():
    assert TrainConfig().beam_groups == 10
    assert TrainConfig(beams=8, num_return=4).beam_groups == 4


def test_yaml_round_trip(tmp_path):
    path = tmp_path / "cfg.yaml"
    path.write_text("epochs: 30\nlearning_rate: 0.001\nbatch_size: 4\n")
    cfg = TrainConfig.from_yaml(path)
    assert cfg.epochs == 30
    assert cfg.learning_rate == 0.001
    assert cfg.batch_size == 4


def test_rejects_invalid_combinations():
    with pytest.raises(ValueError):
        TrainConfig(num_return=30, beams=20)
    with pytest.raises(ValueError):
        TrainConfig(beams=10, beam_groups=3)
    with pytest.raises(ValueError):
        TrainConfig(epochs=0)


def test_rejects_unknown_keys():
    with pytest.raises(ValueError):
        TrainConfig.from_dict({"epochs": 5, "warp_factor": 9})
