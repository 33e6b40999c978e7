"""Toy-scale masked-citation pre-training and grouped-beam generation."""

__version__ = "0.1.0"

from .config import TrainConfig  # noqa: F401
from .data import Example, Vocab, read_examples  # noqa: F401
from .generation import generate, grouped_beam_search  # noqa: F401
from .training import load_checkpoint, train  # noqa: F401
