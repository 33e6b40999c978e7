"""Masked-example files and the word-level vocabulary.

The trainer reads the masked dataset format produced upstream
({context_id, scheme, input_text, target_text} JSONL) and tokenizes at
the word level: targets are short author-date strings, so whole words
round-trip exactly through join/split.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

PAD, BOS, EOS, UNK = 0, 1, 2, 3
SPECIALS = ["<pad>", "<s>", "</s>", "<unk>"]


@dataclass(frozen=True)
class Example:
    context_id: str
    input_text: str
    target_text: str


def read_examples(path: str | Path) -> Iterator[Example]:
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            row = json.loads(line)
            try:
                yield Example(row["context_id"], row["input_text"], row["target_text"])
            except KeyError as exc:
                raise ValueError(f"{path}:{lineno}: missing field {exc}") from exc


class Vocab:
    """Word vocabulary over the training file, specials first."""

    def __init__(self, words: list[str]):
        self.itos = SPECIALS + words
        self.stoi = {w: i for i, w in enumerate(self.itos)}

    @classmethod
    def build(cls, examples: list[Example]) -> "Vocab":
        seen: dict[str, None] = {}
        for ex in examples:
            for word in ex.input_text.split() + ex.target_text.split():
                if word not in seen:
                    seen[word] = None
        return cls(sorted(seen))

    @classmethod
    def from_itos(cls, itos: list[str]) -> "Vocab":
        assert itos[: len(SPECIALS)] == SPECIALS, "corrupt vocabulary table"
        return cls(itos[len(SPECIALS):])

    def __len__(self) -> int:
        return len(self.itos)

    def encode(self, text: str) -> list[int]:
        return [self.stoi.get(w, UNK) for w in text.split()]

    def decode(self, ids: list[int]) -> str:
        words = []
        for i in ids:
            if i == EOS:
                break
            if i in (PAD, BOS):
                continue
            words.append(self.itos[i] if 0 <= i < len(self.itos) else "<unk>")
        return " ".join(words)


def longest_target_length(examples: list[Example]) -> int:
    return max((len(ex.target_text.split()) for ex in examples), default=0)
