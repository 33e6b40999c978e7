"""Deterministic training loop: masked context in, citation string out."""

from __future__ import annotations

import random
from pathlib import Path

import torch
from torch import nn

from .config import TrainConfig
from .data import BOS, EOS, PAD, Vocab, longest_target_length, read_examples
from .model import Seq2Seq


def _pad_batch(rows: list[list[int]], device: torch.device) -> torch.Tensor:
    width = max(len(r) for r in rows)
    out = torch.full((len(rows), width), PAD, dtype=torch.long, device=device)
    for i, row in enumerate(rows):
        out[i, : len(row)] = torch.tensor(row, dtype=torch.long, device=device)
    return out


def _batches(indices: list[int], size: int):
    for i in range(0, len(indices), size):
        yield indices[i : i + size]


def train(
    data_path: str | Path,
    cfg: TrainConfig,
    checkpoint_path: str | Path,
    device: str = "cpu",
) -> list[float]:
    """Train on a masked dataset file; returns per-epoch mean token loss.

    The checkpoint embeds the config, vocabulary, and loss history.
    """
    examples = list(read_examples(data_path))
    if not examples:
        raise ValueError(f"no examples in {data_path}")
    longest = longest_target_length(examples)
    if cfg.max_new_tokens < longest:
        raise ValueError(
            f"max_new_tokens={cfg.max_new_tokens} is shorter than the longest "
            f"target citation ({longest} tokens)"
        )

    torch.manual_seed(cfg.seed)
    torch.use_deterministic_algorithms(True)
    dev = torch.device(device)
    vocab = Vocab.build(examples)
    model = Seq2Seq(len(vocab), cfg).to(dev)
    optimizer = torch.optim.AdamW(model.parameters(), lr=cfg.learning_rate)

    encoded = [
        (vocab.encode(ex.input_text)[: cfg.max_len], vocab.encode(ex.target_text))
        for ex in examples
    ]
    n_steps = cfg.epochs * max(1, (len(encoded) + cfg.batch_size - 1) // cfg.batch_size)
    if cfg.lr_decay == "linear":
        scheduler = torch.optim.lr_scheduler.LambdaLR(
            optimizer, lambda step: max(0.05, 1.0 - step / n_steps)
        )
    else:
        scheduler = None

    loss_fn = nn.CrossEntropyLoss(ignore_index=PAD, reduction="sum")
    rng = random.Random(cfg.seed)
    order = list(range(len(encoded)))
    history: list[float] = []

    model.train()
    for _epoch in range(cfg.epochs):
        rng.shuffle(order)
        epoch_loss = 0.0
        epoch_tokens = 0
        for batch_idx in _batches(order, cfg.batch_size):
            src = _pad_batch([encoded[i][0] for i in batch_idx], dev)
            tgt_in = _pad_batch([[BOS] + encoded[i][1] for i in batch_idx], dev)
            tgt_out = _pad_batch([encoded[i][1] + [EOS] for i in batch_idx], dev)
            logits = model(src, tgt_in)
            loss = loss_fn(logits.reshape(-1, logits.size(-1)), tgt_out.reshape(-1))
            n_tokens = int(tgt_out.ne(PAD).sum())
            optimizer.zero_grad()
            (loss / n_tokens).backward()
            if cfg.grad_clip:
                nn.utils.clip_grad_norm_(model.parameters(), cfg.grad_clip)
            optimizer.step()
            if scheduler is not None:
                scheduler.step()
            epoch_loss += float(loss.detach())
            epoch_tokens += n_tokens
        history.append(epoch_loss / epoch_tokens)

    checkpoint = {
        "model_state": model.state_dict(),
        "vocab": vocab.itos,
        "config": cfg.to_dict(),
        "history": history,
    }
    Path(checkpoint_path).parent.mkdir(parents=True, exist_ok=True)
    torch.save(checkpoint, checkpoint_path)
    return history


def load_checkpoint(path: str | Path, device: str = "cpu"):
    """(model, vocab, config) from a saved checkpoint."""
    blob = torch.load(path, map_location=device, weights_only=True)
    cfg = TrainConfig.from_dict(blob["config"])
    vocab = Vocab.from_itos(blob["vocab"])
    model = Seq2Seq(len(vocab), cfg).to(device)
    model.load_state_dict(blob["model_state"])
    model.eval()
    return model, vocab, cfg
