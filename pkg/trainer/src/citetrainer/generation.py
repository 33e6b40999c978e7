"""Grouped (diverse) beam search emitting prediction-record files.

Beams are partitioned into groups decoded in a fixed order; at each step
a group's token log-probabilities are penalized by how often earlier
groups already chose that token at the same step (Hamming diversity).
Each group runs an ordinary beam search internally.  Final hypotheses
from all groups are pooled, ranked by total log-probability, and the top
``num_return`` strings are written per context — duplicates allowed, the
way generators actually behave.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import torch

from .config import TrainConfig
from .data import BOS, EOS, Example, Vocab

logger = logging.getLogger(__name__)


@dataclass
class _Beam:
    ids: tuple[int, ...]            # decoder prefix, starts with BOS
    score: float                    # sum of token log-probabilities
    finished: bool = False

    @property
    def normalized(self) -> float:
        """Length-normalized score; rank short and long hypotheses fairly."""
        return self.score / max(1, len(self.ids) - 1)


def _step_logprobs(model, memory, memory_pad, beams: list[_Beam], device) -> torch.Tensor:
    """(n_beams, vocab) next-token log-probabilities for live beams."""
    prefix = torch.tensor([b.ids for b in beams], dtype=torch.long, device=device)
    mem = memory.expand(len(beams), -1, -1)
    pad = memory_pad.expand(len(beams), -1)
    logits = model.decode_step(prefix, mem, pad)[:, -1]
    return torch.log_softmax(logits, dim=-1)


def grouped_beam_search(
    model,
    vocab: Vocab,
    src_ids: list[int],
    cfg: TrainConfig,
    device: str = "cpu",
) -> list[str]:
    """Top num_return citation strings for one encoded context."""
    dev = torch.device(device)
    group_size = cfg.beams // cfg.beam_groups
    src = torch.tensor([src_ids], dtype=torch.long, device=dev)
    memory, memory_pad = model.encode(src)

    groups: list[list[_Beam]] = [
        [_Beam(ids=(BOS,), score=0.0)] for _ in range(cfg.beam_groups)
    ]
    done: list[list[_Beam]] = [[] for _ in range(cfg.beam_groups)]

    for step in range(cfg.max_new_tokens):
        live_index: list[tuple[int, int]] = [
            (g, i) for g, beams in enumerate(groups) for i, b in enumerate(beams)
        ]
        if not live_index:
            break
        all_live = [groups[g][i] for g, i in live_index]
        logprobs = _step_logprobs(model, memory, memory_pad, all_live, dev)
        if step == 0:
            logprobs[:, EOS] = float("-inf")  # empty hypotheses are meaningless

        step_counts = torch.zeros(len(vocab), device=dev)
        for g in range(cfg.beam_groups):
            rows = [j for j, (gg, _) in enumerate(live_index) if gg == g]
            beams = [all_live[j] for j in rows]
            if not beams:
                continue
            lp = logprobs[rows] - cfg.diversity_penalty * step_counts
            scores = lp + torch.tensor([[b.score] for b in beams], device=dev)
            flat = scores.reshape(-1)
            width = min(2 * group_size, flat.numel())
            order = torch.argsort(-flat, stable=True)[:width]

            new_live: list[_Beam] = []
            chosen_tokens: list[int] = []
            for cand in order.tolist():
                beam_i, token = divmod(cand, len(vocab))
                # Raw score keeps the un-penalized model probability; the
                # penalty only steers the step-level selection.
                raw = beams[beam_i].score + float(logprobs[rows[beam_i], token])
                ids = beams[beam_i].ids + (token,)
                if token == EOS:
                    done[g].append(_Beam(ids=ids, score=raw, finished=True))
                elif len(new_live) < group_size:
                    new_live.append(_Beam(ids=ids, score=raw))
                    chosen_tokens.append(token)
                if len(new_live) == group_size:
                    break
            # Early stop: enough finished hypotheses means further (strictly
            # lower-scoring) continuations cannot help this group.
            groups[g] = [] if len(done[g]) >= group_size else new_live
            for token in chosen_tokens:
                step_counts[token] += 1.0

    pool: list[tuple[float, int, int, _Beam]] = []
    serial = 0
    for g in range(cfg.beam_groups):
        for beam in done[g] + groups[g]:
            pool.append((-beam.normalized, g, serial, beam))
            serial += 1
    pool.sort(key=lambda item: (item[0], item[1], item[2]))

    predictions = [vocab.decode(list(beam.ids)) for _, _, _, beam in pool[: cfg.num_return]]
    while len(predictions) < cfg.num_return:
        logger.warning("decode produced %d/%d hypotheses; padding with empty slot",
                       len(predictions), cfg.num_return)
        predictions.append("")
    return predictions


def generate(
    model,
    vocab: Vocab,
    examples: list[Example],
    cfg: TrainConfig,
    out_path: str | Path,
    device: str = "cpu",
) -> int:
    """Write one prediction record per context; returns the record count."""
    model.eval()
    path = Path(out_path)
    path.parent.mkdir(parents=True, exist_ok=True)
    n = 0
    with torch.no_grad(), open(path, "w", encoding="utf-8", newline="\n") as f:
        for ex in examples:
            src_ids = vocab.encode(ex.input_text)[: cfg.max_len]
            preds = grouped_beam_search(model, vocab, src_ids, cfg, device=device)
            record = {"context_id": ex.context_id, "predictions": preds}
            f.write(json.dumps(record, ensure_ascii=False, sort_keys=True) + "\n")
            n += 1
    return n
