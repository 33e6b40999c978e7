"""Small transformer encoder-decoder for masked-citation reconstruction."""

from __future__ import annotations

import math

import torch
from torch import Tensor, nn

from .config import TrainConfig
from .data import PAD


class PositionalEncoding(nn.Module):
    def __init__(self, d_model: int, max_len: int):
        super().__init__()
        pe = torch.zeros(max_len, d_model)
        pos = torch.arange(max_len, dtype=torch.float).unsqueeze(1)
        div = torch.exp(torch.arange(0, d_model, 2).float() * (-math.log(10000.0) / d_model))
        pe[:, 0::2] = torch.sin(pos * div)
        pe[:, 1::2] = torch.cos(pos * div)
        self.register_buffer("pe", pe.unsqueeze(0))

    def forward(self, x: Tensor) -> Tensor:
        return x + self.pe[:, : x.size(1)]


class Seq2Seq(nn.Module):
    def __init__(self, vocab_size: int, cfg: TrainConfig):
        super().__init__()
        self.d_model = cfg.d_model
        self.embed = nn.Embedding(vocab_size, cfg.d_model, padding_idx=PAD)
        self.pos = PositionalEncoding(cfg.d_model, cfg.max_len)
        self.transformer = nn.Transformer(
            d_model=cfg.d_model,
            nhead=cfg.n_heads,
            num_encoder_layers=cfg.n_layers,
            num_decoder_layers=cfg.n_layers,
            dim_feedforward=cfg.ffn_dim,
            dropout=cfg.attention_dropout,
            batch_first=True,
        )
        self.out = nn.Linear(cfg.d_model, vocab_size)

    def _embed(self, ids: Tensor) -> Tensor:
        return self.pos(self.embed(ids) * math.sqrt(self.d_model))

    def encode(self, src: Tensor) -> tuple[Tensor, Tensor]:
        src_pad = src.eq(PAD)
        memory = self.transformer.encoder(self._embed(src), src_key_padding_mask=src_pad)
        return memory, src_pad

    def decode_step(self, tgt: Tensor, memory: Tensor, memory_pad: Tensor) -> Tensor:
        """Logits for every position of the (unpadded) target prefix."""
        causal = nn.Transformer.generate_square_subsequent_mask(tgt.size(1), device=tgt.device)
        hidden = self.transformer.decoder(
            self._embed(tgt), memory, tgt_mask=causal, memory_key_padding_mask=memory_pad
        )
        return self.out(hidden)

    def forward(self, src: Tensor, tgt_in: Tensor) -> Tensor:
        memory, src_pad = self.encode(src)
        return self.decode_step(tgt_in, memory, src_pad)
