"""Torch modules: item embeddings, sequence encoder, denoiser, full model.

The encoder is a single-layer, single-head pre-norm self-attention block
(with a mean-pooling fallback mode); the denoiser is a two-layer MLP over
the concatenation of the noisy state and a sinusoidal step embedding.
"""

from __future__ import annotations

import math

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .schedule import BridgeSchedule

__all__ = ["SequenceEncoder", "Denoiser", "BBDRecModel", "embed_item",
           "time_embedding"]


def time_embedding(t, dim: int, device=None, dtype=None) -> torch.Tensor:
    """Sinusoidal step embedding; injective over realistic step counts."""
    t = torch.as_tensor(t, device=device, dtype=dtype or torch.get_default_dtype())
    half = dim // 2
    freqs = torch.exp(
        -math.log(10000.0) * torch.arange(half, device=t.device, dtype=t.dtype) / half
    )
    angles = t[..., None] * freqs
    emb = torch.cat([torch.sin(angles), torch.cos(angles)], dim=-1)
    if dim % 2:
        emb = F.pad(emb, (0, 1))
    return emb


def embed_item(table: torch.Tensor, item_id: int) -> torch.Tensor:
    """Look up one item embedding; id 0 is reserved for padding."""
    n_items = table.shape[0] - 1
    if not 1 <= item_id <= n_items:
        raise ValueError(f"item id must be in [1, {n_items}], got {item_id}")
    return table[item_id]


class SequenceEncoder(nn.Module):
    """Single-head causal self-attention encoder over left-padded histories.

    Positions are counted from the start of the non-padding segment, so a
    history's representation does not depend on how much padding precedes
    it, and causal masking makes each position independent of later items.
    The history representation is read at the last (non-padding) position.
    """

    def __init__(self, d: int, max_len: int, dropout: float = 0.1):
        super().__init__()
        self.d = d
        self.max_len = max_len
        self.pos_emb = nn.Embedding(max_len, d)
        self.q_proj = nn.Linear(d, d)
        self.k_proj = nn.Linear(d, d)
        self.v_proj = nn.Linear(d, d)
        self.out_proj = nn.Linear(d, d)
        self.attn_norm = nn.LayerNorm(d)
        self.ffn_norm = nn.LayerNorm(d)
        self.ffn1 = nn.Linear(d, d)
        self.ffn2 = nn.Linear(d, d)
        self.dropout = nn.Dropout(dropout)

    def forward(self, item_emb: nn.Embedding, history: torch.Tensor,
                return_all: bool = False) -> torch.Tensor:
        if history.dim() == 1:
            return self.forward(item_emb, history[None], return_all)[0]
        pad_mask = history.eq(0)  # (B, L)
        if bool(pad_mask.all(dim=1).any()):
            raise ValueError("history must contain at least one non-padding id")
        # Position ids relative to the first non-padding entry.
        pos = torch.cumsum((~pad_mask).long(), dim=1) - 1
        pos = pos.clamp(min=0)
        h = item_emb(history) + self.pos_emb(pos)
        h = h.masked_fill(pad_mask[..., None], 0.0)

        x = self.attn_norm(h)
        q, k, v = self.q_proj(x), self.k_proj(x), self.v_proj(x)
        scores = q @ k.transpose(-2, -1) / math.sqrt(self.d)  # (B, L, L)
        L = history.shape[1]
        causal = torch.triu(torch.ones(L, L, dtype=torch.bool, device=history.device), 1)
        scores = scores.masked_fill(causal, -1e9)
        scores = scores.masked_fill(pad_mask[:, None, :], -1e9)
        attn = self.dropout(torch.softmax(scores, dim=-1))
        h = h + self.out_proj(attn @ v)

        x = self.ffn_norm(h)
        h = h + self.dropout(self.ffn2(F.gelu(self.ffn1(x))))
        if return_all:
            return h
        return h[:, -1, :]  # left padding puts the last item at index L-1

    @staticmethod
    def mean_pool(item_emb: nn.Embedding, history: torch.Tensor) -> torch.Tensor:
        """Average of non-padding item embeddings (the encoder-less ablation)."""
        if history.dim() == 1:
            return SequenceEncoder.mean_pool(item_emb, history[None])[0]
        mask = history.ne(0)
        counts = mask.sum(dim=1, keepdim=True)
        if bool((counts == 0).any()):
            raise ValueError("history must contain at least one non-padding id")
        emb = item_emb(history) * mask[..., None]
        return emb.sum(dim=1) / counts


class Denoiser(nn.Module):
    """Two-layer MLP predicting x0 from (x_t, step [, history rep]).

    The conditional variant appends the history representation to the
    input; it exists only for the conditioned-denoiser ablation.
    """

    def __init__(self, d: int, hidden: int | None = None,
                 time_dim: int | None = None, conditional: bool = False):
        super().__init__()
        self.d = d
        self.time_dim = time_dim or d
        self.conditional = conditional
        hidden = hidden or 2 * d
        in_dim = d + self.time_dim + (d if conditional else 0)
        self.fc1 = nn.Linear(in_dim, hidden)
        self.fc2 = nn.Linear(hidden, d)

    def forward(self, x_t: torch.Tensor, t, cond: torch.Tensor | None = None) -> torch.Tensor:
        if self.conditional:
            if cond is None:
                raise ValueError("conditional denoiser requires the history representation")
            parts = [x_t, self._temb(x_t, t), cond]
        else:
            parts = [x_t, self._temb(x_t, t)]
        return self.fc2(F.silu(self.fc1(torch.cat(parts, dim=-1))))

    def _temb(self, x_t: torch.Tensor, t) -> torch.Tensor:
        emb = time_embedding(t, self.time_dim, device=x_t.device, dtype=x_t.dtype)
        if emb.dim() < x_t.dim():
            emb = emb.expand(*x_t.shape[:-1], self.time_dim)
        return emb


class BBDRecModel(nn.Module):
    """Item table + sequence encoder + denoiser with the training loss."""

    def __init__(self, n_items: int, d: int = 64, max_len: int = 10,
                 encoder_mode: str = "transformer", dropout: float = 0.1,
                 conditional_denoiser: bool = False,
                 denoiser_hidden: int | None = None,
                 time_dim: int | None = None):
        super().__init__()
        if encoder_mode not in ("transformer", "mean_pool"):
            raise ValueError(f"unknown encoder mode: {encoder_mode!r}")
        self.n_items = n_items
        self.d = d
        self.max_len = max_len
        self.encoder_mode = encoder_mode
        self.item_emb = nn.Embedding(n_items + 1, d, padding_idx=0)
        nn.init.normal_(self.item_emb.weight, std=0.1)
        with torch.no_grad():
            self.item_emb.weight[0].zero_()
        self.encoder = SequenceEncoder(d, max_len, dropout)
        self.denoiser = Denoiser(d, hidden=denoiser_hidden, time_dim=time_dim,
                                 conditional=conditional_denoiser)

    def encode(self, history: torch.Tensor) -> torch.Tensor:
        if self.encoder_mode == "mean_pool":
            return SequenceEncoder.mean_pool(self.item_emb, history)
        return self.encoder(self.item_emb, history)

    def embed(self, item_ids: torch.Tensor) -> torch.Tensor:
        if bool(item_ids.eq(0).any()) or bool(item_ids.gt(self.n_items).any()):
            raise ValueError("item ids must be in [1, n_items]")
        return self.item_emb(item_ids)

    def item_logits(self, reps: torch.Tensor) -> torch.Tensor:
        """Inner products against every non-padding item embedding."""
        return reps @ self.item_emb.weight[1:].T

    def training_loss(self, schedule: BridgeSchedule, history: torch.Tensor,
                      targets: torch.Tensor, t_draws: torch.Tensor,
                      eps_draws: torch.Tensor, lambda1: float, lambda2: float,
                      stop_grad_target: bool = False):
        """Combined objective with caller-supplied (t, eps) draws.

        Returns (loss, l_diff, l_rec) as 0-dim tensors.  Gradients flow
        through x_t into both the encoder output and the target embedding
        unless ``stop_grad_target`` detaches the target.
        """
        e_s = self.encode(history)
        e_y = self.embed(targets)
        x0 = e_y.detach() if stop_grad_target else e_y

        dtype, device = e_s.dtype, e_s.device
        beta = torch.tensor(schedule.beta, dtype=dtype, device=device)[t_draws]
        std = torch.tensor(np.sqrt(schedule.delta), dtype=dtype, device=device)[t_draws]
        x_t = (1.0 - beta[:, None]) * x0 + beta[:, None] * e_s + std[:, None] * eps_draws

        cond = e_s if self.denoiser.conditional else None
        pred = self.denoiser(x_t, t_draws.to(dtype), cond)
        l_diff = ((x0 - pred) ** 2).sum(dim=-1).mean()
        l_rec = F.cross_entropy(self.item_logits(e_s), targets - 1)
        return lambda1 * l_diff + lambda2 * l_rec, l_diff, l_rec

    @torch.no_grad()
    def generate_batch(self, schedule: BridgeSchedule, xT: torch.Tensor,
                       generator: torch.Generator | None = None,
                       deterministic: bool = False) -> torch.Tensor:
        """Batched reverse diffusion from a batch of history representations."""
        from .schedule import posterior_coefficients

        if not deterministic and generator is None:
            raise ValueError("stochastic generation requires a torch.Generator")
        x = xT
        for t in range(schedule.T, 0, -1):
            cx, c0, cT, var = posterior_coefficients(schedule, t)
            cond = xT if self.denoiser.conditional else None
            pred = self.denoiser(x, torch.full(x.shape[:1], float(t), dtype=x.dtype,
                                               device=x.device), cond)
            x = cx * x + c0 * pred + cT * xT
            if not deterministic and var > 0.0:
                eps = torch.randn(x.shape, generator=generator, dtype=x.dtype,
                                  device=x.device)
                x = x + math.sqrt(var) * eps
        return x
