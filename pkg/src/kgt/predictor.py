"""Dual-view decoupled predictor: head MLPs, LoRA full-entity scorers, logit scaling, loss."""

from __future__ import annotations

import math
from typing import NamedTuple

import torch
import torch.nn as nn
import torch.nn.functional as F

from .specialized_embedding import RMSNorm, dropout


class HeadMlp(nn.Module):
    """``RMSNorm(SiLU(Dropout(h) @ W'))`` with ``W'`` of shape (d, d_m)."""

    def __init__(self, d: int, d_m: int, dropout_rate: float = 0.0):
        super().__init__()
        if not 0.0 <= dropout_rate < 1.0:
            raise ValueError("dropout_rate must be in [0, 1)")
        self.d, self.d_m = d, d_m
        self.dropout_rate = dropout_rate
        self.weight = nn.Parameter(torch.empty(d, d_m))
        nn.init.normal_(self.weight, std=1.0 / math.sqrt(d))
        self.norm = RMSNorm(d_m)

    def forward(self, h: torch.Tensor, generator: torch.Generator | None = None) -> torch.Tensor:
        if h.shape[-1] != self.d:
            raise ValueError(f"head expects last dim {self.d}, got {h.shape[-1]}")
        x = dropout(h, self.dropout_rate, self.training, generator)
        return self.norm(F.silu(x @ self.weight))


class LoraScorer(nn.Module):
    """Scores every entity against ``W_base + A @ B``.

    ``W_base`` (|E|, d_m) is a frozen buffer holding pre-trained entity
    features; ``A`` starts Gaussian with std 1/sqrt(rank) and ``B`` at zero, so
    the initial scores are exactly the base scores.
    """

    def __init__(self, base: torch.Tensor, rank: int = 8, generator: torch.Generator | None = None):
        super().__init__()
        n, d_m = base.shape
        self.rank = rank
        self.register_buffer("base", base.detach().clone())
        self.lora_a = nn.Parameter(torch.randn(n, rank, generator=generator, dtype=base.dtype) / math.sqrt(rank))
        self.lora_b = nn.Parameter(torch.zeros(rank, d_m, dtype=base.dtype))

    def forward(self, h_proj: torch.Tensor) -> torch.Tensor:
        return h_proj @ self.base.T + (h_proj @ self.lora_b.T) @ self.lora_a.T

    def merged_weight(self) -> torch.Tensor:
        return self.base + self.lora_a @ self.lora_b


class LogitScalers(nn.Module):
    """``lambda_t`` and ``lambda_s``: learnable (init 1.0) or fixed at ``(gamma, 1)``."""

    def __init__(self, mode: str = "learnable", gamma: float = 1.0):
        super().__init__()
        if mode not in ("learnable", "fixed"):
            raise ValueError(f"unknown scaler mode {mode!r}")
        self.mode = mode
        if mode == "learnable":
            self.lambda_t = nn.Parameter(torch.tensor(1.0))
            self.lambda_s = nn.Parameter(torch.tensor(1.0))
        else:
            self.register_buffer("lambda_t", torch.tensor(float(gamma)))
            self.register_buffer("lambda_s", torch.tensor(1.0))

    @property
    def gamma(self) -> float:
        return float(self.lambda_t / self.lambda_s)


def fuse_logits(p_t, p_s, lambda_t, lambda_s) -> torch.Tensor:
    """Half the scaled sum of the two views; a missing view (``None``) leaves the other scaled alone."""
    if p_t is None:
        return lambda_s * p_s
    if p_s is None:
        return lambda_t * p_t
    if p_t.shape != p_s.shape:
        raise ValueError(f"view logits differ in shape: {tuple(p_t.shape)} vs {tuple(p_s.shape)}")
    return 0.5 * (lambda_t * p_t + lambda_s * p_s)


def ce_loss(p: torch.Tensor, target) -> torch.Tensor:
    """``-p[target] + logsumexp(p)`` with max subtraction; batched inputs return the mean."""
    target = torch.as_tensor(target)
    if p.dim() == 1:
        m = p.max().detach()
        return m + torch.log(torch.exp(p - m).sum()) - p[target]
    m = p.max(dim=-1, keepdim=True).values.detach()
    lse = m.squeeze(-1) + torch.log(torch.exp(p - m).sum(-1))
    return (lse - p.gather(-1, target.view(-1, 1)).squeeze(-1)).mean()


class PredictionLogits(NamedTuple):
    p_t: torch.Tensor | None
    p_s: torch.Tensor | None
    p_fused: torch.Tensor
