"""Dual-stream token embedding for entity and relation tokens.

Raw textual and structural feature rows are projected into the backbone
space (dropout -> bias-free linear -> SiLU -> RMSNorm) and mixed by a
two-way softmax gate whose logits are scaled by a per-relation temperature.
"""

from __future__ import annotations

import math

import torch
import torch.nn as nn
import torch.nn.functional as F

RMS_EPS = 1e-6
ZERO_RMS = 1e-12


def rms_norm(x: torch.Tensor, gain: torch.Tensor, eps: float = RMS_EPS) -> torch.Tensor:
    """Llama-style RMSNorm over the last dim; rows with RMS below 1e-12 pass through unscaled."""
    ms = x.pow(2).mean(-1, keepdim=True)
    normed = x * torch.rsqrt(ms + eps) * gain
    return torch.where(ms.sqrt() < ZERO_RMS, x, normed)


def dropout(x: torch.Tensor, p: float, active: bool, generator: torch.Generator | None) -> torch.Tensor:
    """Inverted dropout drawing its mask from ``generator``."""
    if not active or p == 0.0:
        return x
    keep = torch.rand(x.shape, generator=generator, dtype=x.dtype, device=x.device) >= p
    return x * keep / (1.0 - p)


class RMSNorm(nn.Module):
    def __init__(self, dim: int, eps: float = RMS_EPS):
        super().__init__()
        self.eps = eps
        self.weight = nn.Parameter(torch.ones(dim))

    def forward(self, x):
        return rms_norm(x, self.weight, self.eps)


class Projector(nn.Module):
    """``RMSNorm(SiLU(W @ Dropout(raw)))`` with ``W`` of shape (d, d_m)."""

    def __init__(self, d_in: int, d_out: int, dropout_rate: float = 0.0):
        super().__init__()
        if not 0.0 <= dropout_rate < 1.0:
            raise ValueError("dropout_rate must be in [0, 1)")
        self.d_in, self.d_out = d_in, d_out
        self.dropout_rate = dropout_rate
        self.weight = nn.Parameter(torch.empty(d_out, d_in))
        nn.init.normal_(self.weight, std=1.0 / math.sqrt(d_in))
        self.norm = RMSNorm(d_out)

    def forward(self, raw: torch.Tensor, generator: torch.Generator | None = None) -> torch.Tensor:
        if raw.shape[-1] != self.d_in:
            raise ValueError(f"projector expects last dim {self.d_in}, got {raw.shape[-1]}")
        x = dropout(raw, self.dropout_rate, self.training, generator)
        return self.norm(F.silu(x @ self.weight.T))


class RelationGate(nn.Module):
    """Relation-guided two-way softmax gate over the textual and structural streams.

    ``z_m = (U_m(e_m) / sqrt(d) + noise_m) / sigmoid(eps_r)``; in training the
    noise is Gaussian with variance ``softplus(U'_m(e_m)) / sqrt(d)``.
    """

    def __init__(self, d: int, n_relations: int, noise: bool = True, rel_temp: bool = True):
        super().__init__()
        self.d = d
        self.noise = noise
        self.rel_temp = rel_temp
        self.logit_t = nn.Linear(d, 1, bias=False)
        self.logit_s = nn.Linear(d, 1, bias=False)
        self.noise_t = nn.Linear(d, 1, bias=False)
        self.noise_s = nn.Linear(d, 1, bias=False)
        self.temperature = nn.Parameter(torch.zeros(n_relations))

    def logits(self, e_t, e_s, relation, generator=None):
        scale = math.sqrt(self.d)
        z_t = self.logit_t(e_t).squeeze(-1) / scale
        z_s = self.logit_s(e_s).squeeze(-1) / scale
        if self.training and self.noise:
            var_t = F.softplus(self.noise_t(e_t).squeeze(-1)) / scale
            var_s = F.softplus(self.noise_s(e_s).squeeze(-1)) / scale
            z_t = z_t + var_t.sqrt() * torch.randn(z_t.shape, generator=generator, dtype=z_t.dtype)
            z_s = z_s + var_s.sqrt() * torch.randn(z_s.shape, generator=generator, dtype=z_s.dtype)
        if self.rel_temp:
            temp = torch.sigmoid(self.temperature[relation])
            z_t, z_s = z_t / temp, z_s / temp
        return z_t, z_s

    def forward(self, e_t, e_s, relation, generator=None):
        z_t, z_s = self.logits(e_t, e_s, relation, generator)
        g = torch.softmax(torch.stack([z_t, z_s], dim=-1), dim=-1)
        return g[..., 0], g[..., 1]


def fuse(e_t: torch.Tensor, e_s: torch.Tensor, g_t: torch.Tensor, g_s: torch.Tensor) -> torch.Tensor:
    return g_t.unsqueeze(-1) * e_t + g_s.unsqueeze(-1) * e_s


class SpecializedEmbedding(nn.Module):
    """Embeds entity/relation tokens from frozen raw feature tables.

    ``use_text`` / ``use_struct`` switch off an input stream; the gate is then
    pinned to the surviving stream and the unused projector is not built.
    """

    def __init__(self, bank, d: int, text_dropout: float = 0.2, struct_dropout: float = 0.4,
                 use_text: bool = True, use_struct: bool = True, noise: bool = True,
                 rel_temp: bool = True):
        super().__init__()
        if not (use_text or use_struct):
            raise ValueError("at least one input stream must be enabled")
        self.d = d
        self.use_text, self.use_struct = use_text, use_struct
        for name in ("entity_text", "entity_struct", "relation_text", "relation_struct"):
            self.register_buffer(name, torch.from_numpy(getattr(bank, name).copy()))
        self.n_entities = self.entity_text.shape[0]
        self.n_relations = self.relation_text.shape[0]
        self.proj_t = Projector(bank.d_text, d, text_dropout) if use_text else None
        self.proj_s = Projector(bank.d_struct, d, struct_dropout) if use_struct else None
        self.gate = RelationGate(d, self.n_relations, noise=noise, rel_temp=rel_temp)

    def project_rows(self, raw_t, raw_s, generator=None):
        e_t = self.proj_t(raw_t, generator) if self.use_text else None
        e_s = self.proj_s(raw_s, generator) if self.use_struct else None
        return e_t, e_s

    def gate_and_fuse(self, e_t, e_s, gate_relation, generator=None):
        if e_t is None:
            ones = torch.ones(e_s.shape[:-1], dtype=e_s.dtype)
            return e_s, (torch.zeros_like(ones), ones)
        if e_s is None:
            ones = torch.ones(e_t.shape[:-1], dtype=e_t.dtype)
            return e_t, (ones, torch.zeros_like(ones))
        g_t, g_s = self.gate(e_t, e_s, gate_relation, generator)
        return fuse(e_t, e_s, g_t, g_s), (g_t, g_s)

    def forward(self, kind: torch.Tensor, index: torch.Tensor, gate_relation: torch.Tensor,
                generator: torch.Generator | None = None):
        """Embed a flat batch of special tokens.

        ``kind`` is 0 for entities and 1 for relations; ``index`` is the
        entity/relation id; ``gate_relation`` selects the temperature.
        Returns ``(vectors, (g_t, g_s))``.
        """
        is_rel = kind.bool()
        ent_idx = torch.where(is_rel, torch.zeros_like(index), index)
        rel_idx = torch.where(is_rel, index, torch.zeros_like(index))
        raw_t = torch.where(is_rel.unsqueeze(-1), self.relation_text[rel_idx], self.entity_text[ent_idx])
        raw_s = torch.where(is_rel.unsqueeze(-1), self.relation_struct[rel_idx], self.entity_struct[ent_idx])
        e_t, e_s = self.project_rows(raw_t, raw_s, generator)
        return self.gate_and_fuse(e_t, e_s, gate_relation, generator)

    def embed_entity(self, entity: int, query_relation: int, generator=None):
        return self._single(0, entity, query_relation, generator)

    def embed_relation(self, relation: int, generator=None):
        return self._single(1, relation, relation, generator)

    def _single(self, kind, index, gate_relation, generator):
        limit = self.n_relations if kind else self.n_entities
        if not 0 <= index < limit:
            raise IndexError(f"{'relation' if kind else 'entity'} {index} has no feature rows")
        vec, (g_t, g_s) = self(torch.tensor([kind]), torch.tensor([index]), torch.tensor([gate_relation]),
                               generator)
        return vec[0], (g_t[0], g_s[0])
