"""Extended vocabulary, prompt construction and a small decoder-only transformer."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Sequence

import torch
import torch.nn as nn
import torch.nn.functional as F

from .specialized_embedding import RMSNorm, dropout

BOS, QUERY, UNK, PAD = "<bos>", "<query>", "<unk>", "<pad>"

_TEMPLATE_HEAD = ("Suppose that you are an excellent linguist studying a new three-word language "
                  "for knowledge graph. Given the following dictionary:")
_TEMPLATE_COLUMNS = "Input Type Description"
_TEMPLATE_TAIL = "Please complete the last word (?) of the sentence:"

_WORD_RE = re.compile(r"\w+|[^\w\s]")


class PromptTooLongError(ValueError):
    pass


class NumericalError(FloatingPointError):
    pass


def words(text: str) -> list[str]:
    return _WORD_RE.findall(text.lower())


def scaffold_tokens() -> list[str]:
    out = []
    for chunk in (_TEMPLATE_HEAD, _TEMPLATE_COLUMNS, "Head entity", "Relation", _TEMPLATE_TAIL):
        for w in words(chunk):
            if w not in out:
                out.append(w)
    return out


def default_base_tokens(kg=None) -> list[str]:
    """Control tokens, the prompt scaffold and (optionally) every description word of ``kg``."""
    base = [PAD, BOS, QUERY, UNK] + scaffold_tokens()
    if kg is not None:
        seen = set(base)
        extra = sorted({w for text in kg.entity_texts + kg.relation_texts for w in words(text)} - seen)
        base += extra
    return base


@dataclass(frozen=True)
class Vocabulary:
    base_tokens: tuple[str, ...]
    n_entities: int
    n_relations: int

    def __post_init__(self):
        object.__setattr__(self, "_index", {t: i for i, t in enumerate(self.base_tokens)})

    @property
    def n_base(self) -> int:
        return len(self.base_tokens)

    def __len__(self) -> int:
        return self.n_base + self.n_entities + self.n_relations

    def base_id(self, token: str) -> int:
        return self._index.get(token, self._index[UNK])

    def entity_token(self, entity: int) -> int:
        if not 0 <= entity < self.n_entities:
            raise IndexError(f"entity id {entity} out of range")
        return self.n_base + entity

    def relation_token(self, relation: int) -> int:
        if not 0 <= relation < self.n_relations:
            raise IndexError(f"relation id {relation} out of range")
        return self.n_base + self.n_entities + relation

    def is_special(self, token_id: int) -> bool:
        return token_id >= self.n_base

    def describe(self, token_id: int) -> tuple[str, int]:
        """``("base" | "entity" | "relation", index)`` for a token id."""
        if not 0 <= token_id < len(self):
            raise IndexError(f"token id {token_id} not in vocabulary of size {len(self)}")
        if token_id < self.n_base:
            return "base", token_id
        if token_id < self.n_base + self.n_entities:
            return "entity", token_id - self.n_base
        return "relation", token_id - self.n_base - self.n_entities


def extend_vocabulary(kg, base: Sequence[str]) -> Vocabulary:
    if not base:
        raise ValueError("base token list is empty")
    if len(set(base)) != len(base):
        dupes = sorted({t for t in base if list(base).count(t) > 1})
        raise ValueError(f"duplicate base tokens: {dupes}")
    for required in (BOS, QUERY):
        if required not in base:
            raise ValueError(f"base tokens must contain {required}")
    if UNK not in base:
        base = list(base) + [UNK]
    return Vocabulary(tuple(base), kg.n_entities, kg.n_relations)


def build_prompt(h: int, r: int, mode: str, vocab: Vocabulary, kg=None,
                 max_seq_len: int | None = None) -> list[int]:
    """Token ids for the query ``(h, r, ?)``.

    ``minimal`` is ``[BOS, h, r, QUERY]``; ``templated`` renders the
    dictionary-style instruction with the head and relation descriptions
    spelled out in base tokens.
    """
    th, tr = vocab.entity_token(h), vocab.relation_token(r)
    if mode == "minimal":
        seq = [vocab.base_id(BOS), th, tr, vocab.base_id(QUERY)]
    elif mode == "templated":
        if kg is None:
            raise ValueError("templated prompts need the graph for descriptions")
        w = lambda text: [vocab.base_id(x) for x in words(text)]  # noqa: E731
        seq = [vocab.base_id(BOS)] + w(_TEMPLATE_HEAD) + w(_TEMPLATE_COLUMNS)
        seq += [th] + w("Head entity") + w(kg.entity_texts[h])
        seq += [tr] + w("Relation") + w(kg.relation_texts[r])
        seq += w(_TEMPLATE_TAIL) + [th, tr, vocab.base_id("?"), vocab.base_id(QUERY)]
    else:
        raise ValueError(f"unknown prompt mode {mode!r}")
    if max_seq_len is not None and len(seq) > max_seq_len:
        raise PromptTooLongError(f"prompt of length {len(seq)} exceeds max_seq_len={max_seq_len}")
    return seq


# --- transformer -------------------------------------------------------------------


@dataclass(frozen=True)
class TransformerConfig:
    d: int = 128
    layers: int = 2
    heads: int = 4
    ffn_mult: float = 2.0
    max_seq_len: int = 256
    rope_base: float = 10000.0
    attention_lora: bool = False
    lora_rank: int = 8
    lora_alpha: float = 16.0
    lora_dropout: float = 0.05

    def __post_init__(self):
        if self.d % self.heads:
            raise ValueError(f"d={self.d} is not divisible by heads={self.heads}")
        if (self.d // self.heads) % 2:
            raise ValueError("rotary positions need an even head dimension")


def rotary_tables(seq_len: int, head_dim: int, base: float, dtype) -> tuple[torch.Tensor, torch.Tensor]:
    inv_freq = 1.0 / (base ** (torch.arange(0, head_dim, 2, dtype=torch.float64) / head_dim))
    angles = torch.outer(torch.arange(seq_len, dtype=torch.float64), inv_freq)
    angles = torch.cat([angles, angles], dim=-1)
    return angles.cos().to(dtype), angles.sin().to(dtype)


def rotate_half(x):
    x1, x2 = x.chunk(2, dim=-1)
    return torch.cat([-x2, x1], dim=-1)


def apply_rotary(x, cos, sin):
    return x * cos + rotate_half(x) * sin


class LoRALinear(nn.Module):
    """Frozen bias-free linear plus a trainable low-rank update scaled by alpha/rank."""

    def __init__(self, base: nn.Linear, rank: int, alpha: float, dropout_rate: float):
        super().__init__()
        self.base = base
        self.base.weight.requires_grad_(False)
        self.rank = rank
        self.scaling = alpha / rank
        self.dropout_rate = dropout_rate
        self.lora_a = nn.Parameter(torch.empty(rank, base.in_features))
        nn.init.kaiming_uniform_(self.lora_a, a=math.sqrt(5))
        self.lora_b = nn.Parameter(torch.zeros(base.out_features, rank))

    def forward(self, x, generator=None):
        delta = dropout(x, self.dropout_rate, self.training, generator) @ self.lora_a.T @ self.lora_b.T
        return self.base(x) + self.scaling * delta


class Attention(nn.Module):
    def __init__(self, cfg: TransformerConfig):
        super().__init__()
        self.heads = cfg.heads
        self.head_dim = cfg.d // cfg.heads
        self.wq = nn.Linear(cfg.d, cfg.d, bias=False)
        self.wk = nn.Linear(cfg.d, cfg.d, bias=False)
        self.wv = nn.Linear(cfg.d, cfg.d, bias=False)
        self.wo = nn.Linear(cfg.d, cfg.d, bias=False)
        if cfg.attention_lora:
            self.wq = LoRALinear(self.wq, cfg.lora_rank, cfg.lora_alpha, cfg.lora_dropout)
            self.wv = LoRALinear(self.wv, cfg.lora_rank, cfg.lora_alpha, cfg.lora_dropout)

    def _proj(self, layer, x, generator):
        return layer(x, generator) if isinstance(layer, LoRALinear) else layer(x)

    def forward(self, x, cos, sin, generator=None, return_attn=False):
        b, n, _ = x.shape
        split = lambda t: t.view(b, n, self.heads, self.head_dim).transpose(1, 2)  # noqa: E731
        q = split(self._proj(self.wq, x, generator))
        k = split(self.wk(x))
        v = split(self._proj(self.wv, x, generator))
        q, k = apply_rotary(q, cos, sin), apply_rotary(k, cos, sin)
        scores = q @ k.transpose(-1, -2) / math.sqrt(self.head_dim)
        causal = torch.ones(n, n, dtype=torch.bool).tril()
        scores = scores.masked_fill(~causal, float("-inf"))
        attn = torch.softmax(scores, dim=-1)
        out = (attn @ v).transpose(1, 2).reshape(b, n, -1)
        return self.wo(out), (attn if return_attn else None)


class FeedForward(nn.Module):
    def __init__(self, cfg: TransformerConfig):
        super().__init__()
        hidden = int(cfg.ffn_mult * cfg.d)
        self.w_gate = nn.Linear(cfg.d, hidden, bias=False)
        self.w_up = nn.Linear(cfg.d, hidden, bias=False)
        self.w_down = nn.Linear(hidden, cfg.d, bias=False)

    def forward(self, x):
        return self.w_down(F.silu(self.w_gate(x)) * self.w_up(x))


class Block(nn.Module):
    def __init__(self, cfg: TransformerConfig):
        super().__init__()
        self.attn_norm = RMSNorm(cfg.d)
        self.attn = Attention(cfg)
        self.ffn_norm = RMSNorm(cfg.d)
        self.ffn = FeedForward(cfg)

    def forward(self, x, cos, sin, generator=None, return_attn=False):
        a, attn = self.attn(self.attn_norm(x), cos, sin, generator, return_attn)
        x = x + a
        return x + self.ffn(self.ffn_norm(x)), attn


class Transformer(nn.Module):
    """Pre-norm causal decoder; returns the final-normed hidden state at each sequence's last position."""

    def __init__(self, cfg: TransformerConfig):
        super().__init__()
        self.cfg = cfg
        self.blocks = nn.ModuleList(Block(cfg) for _ in range(cfg.layers))
        self.norm = RMSNorm(cfg.d)
        if cfg.attention_lora:
            for name, p in self.named_parameters():
                if "lora_" not in name:
                    p.requires_grad_(False)

    def forward(self, x: torch.Tensor, lengths: torch.Tensor | None = None, generator=None,
                return_attn: bool = False, return_all: bool = False):
        """``x`` is (batch, seq, d), right-padded; ``lengths`` marks the real positions."""
        if x.dim() == 2:
            x = x.unsqueeze(0)
        b, n, _ = x.shape
        if n < 1:
            raise ValueError("sequence must contain at least one position")
        if n > self.cfg.max_seq_len:
            raise PromptTooLongError(f"sequence length {n} exceeds max_seq_len={self.cfg.max_seq_len}")
        cos, sin = rotary_tables(n, self.cfg.d // self.cfg.heads, self.cfg.rope_base, x.dtype)
        attns = []
        for i, block in enumerate(self.blocks):
            x, attn = block(x, cos, sin, generator, return_attn)
            if not torch.isfinite(x).all():
                raise NumericalError(f"non-finite activation after layer {i}")
            attns.append(attn)
        hidden = self.norm(x)
        if lengths is None:
            last = hidden[:, -1]
        else:
            last = hidden[torch.arange(b), torch.as_tensor(lengths) - 1]
        if return_all or return_attn:
            return last, {"hidden": hidden, "attn": attns}
        return last
