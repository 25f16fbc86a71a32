"""The full KGT network: special-token embedding -> decoder -> dual-view predictor."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields, replace

import torch
import torch.nn as nn

from .backbone import Transformer, TransformerConfig, Vocabulary
from .feature_bank import FeatureBank
from .predictor import HeadMlp, LogitScalers, LoraScorer, PredictionLogits, fuse_logits
from .specialized_embedding import SpecializedEmbedding


@dataclass(frozen=True)
class ModelConfig:
    d: int = 128
    layers: int = 2
    heads: int = 4
    ffn_mult: float = 2.0
    max_seq_len: int = 256
    attention_lora: bool = False
    attn_lora_rank: int = 8
    attn_lora_alpha: float = 16.0
    attn_lora_dropout: float = 0.05
    text_dropout: float = 0.2
    struct_dropout: float = 0.4
    head_text_dropout: float = 0.0
    head_struct_dropout: float = 0.0
    score_rank: int = 8
    scaler_mode: str = "learnable"
    gamma: float = 1.0
    use_text_input: bool = True
    use_struct_input: bool = True
    use_text_pred: bool = True
    use_struct_pred: bool = True
    noise: bool = True
    rel_temp: bool = True

    def transformer(self) -> TransformerConfig:
        return TransformerConfig(
            d=self.d, layers=self.layers, heads=self.heads, ffn_mult=self.ffn_mult,
            max_seq_len=self.max_seq_len, attention_lora=self.attention_lora,
            lora_rank=self.attn_lora_rank, lora_alpha=self.attn_lora_alpha,
            lora_dropout=self.attn_lora_dropout)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in names})

    def updated(self, **changes) -> "ModelConfig":
        return replace(self, **changes)


class KgtModel(nn.Module):
    def __init__(self, config: ModelConfig, bank: FeatureBank, vocab: Vocabulary, seed: int = 0):
        super().__init__()
        if not (config.use_text_pred or config.use_struct_pred):
            raise ValueError("at least one predictor view must be enabled")
        if bank.n_entities != vocab.n_entities or bank.n_relations != vocab.n_relations:
            raise ValueError("feature bank rows do not match the vocabulary")
        self.config = config
        self.vocab = vocab
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(seed)
            gen = torch.Generator().manual_seed(seed)
            self.token_table = nn.Embedding(vocab.n_base, config.d)
            nn.init.normal_(self.token_table.weight, std=0.02)
            self.embed = SpecializedEmbedding(
                bank, config.d, config.text_dropout, config.struct_dropout,
                use_text=config.use_text_input, use_struct=config.use_struct_input,
                noise=config.noise, rel_temp=config.rel_temp)
            self.backbone = Transformer(config.transformer())
            if config.attention_lora:
                self.token_table.weight.requires_grad_(False)
            self.head_t = self.scorer_t = self.head_s = self.scorer_s = None
            if config.use_text_pred:
                self.head_t = HeadMlp(config.d, bank.d_text, config.head_text_dropout)
                self.scorer_t = LoraScorer(torch.from_numpy(bank.entity_text.copy()), config.score_rank, gen)
            if config.use_struct_pred:
                self.head_s = HeadMlp(config.d, bank.d_struct, config.head_struct_dropout)
                self.scorer_s = LoraScorer(torch.from_numpy(bank.entity_struct.copy()), config.score_rank, gen)
            self.scalers = LogitScalers(config.scaler_mode, config.gamma)

    @property
    def n_entities(self) -> int:
        return self.vocab.n_entities

    def trainable_parameters(self):
        return [p for p in self.parameters() if p.requires_grad]

    def embed_sequence(self, tokens: torch.Tensor, query_relation: torch.Tensor,
                       generator: torch.Generator | None = None):
        """Map (batch, seq) token ids to vectors.

        Base ids read the token table; entity and relation ids go through the
        specialized embedding, computed once per distinct (token, gate relation)
        pair in the batch. Returns ``(vectors, g_t, g_s)`` where the gate
        tensors are NaN at base positions.
        """
        tokens = torch.as_tensor(tokens)
        if tokens.dim() == 1:
            tokens = tokens.unsqueeze(0)
        query_relation = torch.as_tensor(query_relation).reshape(-1)
        if tokens.min() < 0 or tokens.max() >= len(self.vocab):
            raise IndexError("token id outside the vocabulary")
        n_base, n_ent = self.vocab.n_base, self.vocab.n_entities
        special = tokens >= n_base
        out = self.token_table(torch.where(special, torch.zeros_like(tokens), tokens))
        dtype = out.dtype
        g_t = torch.full(tokens.shape, float("nan"), dtype=dtype)
        g_s = torch.full(tokens.shape, float("nan"), dtype=dtype)
        if special.any():
            pos = special.nonzero(as_tuple=True)
            ids = tokens[pos] - n_base
            kind = (ids >= n_ent).long()
            index = torch.where(kind.bool(), ids - n_ent, ids)
            gate_rel = torch.where(kind.bool(), index, query_relation[pos[0]])
            key = torch.stack([kind, index, gate_rel], dim=1)
            uniq, inverse = torch.unique(key, dim=0, return_inverse=True)
            vec, (gt, gs) = self.embed(uniq[:, 0], uniq[:, 1], uniq[:, 2], generator)
            out = out.index_put(pos, vec[inverse].to(dtype))
            g_t = g_t.index_put(pos, gt[inverse].to(dtype))
            g_s = g_s.index_put(pos, gs[inverse].to(dtype))
        return out, g_t, g_s

    def predict(self, h_n: torch.Tensor, generator=None, lambdas=None) -> PredictionLogits:
        p_t = self.scorer_t(self.head_t(h_n, generator)) if self.head_t is not None else None
        p_s = self.scorer_s(self.head_s(h_n, generator)) if self.head_s is not None else None
        lam_t, lam_s = lambdas if lambdas is not None else (self.scalers.lambda_t, self.scalers.lambda_s)
        return PredictionLogits(p_t, p_s, fuse_logits(p_t, p_s, lam_t, lam_s))

    def forward(self, tokens, lengths=None, query_relation=None, generator=None, return_aux=False):
        vectors, g_t, g_s = self.embed_sequence(tokens, query_relation, generator)
        h_n = self.backbone(vectors, lengths, generator)
        logits = self.predict(h_n, generator)
        if return_aux:
            return logits, {"h_n": h_n, "g_t": g_t, "g_s": g_s}
        return logits
