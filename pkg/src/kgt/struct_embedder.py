"""Structural feature pre-training: TuckER (default) and TransE."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .feature_bank import load_features, save_features
from .kg_store import KnowledgeGraph

log = logging.getLogger(__name__)


class NonFiniteLossError(FloatingPointError):
    pass


@dataclass
class KgeConfig:
    kind: str = "tucker"
    d_s: int = 256
    negatives_per_positive: int = 1
    epochs: int = 100
    batch_size: int = 128
    learning_rate: float = 5e-3
    seed: int = 0
    margin: float = 1.0
    label_smoothing: float = 0.0

    def __post_init__(self):
        if self.kind not in ("tucker", "transe"):
            raise ValueError(f"unknown KGE kind {self.kind!r}")
        if self.d_s <= 0:
            raise ValueError("d_s must be positive")
        if self.negatives_per_positive < 1:
            raise ValueError("negatives_per_positive must be >= 1")


class KgeModel(nn.Module):
    def __init__(self, kind: str, n_entities: int, n_relations: int, d_s: int,
                 generator: torch.Generator | None = None, dtype=torch.float32):
        super().__init__()
        self.kind = kind
        std = 1.0 / math.sqrt(d_s)
        self.entity_emb = nn.Parameter(torch.randn(n_entities, d_s, generator=generator, dtype=dtype) * std)
        self.relation_emb = nn.Parameter(torch.randn(n_relations, d_s, generator=generator, dtype=dtype) * std)
        if kind == "tucker":
            core = torch.rand(d_s, d_s, d_s, generator=generator, dtype=dtype) * 2 - 1
            self.core_tensor = nn.Parameter(core)
        else:
            self.core_tensor = None

    @property
    def d_s(self) -> int:
        return self.entity_emb.shape[1]

    def _tucker_query(self, h, r):
        # (B, d) x core(d, d, d) x (B, d) -> (B, d) contracted over head and relation modes
        return torch.einsum("bi,ijk,bj->bk", self.entity_emb[h], self.core_tensor, self.relation_emb[r])

    def score(self, h, r, t) -> torch.Tensor:
        h, r, t = (torch.as_tensor(x) for x in (h, r, t))
        if self.kind == "tucker":
            return (self._tucker_query(h.reshape(-1), r.reshape(-1)) * self.entity_emb[t.reshape(-1)]).sum(-1)
        diff = self.entity_emb[h] + self.relation_emb[r] - self.entity_emb[t]
        return -diff.norm(dim=-1)

    def score_all_tails(self, h, r) -> torch.Tensor:
        h, r = torch.as_tensor(h), torch.as_tensor(r)
        if self.kind == "tucker":
            return self._tucker_query(h, r) @ self.entity_emb.T
        q = self.entity_emb[h] + self.relation_emb[r]
        return -torch.cdist(q, self.entity_emb)


def kge_score(model: KgeModel, h: int, r: int, t: int) -> float:
    with torch.no_grad():
        return float(model.score(torch.tensor([h]), torch.tensor([r]), torch.tensor([t]))[0])


def train_kge(kg: KnowledgeGraph, config: KgeConfig, return_history: bool = False):
    """Train on the (augmented) train split only.

    TuckER uses full-softmax cross-entropy over every tail per (head, relation);
    TransE uses a margin loss against uniformly corrupted heads or tails.
    """
    if not kg.augmented:
        raise ValueError("train_kge expects an inverse-augmented graph")
    gen = torch.Generator().manual_seed(config.seed)
    model = KgeModel(config.kind, kg.n_entities, kg.n_relations, config.d_s, generator=gen)
    history: list[float] = []
    if config.epochs > 0:
        opt = torch.optim.Adam(model.parameters(), lr=config.learning_rate)
        train = torch.tensor(kg.train)
        for epoch in range(config.epochs):
            perm = torch.randperm(len(train), generator=gen)
            total, count = 0.0, 0
            for start in range(0, len(train), config.batch_size):
                batch = train[perm[start:start + config.batch_size]]
                h, r, t = batch[:, 0], batch[:, 1], batch[:, 2]
                if config.kind == "tucker":
                    loss = F.cross_entropy(model.score_all_tails(h, r), t,
                                           label_smoothing=config.label_smoothing)
                else:
                    loss = _transe_loss(model, h, r, t, config, gen, kg.n_entities)
                if not torch.isfinite(loss):
                    raise NonFiniteLossError(
                        f"non-finite KGE loss at epoch {epoch}, batch starting {start}: {loss.item()}")
                opt.zero_grad()
                loss.backward()
                opt.step()
                total += loss.item() * len(batch)
                count += len(batch)
            history.append(total / count)
            log.debug("kge epoch %d loss %.5f", epoch, history[-1])
    return (model, history) if return_history else model


def _transe_loss(model, h, r, t, config, gen, n_entities):
    k = config.negatives_per_positive
    h, r, t = h.repeat(k), r.repeat(k), t.repeat(k)
    corrupt = torch.randint(0, n_entities, h.shape, generator=gen)
    side = torch.rand(h.shape, generator=gen) < 0.5
    nh = torch.where(side, corrupt, h)
    nt = torch.where(side, t, corrupt)
    pos = model.score(h, r, t)
    neg = model.score(nh, r, nt)
    return F.relu(config.margin - pos + neg).mean()


@torch.no_grad()
def corruption_auc(model: KgeModel, kg: KnowledgeGraph, split: str = "train") -> float:
    """Ranking AUC of ``split`` triples against every tail corruption that is not a train triple.

    Ties count one half. Head corruptions are covered by the inverse-relation
    queries of the augmented graph.
    """
    triples = np.asarray(kg.split(split))
    known: dict[tuple[int, int], set[int]] = {}
    for h, r, t in np.asarray(kg.train).tolist():
        known.setdefault((h, r), set()).add(t)
    scores = model.score_all_tails(torch.tensor(triples[:, 0]), torch.tensor(triples[:, 1])).double().numpy()
    wins = total = 0.0
    for i, (h, r, t) in enumerate(triples.tolist()):
        neg = np.ones(kg.n_entities, dtype=bool)
        neg[list(known.get((h, r), ()))] = False
        neg[t] = False
        s = scores[i]
        wins += float((s[t] > s[neg]).sum()) + 0.5 * float((s[t] == s[neg]).sum())
        total += float(neg.sum())
    return wins / total if total else float("nan")


def export_structural_features(model: KgeModel) -> tuple[np.ndarray, np.ndarray]:
    with torch.no_grad():
        return (model.entity_emb.detach().cpu().numpy().astype(np.float32).copy(),
                model.relation_emb.detach().cpu().numpy().astype(np.float32).copy())


def save_kge(model: KgeModel, directory, config: KgeConfig | None = None) -> None:
    directory = Path(directory)
    ent, rel = export_structural_features(model)
    save_features(ent, directory / "entity_struct.kgtf")
    save_features(rel, directory / "relation_struct.kgtf")
    meta = {"kind": model.kind, "n_entities": ent.shape[0], "n_relations": rel.shape[0], "d_s": model.d_s}
    if model.core_tensor is not None:
        d = model.d_s
        save_features(model.core_tensor.detach().reshape(d, d * d).numpy(), directory / "kge_core.kgtf")
    if config is not None:
        meta["config"] = asdict(config)
    (directory / "kge_meta.json").write_text(json.dumps(meta, indent=2))


def load_kge(directory) -> KgeModel:
    directory = Path(directory)
    meta = json.loads((directory / "kge_meta.json").read_text())
    model = KgeModel(meta["kind"], meta["n_entities"], meta["n_relations"], meta["d_s"])
    with torch.no_grad():
        model.entity_emb.copy_(torch.from_numpy(load_features(directory / "entity_struct.kgtf")))
        model.relation_emb.copy_(torch.from_numpy(load_features(directory / "relation_struct.kgtf")))
        if model.core_tensor is not None:
            d = meta["d_s"]
            model.core_tensor.copy_(torch.from_numpy(load_features(directory / "kge_core.kgtf")).reshape(d, d, d))
    return model
