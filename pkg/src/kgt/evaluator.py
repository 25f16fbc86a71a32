"""Filtered rank evaluation, per-view reports and logit-scaling sweeps."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import torch

from .kg_store import FilterIndex, KnowledgeGraph

HITS_AT = (1, 3, 10)
VIEWS = ("fused", "text", "struct")


def filtered_rank(logits, query, target: int, filter_index: FilterIndex | None) -> int:
    """1 + number of unfiltered competitors scoring at least as high as the target."""
    logits = np.asarray(logits)
    if not 0 <= target < logits.shape[-1]:
        raise IndexError(f"target {target} outside the logit range [0, {logits.shape[-1]})")
    score = logits[target]
    above = logits >= score
    above[target] = False
    if filter_index is not None:
        known = [e for e in filter_index[query] if e != target]
        above[known] = False
    return 1 + int(above.sum())


def filtered_ranks(logits: torch.Tensor, queries: np.ndarray, filter_index: FilterIndex | None) -> np.ndarray:
    """Vectorised ``filtered_rank`` for a (batch, |E|) logit block and (batch, 3) triples."""
    logits = torch.as_tensor(logits)
    b = logits.shape[0]
    targets = torch.tensor(np.asarray(queries[:, 2]))
    if (targets < 0).any() or (targets >= logits.shape[1]).any():
        raise IndexError("target outside the logit range")
    score = logits[torch.arange(b), targets].unsqueeze(1)
    above = logits >= score
    if filter_index is not None:
        rows, cols = [], []
        for i, (h, r, t) in enumerate(queries.tolist()):
            for e in filter_index[(h, r)]:
                if e != t:
                    rows.append(i)
                    cols.append(e)
        if rows:
            above[rows, cols] = False
    above[torch.arange(b), targets] = False
    return (1 + above.sum(1)).numpy().astype(np.int64)


def rank_metrics(ranks: Sequence[int]) -> dict:
    ranks = np.asarray(ranks, dtype=np.float64)
    if ranks.size == 0:
        return {"count": 0, "mrr": float("nan"), **{f"hits@{k}": float("nan") for k in HITS_AT}}
    return {
        "count": int(ranks.size),
        "mrr": float(np.mean(1.0 / ranks)),
        **{f"hits@{k}": float(np.mean(ranks <= k)) for k in HITS_AT},
    }


@dataclass
class RankReport:
    split: str
    queries: np.ndarray
    ranks: dict[str, np.ndarray]
    aggregates: dict[str, dict] = field(default_factory=dict)
    filter_policy: str | None = None

    def __post_init__(self):
        if not self.aggregates:
            self.aggregates = {view: rank_metrics(r) for view, r in self.ranks.items()}

    @property
    def mrr(self) -> float:
        return self.aggregates["fused"]["mrr"]

    def rows(self, kg: KnowledgeGraph | None = None) -> list[dict]:
        out = []
        for i, (h, r, t) in enumerate(self.queries.tolist()):
            row = {"head": h, "relation": r, "tail": t}
            if kg is not None:
                row.update(zip(("head_name", "relation_name", "tail_name"), kg.triple_names((h, r, t))))
            for view in VIEWS:
                row[f"rank_{view}"] = int(self.ranks[view][i]) if view in self.ranks else ""
            out.append(row)
        return out

    def summary(self) -> dict:
        note = None
        if self.filter_policy == "all-splits":
            note = "filtered against train+valid+test triples; pass --policy train-only to filter on train only"
        elif self.filter_policy == "train-only":
            note = "filtered against train triples only; standard protocol filters all splits"
        return {"split": self.split, "filter_policy": self.filter_policy, "filter_note": note,
                "aggregates": self.aggregates}

    def write(self, directory, kg: KnowledgeGraph | None = None, stem: str = "report") -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        rows = self.rows(kg)
        with open(directory / f"{stem}_queries.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(rows[0]) if rows else ["head", "relation", "tail"])
            writer.writeheader()
            writer.writerows(rows)
        (directory / f"{stem}_summary.json").write_text(json.dumps(self.summary(), indent=2))


@torch.no_grad()
def collect_logits(model, kg: KnowledgeGraph, split: str, prompt_mode: str = "minimal",
                   batch_size: int = 256, batcher=None):
    """Eval-mode (p_t, p_s, p_fused) for every query of ``split`` (None for disabled views)."""
    from .trainer import QueryBatcher

    was_training = model.training
    model.eval()
    queries = np.asarray(kg.split(split))
    batcher = batcher or QueryBatcher(kg, model.vocab, prompt_mode, model.config.max_seq_len)
    parts = {"p_t": [], "p_s": [], "p_fused": []}
    try:
        for start in range(0, len(queries), batch_size):
            tokens, lengths, rel, _ = batcher.batch(queries[start:start + batch_size])
            logits = model(tokens, lengths, rel)
            for name in parts:
                value = getattr(logits, name)
                parts[name].append(None if value is None else value.detach())
    finally:
        model.train(was_training)
    out = {name: (None if not chunks or chunks[0] is None else torch.cat(chunks)) for name, chunks in parts.items()}
    return queries, out


def evaluate(model, kg: KnowledgeGraph, split: str, filter_index: FilterIndex | None,
             prompt_mode: str = "minimal", batch_size: int = 256, batcher=None) -> RankReport:
    """Filtered ranks of every (augmented) query in ``split`` for the fused and single views."""
    queries, logits = collect_logits(model, kg, split, prompt_mode, batch_size, batcher)
    if len(queries) == 0:
        raise ValueError(f"split {split!r} is empty")
    ranks = {"fused": filtered_ranks(logits["p_fused"], queries, filter_index)}
    if logits["p_t"] is not None:
        ranks["text"] = filtered_ranks(logits["p_t"], queries, filter_index)
    if logits["p_s"] is not None:
        ranks["struct"] = filtered_ranks(logits["p_s"], queries, filter_index)
    return RankReport(split, queries, ranks, filter_policy=getattr(filter_index, "policy", None))


def rescore(p_t: torch.Tensor, p_s: torch.Tensor, gamma: float) -> torch.Tensor:
    return 0.5 * (gamma * p_t + p_s)


def sweep_gamma(model, kg: KnowledgeGraph, gammas: Sequence[float], filter_index: FilterIndex | None,
                split: str = "test", mode: str = "rescore",
                train_fn: Callable[[float], object] | None = None,
                prompt_mode: str = "minimal") -> dict[float, RankReport]:
    """Rank reports per logit-scaling ratio ``gamma = lambda_t / lambda_s`` (with ``lambda_s = 1``).

    ``rescore`` reuses one model's cached view logits; ``retrain`` calls
    ``train_fn(gamma)`` for a fixed-ratio model per value.
    """
    gammas = [float(g) for g in gammas]
    if not gammas:
        raise ValueError("gamma list is empty")
    reports: dict[float, RankReport] = {}
    if mode == "rescore":
        queries, logits = collect_logits(model, kg, split, prompt_mode)
        if logits["p_t"] is None or logits["p_s"] is None:
            raise ValueError("rescoring needs both predictor views")
        for g in gammas:
            ranks = {"fused": filtered_ranks(rescore(logits["p_t"], logits["p_s"], g), queries, filter_index),
                     "text": filtered_ranks(logits["p_t"], queries, filter_index),
                     "struct": filtered_ranks(logits["p_s"], queries, filter_index)}
            reports[g] = RankReport(split, queries, ranks, filter_policy=getattr(filter_index, "policy", None))
    elif mode == "retrain":
        if train_fn is None:
            raise ValueError("retrain mode needs train_fn")
        for g in gammas:
            reports[g] = evaluate(train_fn(g), kg, split, filter_index, prompt_mode)
    else:
        raise ValueError(f"unknown sweep mode {mode!r}")
    return reports


def write_table(path, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([f"{v:.6f}" if isinstance(v, float) and not math.isnan(v) else v for v in row])
