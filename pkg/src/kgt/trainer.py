"""Training loop, ablation settings and query batching."""

from __future__ import annotations

import csv
import enum
import logging
import math
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Callable

import numpy as np
import torch

from .backbone import PAD, Vocabulary, build_prompt, default_base_tokens, extend_vocabulary
from .feature_bank import FeatureBank
from .kg_store import KnowledgeGraph
from .model import KgtModel, ModelConfig
from .predictor import ce_loss

log = logging.getLogger(__name__)


class NonFiniteLossError(FloatingPointError):
    def __init__(self, message, batch_ids=None):
        super().__init__(message)
        self.batch_ids = batch_ids


class AblationConflictError(ValueError):
    pass


class AblationSetting(str, enum.Enum):
    FULL = "full"
    STRUCT_ONLY = "struct_only"          # 1.1
    TEXT_ONLY = "text_only"              # 1.2
    NO_STRUCT_INPUT = "no_struct_input"  # 2.1
    NO_TEXT_INPUT = "no_text_input"      # 2.2
    NO_STRUCT_PRED = "no_struct_pred"    # 2.3
    NO_TEXT_PRED = "no_text_pred"        # 2.4
    NO_NOISE = "no_noise"                # 2.5
    NO_REL_TEMP = "no_rel_temp"          # 2.6
    NO_LLS = "no_lls"                    # 2.7

    @property
    def label(self) -> str:
        return ABLATION_LABELS[self]


ABLATION_LABELS = {
    AblationSetting.FULL: "Full Model",
    AblationSetting.STRUCT_ONLY: "(1.1) Structure Modality",
    AblationSetting.TEXT_ONLY: "(1.2) Text Modality",
    AblationSetting.NO_STRUCT_INPUT: "(2.1) w/o structural input",
    AblationSetting.NO_TEXT_INPUT: "(2.2) w/o textual input",
    AblationSetting.NO_STRUCT_PRED: "(2.3) w/o structural predictor",
    AblationSetting.NO_TEXT_PRED: "(2.4) w/o textual predictor",
    AblationSetting.NO_NOISE: "(2.5) w/o noise",
    AblationSetting.NO_REL_TEMP: "(2.6) w/o relational temperature",
    AblationSetting.NO_LLS: "(2.7) w/o LLS",
}

_ABLATION_SWITCHES = {
    AblationSetting.FULL: {},
    AblationSetting.STRUCT_ONLY: {"use_text_input": False, "use_text_pred": False},
    AblationSetting.TEXT_ONLY: {"use_struct_input": False, "use_struct_pred": False},
    AblationSetting.NO_STRUCT_INPUT: {"use_struct_input": False},
    AblationSetting.NO_TEXT_INPUT: {"use_text_input": False},
    AblationSetting.NO_STRUCT_PRED: {"use_struct_pred": False},
    AblationSetting.NO_TEXT_PRED: {"use_text_pred": False},
    AblationSetting.NO_NOISE: {"noise": False},
    AblationSetting.NO_REL_TEMP: {"rel_temp": False},
    AblationSetting.NO_LLS: {"scaler_mode": "fixed", "gamma": 1.0},
}


def apply_ablation(config: ModelConfig, setting, overrides: dict | None = None) -> ModelConfig:
    """Return ``config`` with the switches of ``setting`` applied.

    ``overrides`` may set further config fields, but may not contradict a
    switch the setting forces.
    """
    setting = AblationSetting(setting)
    forced = _ABLATION_SWITCHES[setting]
    overrides = dict(overrides or {})
    clash = {k: v for k, v in overrides.items() if k in forced and forced[k] != v}
    if clash:
        raise AblationConflictError(f"overrides {clash} conflict with ablation {setting.value} ({forced})")
    changes = {**overrides, **forced}
    cfg = replace(config, **changes)
    if not (cfg.use_text_input or cfg.use_struct_input):
        raise AblationConflictError("configuration disables both input streams")
    if not (cfg.use_text_pred or cfg.use_struct_pred):
        raise AblationConflictError("configuration disables both predictor views")
    return cfg


@dataclass
class TrainConfig:
    epochs: int = 8
    batch_size: int = 32
    learning_rate: float = 2e-4
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    weight_decay: float = 0.0
    seed: int = 0
    grad_clip_norm: float = 1.0
    ablation: str = "full"
    prompt_mode: str = "minimal"
    eval_valid: bool = True
    eval_every: int = 1


class QueryBatcher:
    """Caches prompts per (head, relation) and assembles right-padded batches."""

    def __init__(self, kg: KnowledgeGraph, vocab: Vocabulary, mode: str = "minimal",
                 max_seq_len: int | None = None):
        self.kg, self.vocab, self.mode, self.max_seq_len = kg, vocab, mode, max_seq_len
        self._cache: dict[tuple[int, int], list[int]] = {}
        self.pad_id = vocab.base_id(PAD)

    def prompt(self, h: int, r: int) -> list[int]:
        key = (h, r)
        if key not in self._cache:
            self._cache[key] = build_prompt(h, r, self.mode, self.vocab, self.kg, self.max_seq_len)
        return self._cache[key]

    def batch(self, triples: np.ndarray):
        seqs = [self.prompt(int(h), int(r)) for h, r, _ in triples]
        lengths = torch.tensor([len(s) for s in seqs])
        tokens = torch.full((len(seqs), int(lengths.max())), self.pad_id, dtype=torch.long)
        for i, s in enumerate(seqs):
            tokens[i, :len(s)] = torch.tensor(s)
        triples = torch.tensor(np.asarray(triples, dtype=np.int64))
        return tokens, lengths, triples[:, 1].clone(), triples[:, 2].clone()


def build_model(kg: KnowledgeGraph, bank: FeatureBank, model_config: ModelConfig,
                seed: int = 0, vocab: Vocabulary | None = None) -> KgtModel:
    bank.check_graph(kg)
    vocab = vocab or extend_vocabulary(kg, default_base_tokens(kg))
    return KgtModel(model_config, bank, vocab, seed=seed)


@dataclass
class TrainResult:
    model: KgtModel
    history: list[dict] = field(default_factory=list)
    seconds: float = 0.0


def train(kg: KnowledgeGraph, bank: FeatureBank, model_config: ModelConfig, config: TrainConfig,
          out_dir=None, filter_index=None, model: KgtModel | None = None,
          on_epoch: Callable[[int, KgtModel, dict], None] | None = None,
          feature_paths: dict | None = None) -> TrainResult:
    """Fine-tune a KGT model on the augmented train split.

    Each epoch shuffles the training queries with the run seed, runs
    forward/loss/backward per batch, clips the global gradient norm and takes
    an Adam step. With ``out_dir`` a checkpoint and ``train_log.csv`` are
    written after every epoch.
    """
    from .checkpoint import save_checkpoint
    from .evaluator import evaluate

    if not kg.augmented:
        raise ValueError("train expects an inverse-augmented graph")
    bank.check_graph(kg)
    model_config = apply_ablation(model_config, config.ablation)
    if model is None:
        model = build_model(kg, bank, model_config, seed=config.seed)
    batcher = QueryBatcher(kg, model.vocab, config.prompt_mode, model_config.max_seq_len)
    params = model.trainable_parameters()
    opt = torch.optim.Adam(params, lr=config.learning_rate, betas=(config.beta1, config.beta2),
                           eps=config.adam_eps, weight_decay=config.weight_decay)
    gen = torch.Generator().manual_seed(config.seed)
    train_triples = np.asarray(kg.train)
    out_dir = Path(out_dir) if out_dir is not None else None
    history: list[dict] = []
    start_time = time.perf_counter()

    for epoch in range(1, config.epochs + 1):
        model.train()
        perm = torch.randperm(len(train_triples), generator=gen).numpy()
        total, count = 0.0, 0
        for start in range(0, len(perm), config.batch_size):
            ids = perm[start:start + config.batch_size]
            tokens, lengths, rel, target = batcher.batch(train_triples[ids])
            logits = model(tokens, lengths, rel, generator=gen)
            loss = ce_loss(logits.p_fused, target)
            if not torch.isfinite(loss):
                raise NonFiniteLossError(
                    f"non-finite loss at epoch {epoch}, batch starting at {start}", batch_ids=ids.tolist())
            opt.zero_grad(set_to_none=True)
            loss.backward()
            if config.grad_clip_norm and config.grad_clip_norm > 0:
                torch.nn.utils.clip_grad_norm_(params, config.grad_clip_norm)
            opt.step()
            total += loss.item() * len(ids)
            count += len(ids)
        row = {"epoch": epoch, "loss": total / max(count, 1), "valid_mrr": float("nan")}
        want_eval = config.eval_valid and len(kg.valid) and (
            epoch % max(config.eval_every, 1) == 0 or epoch == config.epochs)
        if want_eval and filter_index is not None:
            row["valid_mrr"] = evaluate(model, kg, "valid", filter_index, prompt_mode=config.prompt_mode,
                                        batcher=batcher).aggregates["fused"]["mrr"]
        history.append(row)
        log.info("epoch %d loss %.5f valid_mrr %.4f", epoch, row["loss"], row["valid_mrr"])
        if out_dir is not None:
            save_checkpoint(model, out_dir / "checkpoint", feature_paths=feature_paths,
                            extra={"epoch": epoch, "train_config": asdict(config)})
            write_log(history, out_dir / "train_log.csv")
        if on_epoch is not None:
            on_epoch(epoch, model, row)
    return TrainResult(model, history, time.perf_counter() - start_time)


def write_log(history: list[dict], path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["epoch", "loss", "valid_mrr"])
        writer.writeheader()
        for row in history:
            writer.writerow({k: (f"{v:.8g}" if isinstance(v, float) else v) for k, v in row.items()})


def uniform_loss(n_entities: int) -> float:
    return math.log(n_entities)


def train_config_fields() -> list[str]:
    return [f.name for f in fields(TrainConfig)]
