import csv
import math

import numpy as np
import pytest
import torch

from kgt.feature_bank import FeatureBank
from kgt.model import ModelConfig
from kgt.predictor import ce_loss
from kgt.trainer import (
    ABLATION_LABELS,
    AblationConflictError,
    AblationSetting,
    NonFiniteLossError,
    QueryBatcher,
    TrainConfig,
    apply_ablation,
    build_model,
    train,
)

from helpers import synthetic_setup

SMALL = ModelConfig(d=16, layers=1, heads=2, text_dropout=0.0, struct_dropout=0.0)


@pytest.fixture(scope="module")
def setup():
    return synthetic_setup()


def snapshot(model):
    return {k: v.detach().clone() for k, v in model.state_dict().items()}


def test_ablation_table_has_ten_settings():
    assert len(AblationSetting) == 10
    assert set(ABLATION_LABELS) == set(AblationSetting)


@pytest.mark.parametrize("setting", list(AblationSetting))
def test_each_setting_builds_a_model(setup, setting):
    kg, _, bank = setup
    model = build_model(kg, bank, apply_ablation(SMALL, setting))
    tokens, lengths, rel, target = QueryBatcher(kg, model.vocab).batch(kg.train[:4])
    out = model(tokens, lengths, rel)
    assert out.p_fused.shape == (4, kg.n_entities)


def test_ablation_switch_semantics():
    assert apply_ablation(SMALL, "struct_only").use_text_input is False
    assert apply_ablation(SMALL, "struct_only").use_text_pred is False
    cfg = apply_ablation(SMALL, "no_lls")
    assert cfg.scaler_mode == "fixed" and cfg.gamma == 1.0
    assert apply_ablation(SMALL, "no_rel_temp").rel_temp is False


def test_conflicting_override_is_an_error():
    with pytest.raises(AblationConflictError):
        apply_ablation(SMALL, "text_only", {"use_struct_pred": True})
    with pytest.raises(AblationConflictError):
        apply_ablation(SMALL, "no_text_input", {"use_struct_input": False})
    assert apply_ablation(SMALL, "text_only", {"d": 8}).d == 8


def test_zero_lr_leaves_parameters_unchanged(setup):
    kg, fi, bank = setup
    model = build_model(kg, bank, SMALL.updated(noise=False))
    before = snapshot(model)
    result = train(kg, bank, SMALL.updated(noise=False), TrainConfig(epochs=2, learning_rate=0.0, eval_valid=False),
                   model=model)
    for k, v in model.state_dict().items():
        assert torch.equal(v, before[k]), k
    assert result.history[0]["loss"] == pytest.approx(result.history[1]["loss"], rel=1e-6)


def test_fixed_seed_gives_identical_curves(setup):
    kg, fi, bank = setup
    cfg = TrainConfig(epochs=2, learning_rate=1e-3, seed=3, eval_valid=False)
    a = train(kg, bank, SMALL.updated(text_dropout=0.2), cfg)
    b = train(kg, bank, SMALL.updated(text_dropout=0.2), cfg)
    assert [r["loss"] for r in a.history] == [r["loss"] for r in b.history]


def test_descent_on_repeated_batch(setup):
    kg, _, bank = setup
    cfg = apply_ablation(SMALL, "no_noise")
    model = build_model(kg, bank, cfg).train()
    tokens, lengths, rel, target = QueryBatcher(kg, model.vocab).batch(kg.train[:32])
    opt = torch.optim.Adam(model.trainable_parameters(), lr=1e-4)
    losses = []
    for _ in range(10):
        loss = ce_loss(model(tokens, lengths, rel).p_fused, target)
        losses.append(loss.item())
        opt.zero_grad()
        loss.backward()
        opt.step()
    assert all(b < a for a, b in zip(losses, losses[1:])), losses


def test_loss_drops_eighty_percent_below_uniform(setup):
    kg, _, bank = setup
    cfg = ModelConfig(d=32, layers=1, heads=2, text_dropout=0.1, struct_dropout=0.1)
    result = train(kg, bank, cfg, TrainConfig(epochs=200, learning_rate=2e-3, eval_valid=False))
    assert result.history[-1]["loss"] <= 0.2 * math.log(kg.n_entities)


def test_text_only_ignores_structural_parameters(setup):
    kg, _, bank = setup
    cfg = apply_ablation(SMALL, "text_only")
    model = build_model(kg, bank, cfg).eval()
    tokens, lengths, rel, _ = QueryBatcher(kg, model.vocab).batch(kg.test)
    before = model(tokens, lengths, rel).p_fused
    with torch.no_grad():
        model.embed.entity_struct.normal_()
        model.embed.relation_struct.normal_()
        model.embed.gate.logit_s.weight.normal_()
    assert model.embed.proj_s is None
    assert model.head_s is None and model.scorer_s is None
    assert torch.equal(model(tokens, lengths, rel).p_fused, before)


def test_no_noise_train_forward_is_deterministic(setup):
    kg, _, bank = setup
    model = build_model(kg, bank, apply_ablation(SMALL, "no_noise")).train()
    tokens, lengths, rel, _ = QueryBatcher(kg, model.vocab).batch(kg.train[:8])
    a = model(tokens, lengths, rel, torch.Generator().manual_seed(1)).p_fused
    b = model(tokens, lengths, rel, torch.Generator().manual_seed(2)).p_fused
    c = model.eval()(tokens, lengths, rel).p_fused
    assert torch.equal(a, b) and torch.allclose(a, c, atol=1e-6)


def test_noise_makes_train_forward_stochastic(setup):
    kg, _, bank = setup
    model = build_model(kg, bank, SMALL).train()
    with torch.no_grad():
        model.embed.gate.noise_t.weight.fill_(1.0)
    tokens, lengths, rel, _ = QueryBatcher(kg, model.vocab).batch(kg.train[:8])
    a = model(tokens, lengths, rel, torch.Generator().manual_seed(1)).p_fused
    b = model(tokens, lengths, rel, torch.Generator().manual_seed(2)).p_fused
    assert not torch.equal(a, b)


def test_no_lls_lambda_has_no_gradient(setup):
    kg, _, bank = setup
    model = build_model(kg, bank, apply_ablation(SMALL, "no_lls"))
    tokens, lengths, rel, target = QueryBatcher(kg, model.vocab).batch(kg.train[:8])
    ce_loss(model(tokens, lengths, rel).p_fused, target).backward()
    assert not model.scalers.lambda_t.requires_grad and model.scalers.lambda_t.grad is None
    assert not any("lambda" in n for n, _ in model.named_parameters())
    assert (model.scalers.lambda_t.item(), model.scalers.lambda_s.item()) == (1.0, 1.0)


def test_frozen_tensors_survive_training(setup, tmp_path):
    kg, fi, bank = setup
    cfg = SMALL.updated(attention_lora=True)
    model = build_model(kg, bank, cfg)
    before = snapshot(model)
    train(kg, bank, cfg, TrainConfig(epochs=1, learning_rate=1e-2, eval_valid=False), model=model)
    after = model.state_dict()
    frozen = [k for k in after if k.startswith("scorer_") and k.endswith("base")]
    frozen += [k for k in after if k.startswith("backbone") and "lora_" not in k]
    frozen.append("token_table.weight")
    for k in frozen:
        assert torch.equal(after[k], before[k]), k
    assert not torch.equal(after["backbone.blocks.0.attn.wq.lora_b"], before["backbone.blocks.0.attn.wq.lora_b"])


def test_non_finite_loss_aborts_with_batch_ids(setup):
    kg, _, bank = setup
    model = build_model(kg, bank, SMALL)
    with torch.no_grad():
        model.scalers.lambda_t.fill_(float("nan"))
    with pytest.raises(NonFiniteLossError) as err:
        train(kg, bank, SMALL, TrainConfig(epochs=1, eval_valid=False), model=model)
    assert len(err.value.batch_ids) == 32


def test_feature_vocab_mismatch_is_reported_before_training(setup):
    kg, _, bank = setup
    short = FeatureBank(bank.entity_text[:10], bank.entity_struct[:10], bank.relation_text, bank.relation_struct)
    with pytest.raises(ValueError):
        train(kg, short, SMALL, TrainConfig(epochs=1))


def test_checkpoint_and_log_each_epoch(setup, tmp_path):
    kg, fi, bank = setup
    seen = []
    train(kg, bank, SMALL, TrainConfig(epochs=2, learning_rate=1e-3), out_dir=tmp_path, filter_index=fi,
          on_epoch=lambda e, m, row: seen.append((e, (tmp_path / "checkpoint" / "manifest.json").exists())))
    assert seen == [(1, True), (2, True)]
    rows = list(csv.DictReader(open(tmp_path / "train_log.csv")))
    assert [r["epoch"] for r in rows] == ["1", "2"]
    assert all(0 < float(r["valid_mrr"]) <= 1 for r in rows)
