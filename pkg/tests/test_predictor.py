import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from kgt.predictor import HeadMlp, LogitScalers, LoraScorer, ce_loss, fuse_logits

from helpers import gradient_errors


def oracle_ce(p, target):
    """Log-sum-exp written out with math.fsum around the max."""
    m = max(p)
    return m + math.log(math.fsum(math.exp(x - m) for x in p)) - p[target]


def test_head_zero_input_and_repeatability():
    head = HeadMlp(6, 3, dropout_rate=0.3).eval()
    assert not head(torch.zeros(6)).any()
    h = torch.randn(6)
    assert torch.equal(head(h), head(h))


def test_head_identity_hand_case():
    head = HeadMlp(2, 2).double().eval()
    with torch.no_grad():
        head.weight.copy_(torch.eye(2))
    out = head(torch.tensor([1.0, -1.0], dtype=torch.float64))
    a, b = 1 / (1 + math.exp(-1)), -1 / (1 + math.exp(1))
    rms = math.sqrt((a * a + b * b) / 2 + 1e-6)
    assert out.tolist() == pytest.approx([a / rms, b / rms], abs=1e-12)


def test_head_dimension_mismatch():
    with pytest.raises(ValueError):
        HeadMlp(4, 2)(torch.zeros(5))


def test_warm_start_equals_base_scoring():
    base = torch.randn(20, 6)
    scorer = LoraScorer(base, rank=4)
    h = torch.randn(100, 6)
    assert torch.allclose(scorer(h), h @ base.T, atol=1e-6)


def test_ones_row_update_sums_components():
    scorer = LoraScorer(torch.zeros(2, 3), rank=1).double()
    with torch.no_grad():
        scorer.lora_a.copy_(torch.tensor([[1.0], [0.0]]))
        scorer.lora_b.copy_(torch.ones(1, 3))
    h = torch.tensor([0.5, -2.0, 4.0], dtype=torch.float64)
    p = scorer(h)
    assert p[0].item() == 2.5 and p[1].item() == 0.0


def test_small_hand_case_matches_materialised_matrix():
    base = torch.tensor([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]], dtype=torch.float64)
    scorer = LoraScorer(base, rank=1)
    with torch.no_grad():
        scorer.lora_a.copy_(torch.tensor([[1.0], [2.0], [-1.0]]))
        scorer.lora_b.copy_(torch.tensor([[0.5, -1.0]]))
    h = torch.tensor([2.0, 3.0], dtype=torch.float64)
    # W = base + A B = [[1.5,-1],[1,-1],[0.5,2]]
    assert scorer(h).tolist() == pytest.approx([0.0, -1.0, 7.0], abs=1e-12)
    assert torch.equal(scorer.merged_weight(), base + scorer.lora_a @ scorer.lora_b)


def test_fuse_logits_cases():
    p_t, p_s = torch.tensor([2.0, 0.0, -1.0]), torch.tensor([0.0, 4.0, 1.0])
    assert fuse_logits(p_t, p_s, 1.0, 1.0).tolist() == [1.0, 2.0, 0.0]
    assert fuse_logits(p_t, p_s, 0.0, 1.0).tolist() == [0.0, 2.0, 0.5]
    fixed = LogitScalers("fixed", 1.4)
    out = fuse_logits(p_t, p_s, fixed.lambda_t, fixed.lambda_s)
    for i in range(3):
        assert out[i].item() == pytest.approx(0.5 * (1.4 * p_t[i].item() + p_s[i].item()), abs=1e-6)
    assert fixed.gamma == pytest.approx(1.4)
    assert not any(p.requires_grad for p in fixed.parameters())


def test_fuse_logits_shape_mismatch():
    with pytest.raises(ValueError):
        fuse_logits(torch.zeros(3), torch.zeros(4), 1.0, 1.0)


def test_ce_uniform_and_limit():
    for n in (1, 2, 7, 64, 15000):
        assert ce_loss(torch.zeros(n, dtype=torch.float64), 0).item() == pytest.approx(math.log(n), abs=1e-9)
    p = torch.zeros(5, dtype=torch.float64)
    p[2] = 1e4
    assert ce_loss(p, 2).item() == pytest.approx(0.0, abs=1e-12)


def test_ce_against_oracle_random():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        n = int(rng.integers(1, 12))
        p = rng.normal(scale=rng.uniform(0.1, 30), size=n)
        t = int(rng.integers(n))
        assert abs(ce_loss(torch.tensor(p), t).item() - oracle_ce(p.tolist(), t)) <= 1e-10


def test_ce_batched_is_mean():
    p = torch.randn(4, 6, dtype=torch.float64)
    t = torch.tensor([0, 5, 2, 2])
    single = [ce_loss(p[i], t[i]) for i in range(4)]
    assert ce_loss(p, t).item() == pytest.approx(float(sum(single)) / 4, abs=1e-12)


@given(st.floats(-1e6, 1e6), st.integers(0, 2**31 - 1))
@settings(max_examples=60, deadline=None)
def test_ce_shift_invariance(c, seed):
    g = torch.Generator().manual_seed(seed)
    p = torch.randn(9, generator=g, dtype=torch.float64)
    assert ce_loss(p + c, 3).item() == pytest.approx(ce_loss(p, 3).item(), abs=1e-6)


def test_gradient_check_predictor_chain():
    torch.manual_seed(0)
    d, d_t, d_s, n = 5, 4, 3, 6
    head_t, head_s = HeadMlp(d, d_t).double(), HeadMlp(d, d_s).double()
    sc_t = LoraScorer(torch.randn(n, d_t, dtype=torch.float64), rank=2)
    sc_s = LoraScorer(torch.randn(n, d_s, dtype=torch.float64), rank=2)
    with torch.no_grad():  # move B off zero so A receives gradient
        sc_t.lora_b.normal_()
        sc_s.lora_b.normal_()
    scalers = LogitScalers().double()
    with torch.no_grad():
        scalers.lambda_t.fill_(0.8)
    h = torch.randn(3, d, dtype=torch.float64)
    target = torch.tensor([1, 4, 0])

    def loss():
        p = fuse_logits(sc_t(head_t(h)), sc_s(head_s(h)), scalers.lambda_t, scalers.lambda_s)
        return ce_loss(p, target)

    params = {"W'_t": head_t.weight, "W'_s": head_s.weight, "A_t": sc_t.lora_a, "B_t": sc_t.lora_b,
              "A_s": sc_s.lora_a, "B_s": sc_s.lora_b, "lambda_t": scalers.lambda_t, "lambda_s": scalers.lambda_s}
    errors = gradient_errors(loss, params)
    assert max(errors.values()) <= 1e-4, errors


def test_base_is_frozen_after_optimizer_step():
    base = torch.randn(10, 4)
    scorer = LoraScorer(base, rank=2)
    opt = torch.optim.Adam(scorer.parameters(), lr=0.1)
    for _ in range(3):
        opt.zero_grad()
        ce_loss(scorer(torch.randn(4)), 3).backward()
        opt.step()
    assert torch.equal(scorer.base, base)
    assert "base" not in dict(scorer.named_parameters())
    assert scorer.lora_b.abs().sum() > 0
