from types import SimpleNamespace

import numpy as np
import pytest
import torch

from kgt.backbone import (
    BOS,
    PAD,
    QUERY,
    PromptTooLongError,
    Transformer,
    TransformerConfig,
    build_prompt,
    default_base_tokens,
    extend_vocabulary,
)
from kgt.feature_bank import FeatureBank, encode_text_deterministic
from kgt.kg_store import augment_inverses, from_triples
from kgt.model import KgtModel, ModelConfig

from helpers import gradient_errors, random_bank


@pytest.fixture
def mainz():
    kg = from_triples({"train": [("Mainz", "capital of", "Rhineland-Palatinate"),
                                 ("Rhineland-Palatinate", "part of", "Germany")]},
                      {"Mainz": "city on the Rhine", "Germany": "country in Europe"})
    return augment_inverses(kg)


def test_vocab_size_and_layout():
    kg = SimpleNamespace(n_entities=2, n_relations=2)
    base = [PAD, BOS, QUERY, "<unk>", "a", "b", "c", "d", "e", "?"]
    vocab = extend_vocabulary(kg, base)
    assert len(vocab) == 14
    assert [vocab.entity_token(k) for k in range(2)] == [10, 11]
    assert [vocab.relation_token(k) for k in range(2)] == [12, 13]
    assert vocab.describe(11) == ("entity", 1) and vocab.describe(13) == ("relation", 1)


def test_mkgw_sized_vocabulary():
    vocab = extend_vocabulary(SimpleNamespace(n_entities=15000, n_relations=2 * 169), default_base_tokens())
    assert len(vocab) - vocab.n_base == 15000 + 338


def test_vocabulary_errors():
    kg = SimpleNamespace(n_entities=1, n_relations=1)
    with pytest.raises(ValueError, match="duplicate"):
        extend_vocabulary(kg, [BOS, QUERY, BOS])
    with pytest.raises(ValueError):
        extend_vocabulary(kg, [BOS])
    with pytest.raises(ValueError):
        extend_vocabulary(kg, [])


def test_prompts(mainz):
    vocab = extend_vocabulary(mainz, default_base_tokens(mainz))
    h, r = mainz.entity_index["Mainz"], mainz.relation_index["capital of"]
    minimal = build_prompt(h, r, "minimal", vocab)
    assert minimal == [vocab.base_id(BOS), vocab.entity_token(h), vocab.relation_token(r), vocab.base_id(QUERY)]
    for e in range(mainz.n_entities):
        assert len(build_prompt(e, 0, "minimal", vocab)) == 4
    templated = build_prompt(h, r, "templated", vocab, mainz)
    assert templated.count(vocab.entity_token(h)) == 2
    assert templated == build_prompt(h, r, "templated", vocab, mainz)
    assert vocab.base_id("<unk>") not in templated  # every scaffold/description word is in the vocabulary
    with pytest.raises(PromptTooLongError):
        build_prompt(h, r, "templated", vocab, mainz, max_seq_len=10)


def small_model(kg, **cfg):
    bank = FeatureBank(encode_text_deterministic(kg.entity_texts, 8), np.random.default_rng(0).normal(size=(kg.n_entities, 6)),
                       encode_text_deterministic(kg.relation_texts, 8), np.random.default_rng(1).normal(size=(kg.n_relations, 6)))
    vocab = extend_vocabulary(kg, default_base_tokens(kg))
    return KgtModel(ModelConfig(d=8, layers=1, heads=2, **cfg), bank, vocab, seed=0).eval()


def test_all_base_sequence_is_table_lookup(mainz):
    model = small_model(mainz)
    tokens = torch.tensor([[1, 2, 5, 7]])
    vec, g_t, _ = model.embed_sequence(tokens, torch.tensor([0]))
    assert torch.equal(vec[0], model.token_table.weight[tokens[0]])
    assert torch.isnan(g_t).all()


def test_minimal_prompt_routing_and_query_swap(mainz):
    model = small_model(mainz)
    with torch.no_grad():
        model.embed.gate.temperature.copy_(torch.linspace(-1, 1, mainz.n_relations))
    seq = torch.tensor([build_prompt(0, 1, "minimal", model.vocab)])
    v1, g_t, _ = model.embed_sequence(seq, torch.tensor([1]))
    assert torch.isnan(g_t[0, [0, 3]]).all() and not torch.isnan(g_t[0, [1, 2]]).any()
    ent, _ = model.embed.embed_entity(0, 1)
    assert torch.allclose(v1[0, 1], ent, atol=1e-6)
    v2, _, _ = model.embed_sequence(seq, torch.tensor([2]))
    changed = (v1 != v2).any(-1)[0].tolist()
    assert changed == [False, True, False, False]  # only the entity row: relation tokens gate on themselves


def test_unknown_token_id(mainz):
    model = small_model(mainz)
    with pytest.raises(IndexError):
        model.embed_sequence(torch.tensor([[len(model.vocab)]]), torch.tensor([0]))


def test_zero_layers_is_final_norm_of_last_input():
    net = Transformer(TransformerConfig(d=4, layers=0, heads=1)).double()
    x = torch.randn(1, 3, 4, dtype=torch.float64)
    assert torch.allclose(net(x)[0], net.norm(x[0, -1]))


def test_causality():
    torch.manual_seed(0)
    net = Transformer(TransformerConfig(d=8, layers=2, heads=2)).double().eval()
    x = torch.randn(1, 6, 8, dtype=torch.float64)
    _, aux = net(x, return_all=True)
    y = x.clone()
    y[0, 4] += 1.0
    _, aux2 = net(y, return_all=True)
    assert torch.equal(aux["hidden"][0, :4], aux2["hidden"][0, :4])
    assert not torch.equal(aux["hidden"][0, 4], aux2["hidden"][0, 4])


def test_right_padding_reads_last_real_position():
    torch.manual_seed(0)
    net = Transformer(TransformerConfig(d=8, layers=1, heads=2)).eval()
    x = torch.randn(2, 5, 8)
    out = net(x, torch.tensor([5, 3]))
    assert torch.allclose(out[1], net(x[1:2, :3])[0], atol=1e-6)


def np_rms(x, g, eps=1e-6):
    return x / np.sqrt((x * x).mean(-1, keepdims=True) + eps) * g


def oracle_forward(x, net):
    """Step-by-step numpy recomputation of a 1-layer, 1-head block and final norm."""
    blk = net.blocks[0]
    W = {k: getattr(blk.attn, k).weight.detach().numpy() for k in ("wq", "wk", "wv", "wo")}
    n, d = x.shape
    a_in = np_rms(x, blk.attn_norm.weight.detach().numpy())
    q, k, v = a_in @ W["wq"].T, a_in @ W["wk"].T, a_in @ W["wv"].T
    half = d // 2
    inv = 1.0 / 10000 ** (np.arange(half) * 2 / d)
    for pos in range(n):
        for i in range(half):
            c, s = np.cos(pos * inv[i]), np.sin(pos * inv[i])
            for m in (q, k):
                a, b = m[pos, i], m[pos, i + half]
                m[pos, i], m[pos, i + half] = a * c - b * s, b * c + a * s
    out = np.zeros_like(x)
    for i in range(n):
        s = np.array([q[i] @ k[j] / np.sqrt(d) for j in range(i + 1)])
        w = np.exp(s - s.max())
        w /= w.sum()
        out[i] = sum(w[j] * v[j] for j in range(i + 1))
    x = x + out @ W["wo"].T
    f_in = np_rms(x, blk.ffn_norm.weight.detach().numpy())
    gate = f_in @ blk.ffn.w_gate.weight.detach().numpy().T
    up = f_in @ blk.ffn.w_up.weight.detach().numpy().T
    x = x + (gate / (1 + np.exp(-gate)) * up) @ blk.ffn.w_down.weight.detach().numpy().T
    return np_rms(x, net.norm.weight.detach().numpy())


def test_one_layer_matches_numpy_oracle():
    torch.manual_seed(3)
    net = Transformer(TransformerConfig(d=4, layers=1, heads=1)).double().eval()
    with torch.no_grad():
        for p in net.parameters():
            if p.dim() == 1:
                p.uniform_(0.5, 1.5)
    x = torch.randn(5, 4, dtype=torch.float64)
    _, aux = net(x.unsqueeze(0), return_all=True)
    np.testing.assert_allclose(aux["hidden"][0].detach().numpy(), oracle_forward(x.numpy(), net), rtol=0, atol=1e-10)


def test_attention_rows_are_distributions():
    torch.manual_seed(0)
    net = Transformer(TransformerConfig(d=8, layers=2, heads=4)).eval()
    _, aux = net(torch.randn(3, 7, 8), return_attn=True)
    for attn in aux["attn"]:
        assert torch.allclose(attn.sum(-1), torch.ones(attn.shape[:-1]), atol=1e-6)
        assert (attn.triu(1) == 0).all()


def test_gradient_check_one_layer():
    torch.manual_seed(0)
    net = Transformer(TransformerConfig(d=4, layers=1, heads=1)).double()
    x = torch.randn(1, 3, 4, dtype=torch.float64, requires_grad=True)
    target = torch.randn(4, dtype=torch.float64)

    def loss():
        return ((net(x)[0] - target) ** 2).sum()

    params = {name: p for name, p in net.named_parameters()}
    params["input"] = x
    errors = gradient_errors(loss, params)
    assert max(errors.values()) <= 1e-4, errors


def test_eval_forward_is_deterministic(mainz):
    model = small_model(mainz)
    seq = torch.tensor([build_prompt(1, 0, "minimal", model.vocab)])
    assert torch.equal(model(seq, None, torch.tensor([0])).p_fused, model(seq, None, torch.tensor([0])).p_fused)


def test_attention_lora_freezes_backbone_and_table():
    model = KgtModel(ModelConfig(d=8, layers=1, heads=2, attention_lora=True), random_bank(),
                     extend_vocabulary(SimpleNamespace(n_entities=6, n_relations=4), default_base_tokens()))
    trainable = {n for n, p in model.named_parameters() if p.requires_grad}
    assert not any(n.startswith("backbone") and "lora_" not in n for n in trainable)
    assert "token_table.weight" not in trainable
    assert {"backbone.blocks.0.attn.wq.lora_a", "backbone.blocks.0.attn.wv.lora_b"} <= trainable
    assert "backbone.blocks.0.attn.wk.weight" not in trainable
