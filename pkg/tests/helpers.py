import numpy as np
import torch

from kgt.feature_bank import FeatureBank


def central_difference(loss_fn, param: torch.Tensor, eps: float = 1e-6) -> torch.Tensor:
    """Numerical gradient of scalar ``loss_fn()`` w.r.t. ``param`` by central differences."""
    grad = torch.zeros_like(param)
    flat = param.data.view(-1)
    g = grad.view(-1)
    with torch.no_grad():
        for i in range(flat.numel()):
            orig = flat[i].item()
            flat[i] = orig + eps
            up = float(loss_fn())
            flat[i] = orig - eps
            down = float(loss_fn())
            flat[i] = orig
            g[i] = (up - down) / (2 * eps)
    return grad


def relative_error(analytic: torch.Tensor, numeric: torch.Tensor) -> float:
    diff = (analytic - numeric).norm().item()
    scale = max(analytic.norm().item(), numeric.norm().item(), 1e-12)
    return diff / scale


def gradient_errors(loss_fn, params: dict) -> dict:
    """Relative error between autograd and central differences for every named parameter."""
    for p in params.values():
        p.grad = None
    loss_fn().backward()
    analytic = {name: p.grad.detach().clone() for name, p in params.items()}
    return {name: relative_error(analytic[name], central_difference(loss_fn, p)) for name, p in params.items()}


def random_bank(n_entities=6, n_relations=4, d_t=8, d_s=6, seed=0) -> FeatureBank:
    rng = np.random.default_rng(seed)
    return FeatureBank(rng.normal(size=(n_entities, d_t)), rng.normal(size=(n_entities, d_s)),
                       rng.normal(size=(n_relations, d_t)), rng.normal(size=(n_relations, d_s)))


def synthetic_setup(d_t=16, d_s=8, kge_epochs=30):
    """Augmented synthetic graph, its all-splits filter index and a small feature bank."""
    from kgt.feature_bank import encode_text_deterministic
    from kgt.kg_store import augment_inverses, build_filter_index
    from kgt.struct_embedder import KgeConfig, export_structural_features, train_kge
    from kgt.synthetic import make_synthetic_kg

    kg = augment_inverses(make_synthetic_kg())
    ent, rel = export_structural_features(train_kge(kg, KgeConfig(d_s=d_s, epochs=kge_epochs)))
    bank = FeatureBank(encode_text_deterministic(kg.entity_texts, d_t), ent,
                       encode_text_deterministic(kg.relation_texts, d_t), rel)
    return kg, build_filter_index(kg), bank
