"""Checkpoint directories: one KGTF file per parameter tensor plus ``manifest.json``.

Raw feature tables (and the frozen scorer bases, which are copies of them)
are not duplicated; the manifest points at their KGTF files and records a
sha256 that is checked on load.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import torch

from .backbone import Vocabulary
from .feature_bank import BANK_FILES, FeatureBank, file_sha256, load_features, save_features
from .model import KgtModel, ModelConfig

FORMAT = "kgt-checkpoint"
VERSION = 1

# state-dict entries served from the feature bank
_FEATURE_KEYS = {
    "embed.entity_text": "entity_text",
    "embed.entity_struct": "entity_struct",
    "embed.relation_text": "relation_text",
    "embed.relation_struct": "relation_struct",
    "scorer_t.base": "entity_text",
    "scorer_s.base": "entity_struct",
}


class CheckpointError(ValueError):
    pass


def _bank_of(model: KgtModel) -> FeatureBank:
    emb = model.embed
    return FeatureBank(*(getattr(emb, n).detach().float().numpy()
                         for n in ("entity_text", "entity_struct", "relation_text", "relation_struct")))


def save_checkpoint(model: KgtModel, directory, feature_paths: dict | None = None,
                    extra: dict | None = None, metrics: dict | None = None) -> Path:
    directory = Path(directory)
    tensor_dir = directory / "tensors"
    tensor_dir.mkdir(parents=True, exist_ok=True)

    if feature_paths is None:
        feature_paths = _bank_of(model).save(directory / "features")
    features = {}
    for name in BANK_FILES:
        path = Path(feature_paths[name]).resolve()
        features[name] = {"path": str(path), "sha256": file_sha256(path)}

    tensors = {}
    for key, value in model.state_dict().items():
        if key in _FEATURE_KEYS:
            continue
        arr = value.detach().cpu().float().numpy()
        fname = key.replace(".", "__") + ".kgtf"
        save_features(arr.reshape(arr.shape[0] if arr.ndim else 1, -1), tensor_dir / fname)
        tensors[key] = {"file": f"tensors/{fname}", "shape": list(arr.shape)}

    manifest = {
        "format": FORMAT,
        "version": VERSION,
        "model_config": model.config.to_dict(),
        "vocab": {"base_tokens": list(model.vocab.base_tokens),
                  "n_entities": model.vocab.n_entities, "n_relations": model.vocab.n_relations},
        "features": features,
        "tensors": tensors,
        "extra": extra or {},
    }
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=2))
    if metrics is not None:
        (directory / "metrics.json").write_text(json.dumps(metrics, indent=2))
    return directory


def load_checkpoint(directory, verify_features: bool = True) -> KgtModel:
    directory = Path(directory)
    manifest_path = directory / "manifest.json"
    if not manifest_path.exists():
        raise CheckpointError(f"no manifest.json in {directory}")
    manifest = json.loads(manifest_path.read_text())
    if manifest.get("format") != FORMAT or manifest.get("version") != VERSION:
        raise CheckpointError(f"{manifest_path}: unsupported checkpoint format")

    mats = {}
    for name, ref in manifest["features"].items():
        path = Path(ref["path"])
        if not path.is_absolute():
            path = directory / path
        if verify_features and file_sha256(path) != ref["sha256"]:
            raise CheckpointError(f"feature file {path} does not match its recorded sha256")
        mats[name] = load_features(path)
    bank = FeatureBank(**mats)
    v = manifest["vocab"]
    vocab = Vocabulary(tuple(v["base_tokens"]), v["n_entities"], v["n_relations"])
    model = KgtModel(ModelConfig.from_dict(manifest["model_config"]), bank, vocab)

    state = model.state_dict()
    missing = set(state) - set(manifest["tensors"]) - set(_FEATURE_KEYS)
    unexpected = set(manifest["tensors"]) - set(state)
    if missing or unexpected:
        raise CheckpointError(f"tensor mismatch: missing {sorted(missing)}, unexpected {sorted(unexpected)}")
    loaded = {}
    for key, ref in manifest["tensors"].items():
        arr = load_features(directory / ref["file"]).reshape(ref["shape"])
        loaded[key] = torch.from_numpy(np.ascontiguousarray(arr)).to(state[key].dtype)
    for key in _FEATURE_KEYS:
        if key in state:
            loaded[key] = state[key]
    model.load_state_dict(loaded)
    model.eval()
    return model


def read_metrics(directory) -> dict | None:
    path = Path(directory) / "metrics.json"
    return json.loads(path.read_text()) if path.exists() else None
