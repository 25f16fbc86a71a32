"""INI-style run configuration: one section per pipeline stage.

    [kge]       KgeConfig fields        (structural pre-training)
    [text]      TextConfig fields       (text encoder)
    [model]     ModelConfig fields
    [train]     TrainConfig fields
    [dataset]   DatasetSchema fields

Values are coerced to the type of the field's default. Unknown sections or
keys are rejected with the list of valid ones.
"""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from .kg_store import DatasetSchema
from .model import ModelConfig
from .struct_embedder import KgeConfig
from .trainer import TrainConfig

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


class ConfigError(ValueError):
    pass


@dataclass
class TextConfig:
    dim: int = 1536
    seed: int = 0
    model: str = "text-embedding-3-small"
    batch_size: int = 64
    concurrency: int = 4
    retries: int = 3


@dataclass
class RunConfig:
    kge: KgeConfig = field(default_factory=KgeConfig)
    text: TextConfig = field(default_factory=TextConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    dataset: DatasetSchema = field(default_factory=DatasetSchema)

    def to_dict(self) -> dict:
        return {name: dataclasses.asdict(getattr(self, name)) for name in SECTIONS}


SECTIONS = {"kge": KgeConfig, "text": TextConfig, "model": ModelConfig, "train": TrainConfig,
            "dataset": DatasetSchema}


def _coerce(raw: str, annotation, default):
    text = raw.strip()
    optional = default is None or (isinstance(annotation, str) and "None" in annotation)
    if optional and text.lower() in ("", "none", "null"):
        return None
    if isinstance(default, bool):
        low = text.lower()
        if low in _TRUE:
            return True
        if low in _FALSE:
            return False
        raise ValueError(f"expected a boolean, got {raw!r}")
    if isinstance(default, int):
        return int(text)
    if isinstance(default, float):
        return float(text)
    return text.strip("\"'")


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str  # keep key case
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    unknown_sections = [s for s in parser.sections() if s not in SECTIONS]
    if unknown_sections:
        raise ConfigError(f"{source}: unknown section(s) {unknown_sections}; valid sections: {sorted(SECTIONS)}")
    if parser.defaults():
        raise ConfigError(f"{source}: keys must live in a section; valid sections: {sorted(SECTIONS)}")
    out = {}
    for name, cls in SECTIONS.items():
        defaults = cls()
        hints = {f.name: f.type for f in dataclasses.fields(cls)}
        values = {}
        if parser.has_section(name):
            for key, raw in parser.items(name):
                if key not in hints:
                    raise ConfigError(f"{source}: unknown key {key!r} in [{name}]; valid keys: {sorted(hints)}")
                try:
                    values[key] = _coerce(raw, hints[key], getattr(defaults, key))
                except ValueError as exc:
                    raise ConfigError(f"{source}: [{name}] {key}: {exc}") from exc
        try:
            out[name] = dataclasses.replace(defaults, **values)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{source}: [{name}]: {exc}") from exc
    return RunConfig(**out)


def load_config(path) -> RunConfig:
    if path is None:
        return RunConfig()
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    return parse_config(path.read_text(encoding="utf-8"), str(path))


def valid_keys() -> dict[str, list[str]]:
    return {name: [f.name for f in dataclasses.fields(cls)] for name, cls in SECTIONS.items()}
