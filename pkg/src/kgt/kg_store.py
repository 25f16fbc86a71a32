"""Knowledge-graph loading, inverse-relation augmentation and the filter index."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import Iterable, Mapping

import numpy as np

SPLITS = ("train", "valid", "test")
INVERSE_PREFIX = "inverse of "


class DatasetError(Exception):
    """Raised for malformed or inconsistent dataset inputs."""


class ParseError(DatasetError):
    def __init__(self, path, line_no, message):
        super().__init__(f"{path}:{line_no}: {message}")
        self.path = path
        self.line_no = line_no


class UnknownSymbolError(DatasetError):
    pass


class EmptySplitError(DatasetError):
    pass


class AugmentationError(DatasetError):
    pass


@dataclass(frozen=True)
class DatasetSchema:
    """File layout of a dataset directory.

    ``order`` gives the column order of the triple files, e.g. ``"hrt"`` for
    ``head<TAB>relation<TAB>tail`` or ``"htr"`` for ``head<TAB>tail<TAB>relation``.
    ``entity_list`` / ``relation_list`` are optional one-name-per-line files
    that declare vocabulary beyond what the triples mention.
    """

    train: str = "train.txt"
    valid: str = "valid.txt"
    test: str = "test.txt"
    descriptions: str | None = "entity2text.txt"
    entity_list: str | None = None
    relation_list: str | None = None
    order: str = "hrt"

    def split_file(self, split: str) -> str:
        return getattr(self, split)


@dataclass(frozen=True)
class KnowledgeGraph:
    entity_names: tuple[str, ...]
    relation_names: tuple[str, ...]
    n_base_relations: int
    train: np.ndarray
    valid: np.ndarray
    test: np.ndarray
    entity_texts: tuple[str, ...]
    relation_texts: tuple[str, ...]
    augmented: bool = False
    entity_index: Mapping[str, int] = field(default=None, repr=False, compare=False)
    relation_index: Mapping[str, int] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        for split in SPLITS:
            arr = np.asarray(getattr(self, split), dtype=np.int64).reshape(-1, 3)
            arr.setflags(write=False)
            object.__setattr__(self, split, arr)
        if self.entity_index is None:
            object.__setattr__(self, "entity_index", MappingProxyType(
                {n: i for i, n in enumerate(self.entity_names)}))
        if self.relation_index is None:
            object.__setattr__(self, "relation_index", MappingProxyType(
                {n: i for i, n in enumerate(self.relation_names)}))

    @property
    def n_entities(self) -> int:
        return len(self.entity_names)

    @property
    def n_relations(self) -> int:
        return len(self.relation_names)

    def split(self, name: str) -> np.ndarray:
        if name not in SPLITS:
            raise KeyError(f"unknown split {name!r}; expected one of {SPLITS}")
        return getattr(self, name)

    def inverse_of(self, relation: int) -> int:
        if not self.augmented:
            raise AugmentationError("graph has no inverse relations")
        nb = self.n_base_relations
        return relation + nb if relation < nb else relation - nb

    def triple_names(self, triple) -> tuple[str, str, str]:
        h, r, t = (int(x) for x in triple)
        return self.entity_names[h], self.relation_names[r], self.entity_names[t]

    def summary(self) -> dict:
        return {
            "entities": self.n_entities,
            "relations": self.n_relations,
            "base_relations": self.n_base_relations,
            "augmented": self.augmented,
            **{split: int(len(getattr(self, split))) for split in SPLITS},
        }


def _read_lines(path: Path):
    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.rstrip("\r\n")
            if not line.strip():
                continue
            yield line_no, line


def _read_triples(path: Path, order: str) -> list[tuple[str, str, str]]:
    pos = {c: order.index(c) for c in "hrt"}
    triples = []
    for line_no, line in _read_lines(path):
        parts = line.split("\t")
        if len(parts) != 3:
            raise ParseError(path, line_no, f"expected 3 tab-separated fields, got {len(parts)}")
        triples.append((parts[pos["h"]], parts[pos["r"]], parts[pos["t"]]))
    return triples


def _read_names(path: Path) -> list[str]:
    return [line.split("\t")[0] for _, line in _read_lines(path)]


def _read_descriptions(path: Path) -> dict[str, str]:
    out = {}
    for line_no, line in _read_lines(path):
        parts = line.split("\t", 1)
        if len(parts) != 2:
            raise ParseError(path, line_no, "expected name<TAB>description")
        out[parts[0]] = parts[1].strip()
    return out


def load_dataset(root_path, schema: DatasetSchema | None = None) -> KnowledgeGraph:
    """Read a triple-file dataset into a (non-augmented) KnowledgeGraph.

    Ids are dense and assigned in first-appearance order over
    train, valid, test, then any remaining names from the declared vocabulary
    sources (entity/relation lists, description file).
    """
    schema = schema or DatasetSchema()
    root = Path(root_path)
    raw = {}
    for split in SPLITS:
        path = root / schema.split_file(split)
        if not path.exists():
            raise DatasetError(f"missing {split} file: {path}")
        raw[split] = _read_triples(path, schema.order)
    if not raw["train"]:
        raise EmptySplitError(f"empty-split: {root / schema.train} has no triples")

    descriptions = {}
    if schema.descriptions and (root / schema.descriptions).exists():
        descriptions = _read_descriptions(root / schema.descriptions)
    declared_entities = _read_names(root / schema.entity_list) if schema.entity_list else []
    declared_relations = _read_names(root / schema.relation_list) if schema.relation_list else []
    return _assemble(raw, descriptions, declared_entities, declared_relations)


def _assemble(raw, descriptions, declared_entities=(), declared_relations=()) -> KnowledgeGraph:
    known_entities = {h for h, _, _ in raw["train"]} | {t for _, _, t in raw["train"]}
    known_entities |= set(declared_entities) | set(descriptions)
    known_relations = {r for _, r, _ in raw["train"]} | set(declared_relations)

    entities: dict[str, int] = {}
    relations: dict[str, int] = {}
    arrays = {}
    for split in SPLITS:
        rows = []
        for h, r, t in raw.get(split, ()):
            if split != "train":
                for name in (h, t):
                    if name not in known_entities:
                        raise UnknownSymbolError(f"entity {name!r} in {split} split is not in any vocabulary source")
                if r not in known_relations:
                    raise UnknownSymbolError(f"relation {r!r} in {split} split is not in any vocabulary source")
            hi = entities.setdefault(h, len(entities))
            ri = relations.setdefault(r, len(relations))
            ti = entities.setdefault(t, len(entities))
            rows.append((hi, ri, ti))
        arrays[split] = np.array(rows, dtype=np.int64).reshape(-1, 3)
    for name in list(declared_entities) + list(descriptions):
        entities.setdefault(name, len(entities))
    for name in declared_relations:
        relations.setdefault(name, len(relations))

    entity_names = tuple(entities)
    relation_names = tuple(relations)
    return KnowledgeGraph(
        entity_names=entity_names,
        relation_names=relation_names,
        n_base_relations=len(relation_names),
        entity_texts=tuple(descriptions.get(n) or n for n in entity_names),
        relation_texts=relation_names,
        **arrays,
    )


def from_triples(
    splits: Mapping[str, Iterable[tuple[str, str, str]]],
    descriptions: Mapping[str, str] | None = None,
) -> KnowledgeGraph:
    """Build a KnowledgeGraph from in-memory surface-name triples."""
    raw = {split: list(splits.get(split, ())) for split in SPLITS}
    if not raw["train"]:
        raise EmptySplitError("empty-split: no train triples")
    return _assemble(raw, dict(descriptions or {}))


def write_dataset(root, splits, descriptions: Mapping[str, str]) -> None:
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    schema = DatasetSchema()
    for split in SPLITS:
        with open(root / schema.split_file(split), "w", encoding="utf-8") as fh:
            for h, r, t in splits.get(split, ()):
                fh.write(f"{h}\t{r}\t{t}\n")
    with open(root / schema.descriptions, "w", encoding="utf-8") as fh:
        for name, text in descriptions.items():
            fh.write(f"{name}\t{text}\n")


def augment_inverses(kg: KnowledgeGraph) -> KnowledgeGraph:
    """Add ``(t, r + |R|, h)`` for every triple ``(h, r, t)`` in every split."""
    if kg.augmented:
        raise AugmentationError("graph is already augmented with inverse relations")
    nb = kg.n_base_relations
    splits = {}
    for split in SPLITS:
        arr = kg.split(split)
        inv = np.stack([arr[:, 2], arr[:, 1] + nb, arr[:, 0]], axis=1)
        splits[split] = np.concatenate([arr, inv], axis=0)
    return dataclasses.replace(
        kg,
        relation_names=kg.relation_names + tuple(INVERSE_PREFIX + n for n in kg.relation_names),
        relation_texts=kg.relation_texts + tuple(INVERSE_PREFIX + n for n in kg.relation_texts),
        augmented=True,
        relation_index=None,
        **splits,
    )


@dataclass(frozen=True)
class FilterIndex:
    """(head, relation) -> sorted tuple of known-true tails."""

    tails: Mapping[tuple[int, int], tuple[int, ...]]
    policy: str = "all-splits"

    def __getitem__(self, key) -> tuple[int, ...]:
        return self.tails.get((int(key[0]), int(key[1])), ())

    def __contains__(self, key) -> bool:
        return (int(key[0]), int(key[1])) in self.tails

    def __len__(self) -> int:
        return len(self.tails)

    def __iter__(self):
        return iter(self.tails)

    def to_json(self) -> dict:
        return {
            "policy": self.policy,
            "entries": [[h, r, list(ts)] for (h, r), ts in sorted(self.tails.items())],
        }

    @classmethod
    def from_json(cls, data: dict) -> "FilterIndex":
        tails = {(h, r): tuple(ts) for h, r, ts in data["entries"]}
        return cls(MappingProxyType(tails), data["policy"])


FILTER_POLICIES = {"all-splits": SPLITS, "train-only": ("train",)}


def build_filter_index(kg: KnowledgeGraph, policy: str = "all-splits") -> FilterIndex:
    if policy not in FILTER_POLICIES:
        raise ValueError(f"unknown filter policy {policy!r}; expected one of {sorted(FILTER_POLICIES)}")
    if not kg.augmented:
        raise AugmentationError("build the filter index on an inverse-augmented graph")
    sets: dict[tuple[int, int], set[int]] = {}
    for split in FILTER_POLICIES[policy]:
        for h, r, t in kg.split(split).tolist():
            sets.setdefault((h, r), set()).add(t)
    tails = {key: tuple(sorted(ts)) for key, ts in sets.items()}
    return FilterIndex(MappingProxyType(tails), policy)
