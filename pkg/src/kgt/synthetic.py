"""Synthetic compositional knowledge graph used for desk-scale checks.

Each entity is a (type, slot) pair. Every relation moves the type by a fixed
shift and the slot by a fixed even shift, so relations compose and each
(head, relation) has exactly one tail. Descriptions name the entity's type and
its zone (slot // 2), or only the type with ``describe_zone=False``; the slot
parity is never written down and is only recoverable from the link pattern,
since every relation preserves it.
"""

from __future__ import annotations

import numpy as np

from .kg_store import KnowledgeGraph, from_triples, write_dataset

TYPE_WORDS = ("city", "river", "painter", "company", "film", "novel", "planet", "song",
              "bridge", "island", "festival", "league")
ZONE_WORDS = ("northern", "southern", "eastern", "western", "central", "coastal")
RELATION_WORDS = ("borders", "inspired", "founded", "adapted", "orbits", "hosts",
                  "sponsors", "names", "crosses", "rivals", "covers", "funds")
_SYLLABLES = ("ka", "lo", "mi", "ne", "ru", "ta", "vi", "so", "de", "pa", "zu", "fe",
              "go", "hi", "ja", "qu", "bo", "we", "xi", "ya")


def _names(n: int, rng: np.random.Generator) -> list[str]:
    seen: set[str] = set()
    out = []
    while len(out) < n:
        name = "".join(rng.choice(_SYLLABLES, size=3)).capitalize()
        if name not in seen:
            seen.add(name)
            out.append(name)
    return out


def synthetic_triples(n_types=8, n_slots=8, n_relations=8, train_frac=0.8, valid_frac=0.1, seed=0,
                      describe_zone=True):
    """Return ``(splits, descriptions)`` of surface-name triples."""
    if n_slots % 2:
        raise ValueError("n_slots must be even")
    if n_types > len(TYPE_WORDS) or n_slots // 2 > len(ZONE_WORDS) or n_relations > len(RELATION_WORDS):
        raise ValueError("synthetic graph too large for the word lists")
    rng = np.random.default_rng(seed)
    names = _names(n_types * n_slots, rng)

    def ent(tau, slot):
        return names[tau * n_slots + slot]

    def describe(tau, slot):
        text = f"{ent(tau, slot)} is a {TYPE_WORDS[tau]}"
        return f"{text} of the {ZONE_WORDS[slot // 2]} zone" if describe_zone else text

    descriptions = {ent(tau, slot): describe(tau, slot) for tau in range(n_types) for slot in range(n_slots)}
    n_zones = n_slots // 2
    type_shift = rng.choice(np.arange(1, n_types), size=n_relations, replace=n_relations >= n_types)
    zone_shift = rng.integers(0, n_zones, size=n_relations)

    triples = []
    for r in range(n_relations):
        for tau in range(n_types):
            for slot in range(n_slots):
                t_tau = (tau + int(type_shift[r])) % n_types
                t_slot = (slot + 2 * int(zone_shift[r])) % n_slots
                triples.append((ent(tau, slot), RELATION_WORDS[r], ent(t_tau, t_slot)))

    order = rng.permutation(len(triples))
    n_train = int(round(train_frac * len(triples)))
    n_valid = int(round(valid_frac * len(triples)))
    splits = {
        "train": [triples[i] for i in order[:n_train]],
        "valid": [triples[i] for i in order[n_train:n_train + n_valid]],
        "test": [triples[i] for i in order[n_train + n_valid:]],
    }
    return splits, descriptions


def make_synthetic_kg(**kwargs) -> KnowledgeGraph:
    splits, descriptions = synthetic_triples(**kwargs)
    return from_triples(splits, descriptions)


def write_synthetic_dataset(root, **kwargs) -> None:
    splits, descriptions = synthetic_triples(**kwargs)
    write_dataset(root, splits, descriptions)
