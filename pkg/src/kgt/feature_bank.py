"""Raw textual/structural feature matrices: encoding, caching and the KGTF file format."""

from __future__ import annotations

import hashlib
import logging
import os
import struct
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

log = logging.getLogger(__name__)

MAGIC = b"KGTF"
VERSION = 1
_HEADER = struct.Struct("<4sIQQ")
HEADER_SIZE = _HEADER.size  # 24 bytes: magic, u32 version, u64 rows, u64 cols

NGRAM = 3
N_BUCKETS = 4096


class FeatureFormatError(ValueError):
    pass


class EmbeddingServiceError(RuntimeError):
    pass


def as_feature_matrix(data) -> np.ndarray:
    m = np.ascontiguousarray(np.asarray(data, dtype="<f4"))
    if m.ndim != 2:
        raise FeatureFormatError(f"feature matrix must be 2-D, got shape {m.shape}")
    if not np.isfinite(m).all():
        raise FeatureFormatError("feature matrix contains non-finite values")
    return m


def save_features(m, path) -> None:
    """Write a float32 matrix as KGTF; the write is atomic."""
    m = as_feature_matrix(m)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = _HEADER.pack(MAGIC, VERSION, m.shape[0], m.shape[1]) + m.tobytes(order="C")
    _atomic_write(path, payload)


def load_features(path) -> np.ndarray:
    blob = Path(path).read_bytes()
    if len(blob) < HEADER_SIZE:
        raise FeatureFormatError(f"{path}: truncated header")
    magic, version, rows, cols = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise FeatureFormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise FeatureFormatError(f"{path}: unsupported version {version}")
    expected = HEADER_SIZE + 4 * rows * cols
    if len(blob) != expected:
        raise FeatureFormatError(f"{path}: expected {expected} bytes, found {len(blob)}")
    return np.frombuffer(blob, dtype="<f4", offset=HEADER_SIZE).reshape(rows, cols).copy()


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _atomic_write(path: Path, payload: bytes) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# --- deterministic offline encoder -------------------------------------------------


def char_ngrams(text: str, n: int = NGRAM) -> list[str]:
    return [text[i:i + n] for i in range(len(text) - n + 1)]


def ngram_bucket(gram: str, n_buckets: int = N_BUCKETS) -> int:
    digest = hashlib.blake2b(gram.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little") % n_buckets


def ngram_bag(text: str, n_buckets: int = N_BUCKETS) -> np.ndarray:
    bag = np.zeros(n_buckets, dtype=np.int64)
    for gram in char_ngrams(text):
        bag[ngram_bucket(gram, n_buckets)] += 1
    return bag


def sign_matrix(dim: int, seed: int, n_buckets: int = N_BUCKETS) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return np.where(rng.random((n_buckets, dim)) < 0.5, -1, 1).astype(np.int64)


def encode_text_deterministic(texts: Sequence[str], dim: int, seed: int = 0) -> np.ndarray:
    """Hashed character-trigram bag, projected by a seeded +-1 matrix, L2-normalised per row.

    Projection is done in integer arithmetic, so rows are identical across
    platforms. Texts with no trigram map to the zero row.
    """
    if dim <= 0:
        raise ValueError("dim must be positive")
    signs = sign_matrix(dim, seed)
    out = np.zeros((len(texts), dim), dtype=np.float32)
    for i, text in enumerate(texts):
        row = ngram_bag(text) @ signs
        norm = np.sqrt(float((row * row).sum()))
        if norm > 0:
            out[i] = row / norm
    return out


# --- remote embedding service ------------------------------------------------------


@dataclass(frozen=True)
class EmbeddingEndpoint:
    """An OpenAI-compatible ``/embeddings`` endpoint."""

    url: str = "https://api.openai.com/v1/embeddings"
    model: str = "text-embedding-3-small"
    dim: int = 1536
    token: str | None = None
    batch_size: int = 64
    concurrency: int = 4
    retries: int = 3
    backoff: float = 1.0
    timeout: float = 60.0

    @classmethod
    def from_env(cls, **overrides) -> "EmbeddingEndpoint":
        env = {
            "url": os.environ.get("KGT_EMBED_URL"),
            "model": os.environ.get("KGT_EMBED_MODEL"),
            "token": os.environ.get("KGT_EMBED_TOKEN") or os.environ.get("OPENAI_API_KEY"),
        }
        kwargs = {k: v for k, v in env.items() if v}
        kwargs.update(overrides)
        return cls(**kwargs)


def cache_key(text: str, model: str) -> str:
    return hashlib.sha256(f"{model}\x00{text}".encode("utf-8")).hexdigest()


def _request_batch(client, endpoint: EmbeddingEndpoint, batch: list[str]) -> list[list[float]]:
    headers = {"Authorization": f"Bearer {endpoint.token}"} if endpoint.token else {}
    resp = client.post(endpoint.url, json={"model": endpoint.model, "input": batch},
                       headers=headers, timeout=endpoint.timeout)
    resp.raise_for_status()
    data = sorted(resp.json()["data"], key=lambda d: d["index"])
    if len(data) != len(batch):
        raise EmbeddingServiceError(f"service returned {len(data)} vectors for {len(batch)} inputs")
    return [d["embedding"] for d in data]


def encode_text_remote(texts: Sequence[str], endpoint: EmbeddingEndpoint, cache_dir,
                       client=None) -> np.ndarray:
    """Embed ``texts`` through the service, one cached vector file per content hash."""
    cache_dir = Path(cache_dir)
    cache_dir.mkdir(parents=True, exist_ok=True)
    keys = [cache_key(t, endpoint.model) for t in texts]
    missing: dict[str, str] = {}
    for key, text in zip(keys, texts):
        if not (cache_dir / f"{key}.kgtf").exists():
            missing.setdefault(key, text)

    if missing:
        import httpx

        items = list(missing.items())
        batches = [items[i:i + endpoint.batch_size] for i in range(0, len(items), endpoint.batch_size)]
        own_client = client is None
        client = client or httpx.Client()

        def run(idx_batch):
            idx, batch = idx_batch
            err = None
            for attempt in range(endpoint.retries + 1):
                try:
                    vectors = _request_batch(client, endpoint, [t for _, t in batch])
                    break
                except (httpx.HTTPError, KeyError, ValueError, EmbeddingServiceError) as exc:
                    err = exc
                    log.warning("embedding batch %d attempt %d failed: %s", idx, attempt + 1, exc)
                    if attempt < endpoint.retries:
                        time.sleep(endpoint.backoff * 2 ** attempt)
            else:
                raise EmbeddingServiceError(
                    f"batch {idx} ({len(batch)} texts, first {batch[0][1][:40]!r}) failed: {err}")
            for (key, _), vec in zip(batch, vectors):
                if len(vec) != endpoint.dim:
                    raise EmbeddingServiceError(
                        f"batch {idx}: dimension {len(vec)} does not match configured {endpoint.dim}")
                save_features(np.asarray(vec, dtype=np.float32)[None, :], cache_dir / f"{key}.kgtf")

        try:
            with ThreadPoolExecutor(max_workers=max(1, endpoint.concurrency)) as pool:
                list(pool.map(run, enumerate(batches)))
        finally:
            if own_client:
                client.close()

    rows = [load_features(cache_dir / f"{key}.kgtf")[0] for key in keys]
    out = np.stack(rows).astype(np.float32) if rows else np.zeros((0, endpoint.dim), np.float32)
    if out.shape[1] != endpoint.dim:
        raise EmbeddingServiceError(f"cached dimension {out.shape[1]} does not match configured {endpoint.dim}")
    return out


# --- the four-matrix bank ----------------------------------------------------------

BANK_FILES = {
    "entity_text": "entity_text.kgtf",
    "entity_struct": "entity_struct.kgtf",
    "relation_text": "relation_text.kgtf",
    "relation_struct": "relation_struct.kgtf",
}


@dataclass
class FeatureBank:
    entity_text: np.ndarray
    entity_struct: np.ndarray
    relation_text: np.ndarray
    relation_struct: np.ndarray

    def __post_init__(self):
        for name in BANK_FILES:
            setattr(self, name, as_feature_matrix(getattr(self, name)))
        if self.entity_text.shape[1] != self.relation_text.shape[1]:
            raise FeatureFormatError("entity and relation text dims differ")
        if self.entity_struct.shape[1] != self.relation_struct.shape[1]:
            raise FeatureFormatError("entity and relation struct dims differ")
        if self.entity_text.shape[0] != self.entity_struct.shape[0]:
            raise FeatureFormatError("entity text/struct row counts differ")
        if self.relation_text.shape[0] != self.relation_struct.shape[0]:
            raise FeatureFormatError("relation text/struct row counts differ")

    @property
    def d_text(self) -> int:
        return self.entity_text.shape[1]

    @property
    def d_struct(self) -> int:
        return self.entity_struct.shape[1]

    @property
    def n_entities(self) -> int:
        return self.entity_text.shape[0]

    @property
    def n_relations(self) -> int:
        return self.relation_text.shape[0]

    def check_graph(self, kg) -> None:
        if self.n_entities != kg.n_entities or self.n_relations != kg.n_relations:
            raise FeatureFormatError(
                f"feature rows ({self.n_entities} entities, {self.n_relations} relations) do not match "
                f"graph vocabulary ({kg.n_entities}, {kg.n_relations})")

    def save(self, directory) -> dict[str, str]:
        directory = Path(directory)
        paths = {}
        for name, fname in BANK_FILES.items():
            save_features(getattr(self, name), directory / fname)
            paths[name] = str(directory / fname)
        return paths

    @classmethod
    def load(cls, directory) -> "FeatureBank":
        directory = Path(directory)
        return cls(**{name: load_features(directory / fname) for name, fname in BANK_FILES.items()})


def entity_text_inputs(kg) -> list[str]:
    return list(kg.entity_texts)


def relation_text_inputs(kg) -> list[str]:
    return list(kg.relation_texts)
