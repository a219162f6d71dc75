"""Embedding matrices, pluggable providers, and the binary vector file format.

File layout (all little-endian): magic ``GREM`` (4 bytes), version u32,
reserved u32 (zero for plain embedding files; shard id in index shard files),
dim u32, count u64; then ``count`` length-prefixed UTF-8 ids (u32 length);
then ``count x dim`` float32 values, row-major.
"""

from __future__ import annotations

import hashlib
import struct
import time
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO, Callable, Protocol, Sequence

import numpy as np
import requests

MAGIC = b"GREM"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIIIQ")


class EmbeddingFileError(Exception):
    """Base for embedding file format failures."""


class HeaderError(EmbeddingFileError):
    """Bad magic, unsupported version, or invalid header fields."""


class TruncatedFileError(EmbeddingFileError):
    """File ended before the declared payload."""


class DuplicateIdError(EmbeddingFileError):
    """The id section contains a repeated id."""


class ProviderConfigError(Exception):
    """Fatal provider misconfiguration, e.g. inconsistent dimensions."""


class RemoteEmbeddingError(Exception):
    """Remote transport failed after retries; carries the attempt count."""

    def __init__(self, message: str, attempts: int) -> None:
        super().__init__(f"{message} (after {attempts} attempts)")
        self.attempts = attempts


@dataclass(frozen=True)
class EmbeddingMatrix:
    """Id-aligned vectors for one granularity; immutable after construction."""

    ids: tuple[str, ...]
    vectors: np.ndarray  # (count, dim) float32

    def __post_init__(self) -> None:
        vectors = np.asarray(self.vectors, dtype=np.float32)
        if vectors.ndim != 2:
            raise ValueError(f"vectors must be 2-D, got shape {vectors.shape}")
        if vectors.shape[1] < 1:
            raise ValueError("vector dimension must be positive")
        if len(self.ids) != vectors.shape[0]:
            raise ValueError(
                f"{len(self.ids)} ids for {vectors.shape[0]} vector rows"
            )
        if len(set(self.ids)) != len(self.ids):
            raise ValueError("ids must be unique")
        if vectors.size and not np.all(np.isfinite(vectors)):
            raise ValueError("vectors must be finite")
        vectors = np.ascontiguousarray(vectors)
        vectors.setflags(write=False)
        object.__setattr__(self, "ids", tuple(self.ids))
        object.__setattr__(self, "vectors", vectors)

    @property
    def dim(self) -> int:
        return int(self.vectors.shape[1])

    @property
    def count(self) -> int:
        return int(self.vectors.shape[0])


def _char_trigrams(text: str) -> Counter[str]:
    normalized = " ".join(text.lower().split())
    if not normalized:
        return Counter()
    if len(normalized) < 3:
        return Counter({normalized: 1})
    return Counter(normalized[i : i + 3] for i in range(len(normalized) - 2))


def deterministic_embed(text: str, dim: int, seed: int) -> np.ndarray:
    """Hashed character-trigram embedding, L2-normalized.

    Each trigram is hashed (keyed by the seed) to a coordinate and a sign,
    so the vector is a fixed pseudo-random projection of the trigram bag.
    Pure function of (text, dim, seed); empty text maps to the first basis
    vector.
    """
    if dim < 2:
        raise ValueError(f"dim must be >= 2, got {dim}")
    vector = np.zeros(dim, dtype=np.float32)
    grams = _char_trigrams(text)
    if not grams:
        vector[0] = 1.0
        return vector
    key = seed.to_bytes(8, "little", signed=True)
    for gram, count in grams.items():
        digest = hashlib.blake2b(gram.encode("utf-8"), key=key, digest_size=8).digest()
        value = int.from_bytes(digest, "little")
        bucket = (value >> 1) % dim
        sign = 1.0 if value & 1 else -1.0
        vector[bucket] += sign * count
    norm = float(np.linalg.norm(vector))
    if norm == 0.0:
        vector[:] = 0.0
        vector[0] = 1.0
        return vector
    return vector / np.float32(norm)


class EmbeddingProvider(Protocol):
    """One dim-length vector per input text, in input order."""

    dim: int
    normalize: bool

    def embed(self, texts: Sequence[str]) -> np.ndarray: ...


class DeterministicProvider:
    """Test and toy-corpus embedder backed by :func:`deterministic_embed`."""

    def __init__(self, dim: int = 256, seed: int = 42, normalize: bool = True) -> None:
        if dim < 2:
            raise ProviderConfigError(f"dim must be >= 2, got {dim}")
        self.dim = dim
        self.seed = seed
        self.normalize = normalize

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        if not texts:
            return np.zeros((0, self.dim), dtype=np.float32)
        return np.stack([deterministic_embed(t, self.dim, self.seed) for t in texts])


def _unit_normalize(vectors: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(vectors, axis=1, keepdims=True)
    if np.any(norms == 0.0):
        raise ProviderConfigError("cannot normalize a zero vector")
    return (vectors / norms).astype(np.float32)


class FileProvider:
    """Serves precomputed vectors from an embedding file keyed by exact text."""

    def __init__(self, path: str | Path, normalize: bool = False) -> None:
        matrix = load_embeddings(path)
        self.dim = matrix.dim
        self.normalize = normalize
        self._by_key = dict(zip(matrix.ids, matrix.vectors))

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        missing = [t for t in texts if t not in self._by_key]
        if missing:
            raise ProviderConfigError(
                f"embedding file has no vector for {len(missing)} text(s), "
                f"first missing: {missing[0]!r}"
            )
        if not texts:
            return np.zeros((0, self.dim), dtype=np.float32)
        vectors = np.stack([self._by_key[t] for t in texts])
        return _unit_normalize(vectors) if self.normalize else vectors


class RemoteProvider:
    """HTTP client for the /embed endpoint of a model service.

    Transport failures are retried with exponential backoff (3 retries
    starting at 200 ms); in-flight batch requests are bounded.
    """

    def __init__(
        self,
        endpoint: str,
        model_name: str,
        batch_size: int = 64,
        normalize: bool = False,
        max_retries: int = 3,
        backoff_start: float = 0.2,
        max_in_flight: int = 4,
        timeout: float = 60.0,
        session: requests.Session | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ) -> None:
        if batch_size < 1:
            raise ProviderConfigError(f"batch_size must be >= 1, got {batch_size}")
        self.endpoint = endpoint.rstrip("/")
        self.model_name = model_name
        self.batch_size = batch_size
        self.normalize = normalize
        self.max_retries = max_retries
        self.backoff_start = backoff_start
        self.max_in_flight = max(1, max_in_flight)
        self.timeout = timeout
        self.dim = 0  # learned from the first response
        self._session = session or requests.Session()
        self._sleep = sleep

    def _post_batch(self, batch: Sequence[str]) -> np.ndarray:
        url = f"{self.endpoint}/embed"
        payload = {"model": self.model_name, "texts": list(batch)}
        attempts = 0
        last_error: Exception | None = None
        while attempts <= self.max_retries:
            attempts += 1
            try:
                response = self._session.post(url, json=payload, timeout=self.timeout)
            except requests.RequestException as exc:
                last_error = exc
            else:
                if response.status_code >= 500:
                    last_error = RuntimeError(
                        f"server error {response.status_code} from {url}"
                    )
                elif response.status_code >= 400:
                    raise ProviderConfigError(
                        f"embedding request rejected ({response.status_code}): "
                        f"{response.text[:200]}"
                    )
                else:
                    return self._parse_response(response.json(), len(batch))
            if attempts <= self.max_retries:
                self._sleep(self.backoff_start * (2 ** (attempts - 1)))
        raise RemoteEmbeddingError(f"embedding request failed: {last_error}", attempts)

    def _parse_response(self, body: dict, expected: int) -> np.ndarray:
        try:
            dim = int(body["dim"])
            rows = body["embeddings"]
        except (KeyError, TypeError, ValueError) as exc:
            raise ProviderConfigError(f"malformed embed response: {exc}") from exc
        if len(rows) != expected:
            raise ProviderConfigError(
                f"embed response has {len(rows)} vectors for {expected} texts"
            )
        matrix = np.asarray(rows, dtype=np.float32)
        if matrix.shape != (expected, dim):
            raise ProviderConfigError(
                f"embed response shape {matrix.shape} does not match dim {dim}"
            )
        if self.dim == 0:
            self.dim = dim
        elif dim != self.dim:
            raise ProviderConfigError(
                f"dimension changed across batches: {self.dim} then {dim}"
            )
        return matrix

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        if not texts:
            return np.zeros((0, self.dim or 1), dtype=np.float32)
        batches = [
            texts[i : i + self.batch_size]
            for i in range(0, len(texts), self.batch_size)
        ]
        if len(batches) == 1:
            parts = [self._post_batch(batches[0])]
        else:
            workers = min(self.max_in_flight, len(batches))
            with ThreadPoolExecutor(max_workers=workers) as pool:
                parts = list(pool.map(self._post_batch, batches))
        vectors = np.concatenate(parts, axis=0)
        return _unit_normalize(vectors) if self.normalize else vectors


def embed_batch(
    texts: Sequence[str],
    provider: EmbeddingProvider,
    ids: Sequence[str] | None = None,
) -> EmbeddingMatrix:
    """Embed texts in order; row i embeds texts[i]. Ids default to indices."""
    if ids is None:
        ids = [str(i) for i in range(len(texts))]
    if len(ids) != len(texts):
        raise ValueError(f"{len(ids)} ids for {len(texts)} texts")
    vectors = provider.embed(texts)
    if vectors.shape[0] != len(texts):
        raise ProviderConfigError(
            f"provider returned {vectors.shape[0]} vectors for {len(texts)} texts"
        )
    if provider.normalize and len(texts):
        norms = np.linalg.norm(vectors, axis=1)
        if not np.allclose(norms, 1.0, atol=1e-5):
            raise ProviderConfigError(
                "provider is flagged normalized but returned non-unit vectors"
            )
    if not len(texts):
        vectors = np.zeros((0, provider.dim or 1), dtype=np.float32)
    return EmbeddingMatrix(ids=tuple(ids), vectors=vectors)


def _read_exact(handle: BinaryIO, n: int, what: str) -> bytes:
    data = handle.read(n)
    if len(data) != n:
        raise TruncatedFileError(
            f"truncated embedding file: needed {n} bytes for {what}, got {len(data)}"
        )
    return data


def save_embeddings(
    matrix: EmbeddingMatrix, path: str | Path, reserved: int = 0
) -> None:
    """Write the binary embedding file; load(save(m)) is bit-exact."""
    with open(path, "wb") as handle:
        handle.write(
            _HEADER.pack(MAGIC, FORMAT_VERSION, reserved, matrix.dim, matrix.count)
        )
        for unit_id in matrix.ids:
            encoded = unit_id.encode("utf-8")
            handle.write(struct.pack("<I", len(encoded)))
            handle.write(encoded)
        handle.write(np.ascontiguousarray(matrix.vectors, dtype="<f4").tobytes())


def load_embeddings_ex(path: str | Path) -> tuple[EmbeddingMatrix, int]:
    """Load an embedding file, returning the matrix and the reserved field."""
    with open(path, "rb") as handle:
        header = _read_exact(handle, _HEADER.size, "header")
        magic, version, reserved, dim, count = _HEADER.unpack(header)
        if magic != MAGIC:
            raise HeaderError(f"bad magic {magic!r}, expected {MAGIC!r}")
        if version != FORMAT_VERSION:
            raise HeaderError(f"unsupported version {version}, expected {FORMAT_VERSION}")
        if dim == 0:
            raise HeaderError("header dim must be positive")
        ids: list[str] = []
        seen: set[str] = set()
        for i in range(count):
            (length,) = struct.unpack("<I", _read_exact(handle, 4, f"id {i} length"))
            unit_id = _read_exact(handle, length, f"id {i}").decode("utf-8")
            if unit_id in seen:
                raise DuplicateIdError(f"duplicate id {unit_id!r} in {path}")
            seen.add(unit_id)
            ids.append(unit_id)
        payload = _read_exact(handle, count * dim * 4, "vector payload")
        vectors = np.frombuffer(payload, dtype="<f4").reshape(count, dim).copy()
    return EmbeddingMatrix(ids=tuple(ids), vectors=vectors), reserved


def load_embeddings(path: str | Path) -> EmbeddingMatrix:
    matrix, _ = load_embeddings_ex(path)
    return matrix
