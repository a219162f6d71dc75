"""Sharded exact inner-product search with checksummed persistence.

Rows are split into contiguous shards (default 8); each shard is searched
exactly and the per-shard top lists are merged, so results are identical to
a single brute-force scan. Ties order by (score descending, unit id
ascending) to keep every search deterministic.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .embed import EmbeddingMatrix, load_embeddings_ex, save_embeddings


class IndexConfigError(ValueError):
    """Invalid index construction parameters."""


class DimensionMismatchError(ValueError):
    """Query dimension does not match the index."""


class IndexPersistenceError(Exception):
    """Base for index load failures."""


class MissingShardError(IndexPersistenceError):
    """A shard file named by the manifest is absent."""


class ShardChecksumError(IndexPersistenceError):
    """A shard file does not match its manifest checksum."""


class ManifestError(IndexPersistenceError):
    """The manifest is missing, malformed, or inconsistent with shards."""


@dataclass(frozen=True)
class ScoredHit:
    unit_id: str
    score: float


@dataclass(frozen=True)
class Shard:
    shard_id: int
    ids: tuple[str, ...]
    vectors: np.ndarray

    @property
    def size(self) -> int:
        return len(self.ids)


@dataclass(frozen=True)
class ShardedIndex:
    dim: int
    shards: tuple[Shard, ...]

    @property
    def num_shards(self) -> int:
        return len(self.shards)

    @property
    def count(self) -> int:
        return sum(s.size for s in self.shards)


def build_index(matrix: EmbeddingMatrix, num_shards: int = 8) -> ShardedIndex:
    """Assign row i to shard floor(i * num_shards / count), contiguously."""
    if num_shards < 1:
        raise IndexConfigError(f"num_shards must be >= 1, got {num_shards}")
    count = matrix.count
    shards: list[Shard] = []
    start = 0
    for shard_id in range(num_shards):
        end = start
        while end < count and end * num_shards // count == shard_id:
            end += 1
        shards.append(
            Shard(
                shard_id=shard_id,
                ids=matrix.ids[start:end],
                vectors=matrix.vectors[start:end],
            )
        )
        start = end
    assert start == count
    return ShardedIndex(dim=matrix.dim, shards=tuple(shards))


def _shard_top(shard: Shard, query: np.ndarray, m: int) -> list[ScoredHit]:
    if shard.size == 0:
        return []
    scores = shard.vectors @ query
    if m >= shard.size:
        candidates = range(shard.size)
    else:
        # Keep every row tied with the m-th score so id tie-breaks stay exact.
        kth = np.partition(scores, shard.size - m)[shard.size - m]
        candidates = np.nonzero(scores >= kth)[0]
    order = sorted(candidates, key=lambda i: (-scores[i], shard.ids[i]))[:m]
    return [ScoredHit(shard.ids[i], float(scores[i])) for i in order]


def search(index: ShardedIndex, query: Sequence[float], top_m: int) -> list[ScoredHit]:
    """Exact top-m by inner product, ordered (score desc, unit_id asc)."""
    if top_m < 1:
        raise ValueError(f"top_m must be >= 1, got {top_m}")
    query = np.asarray(query, dtype=np.float32)
    if query.shape != (index.dim,):
        raise DimensionMismatchError(
            f"query has shape {query.shape}, index dim is {index.dim}"
        )
    merged: list[ScoredHit] = []
    for shard in index.shards:
        merged.extend(_shard_top(shard, query, top_m))
    merged.sort(key=lambda hit: (-hit.score, hit.unit_id))
    return merged[:top_m]


_MANIFEST_NAME = "manifest.json"


def _shard_filename(shard_id: int) -> str:
    return f"shard_{shard_id:05d}.grem"


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for block in iter(lambda: handle.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def save_index(index: ShardedIndex, path: str | Path) -> None:
    """Write one file per shard plus a checksummed manifest into a directory."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    counts: list[int] = []
    checksums: list[str] = []
    for shard in index.shards:
        shard_path = root / _shard_filename(shard.shard_id)
        save_embeddings(
            EmbeddingMatrix(ids=shard.ids, vectors=shard.vectors),
            shard_path,
            reserved=shard.shard_id,
        )
        counts.append(shard.size)
        checksums.append(_sha256(shard_path))
    manifest = {
        "dim": index.dim,
        "num_shards": index.num_shards,
        "shard_counts": counts,
        "shard_checksums": checksums,
    }
    with open(root / _MANIFEST_NAME, "w", encoding="utf-8") as handle:
        json.dump(manifest, handle, indent=2)
        handle.write("\n")


def load_index(path: str | Path) -> ShardedIndex:
    root = Path(path)
    manifest_path = root / _MANIFEST_NAME
    if not manifest_path.exists():
        raise ManifestError(f"no manifest at {manifest_path}")
    try:
        with open(manifest_path, encoding="utf-8") as handle:
            manifest = json.load(handle)
        dim = int(manifest["dim"])
        num_shards = int(manifest["num_shards"])
        counts = list(manifest["shard_counts"])
        checksums = list(manifest["shard_checksums"])
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise ManifestError(f"malformed manifest {manifest_path}: {exc}") from exc
    if len(counts) != num_shards or len(checksums) != num_shards:
        raise ManifestError(
            f"manifest lists {len(counts)} counts and {len(checksums)} checksums "
            f"for {num_shards} shards"
        )
    shards: list[Shard] = []
    for shard_id in range(num_shards):
        shard_path = root / _shard_filename(shard_id)
        if not shard_path.exists():
            raise MissingShardError(f"missing shard file for shard {shard_id}: {shard_path}")
        actual = _sha256(shard_path)
        if actual != checksums[shard_id]:
            raise ShardChecksumError(
                f"checksum mismatch for shard {shard_id}: "
                f"manifest {checksums[shard_id]}, file {actual}"
            )
        matrix, reserved = load_embeddings_ex(shard_path)
        if reserved != shard_id:
            raise ManifestError(
                f"shard file {shard_path} tagged {reserved}, expected {shard_id}"
            )
        if matrix.count != counts[shard_id]:
            raise ManifestError(
                f"shard {shard_id} has {matrix.count} rows, manifest says "
                f"{counts[shard_id]}"
            )
        if matrix.dim != dim:
            raise ManifestError(
                f"shard {shard_id} dim {matrix.dim} does not match manifest dim {dim}"
            )
        shards.append(Shard(shard_id=shard_id, ids=matrix.ids, vectors=matrix.vectors))
    return ShardedIndex(dim=dim, shards=tuple(shards))
