"""Query-time pipeline: unit search, max-sim passage aggregation, contexts.

Passage scores come from the best-scoring retrieved unit of each passage.
An oversampled unit fetch (initial factor, then doubling) guarantees k unique
passages whenever the corpus has them; reader contexts concatenate unit texts
in raw rank order and cut at a word budget.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

from .corpus import Granularity
from .index import ScoredHit, ShardedIndex, search


class ProvenanceError(RuntimeError):
    """A retrieved unit has no passage in the provenance map."""


@dataclass(frozen=True)
class RetrievalConfig:
    granularity: Granularity
    k: int
    oversample_initial: int = 5
    oversample_max_rounds: int = 6

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.oversample_initial < 1:
            raise ValueError("oversample_initial must be >= 1")
        if self.oversample_max_rounds < 1:
            raise ValueError("oversample_max_rounds must be >= 1")


@dataclass(frozen=True)
class ScoredPassage:
    passage_id: str
    score: float
    best_unit_id: str


@dataclass(frozen=True)
class AssembledContext:
    text: str
    word_count: int
    source_unit_ids: tuple[str, ...]


def retrieve_units(
    index: ShardedIndex, query_vector: Sequence[float], m: int
) -> list[ScoredHit]:
    """Raw ranked units; thin wrapper kept for answer-position analysis."""
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    return search(index, query_vector, m)


def retrieve_passages(
    index: ShardedIndex,
    provenance: Mapping[str, str],
    query_vector: Sequence[float],
    config: RetrievalConfig,
) -> list[ScoredPassage]:
    """Top-k unique passages scored by max unit similarity.

    Fetches ``oversample_initial * k`` units and doubles the fetch until k
    unique passages appear, the index is exhausted, or the round cap is hit.
    Output is ordered (score desc, passage_id asc) and truncated to k.
    """
    total = index.count
    if total == 0:
        return []
    m = config.oversample_initial * config.k
    rounds = 0
    while True:
        hits = search(index, query_vector, min(m, total))
        best: dict[str, ScoredHit] = {}
        for hit in hits:
            # Hits arrive (score desc, unit_id asc); the first unit seen for a
            # passage is its max-sim witness.
            passage_id = provenance.get(hit.unit_id)
            if passage_id is None:
                raise ProvenanceError(f"no provenance for unit {hit.unit_id!r}")
            if passage_id not in best:
                best[passage_id] = hit
        if len(best) >= config.k or m >= total or rounds >= config.oversample_max_rounds:
            break
        m *= 2
        rounds += 1
    passages = [
        ScoredPassage(passage_id, hit.score, hit.unit_id)
        for passage_id, hit in best.items()
    ]
    passages.sort(key=lambda p: (-p.score, p.passage_id))
    return passages[: config.k]


def assemble_context(
    ranked_units: Sequence[tuple[str, str]], l: int
) -> AssembledContext:
    """First ``l`` whitespace words of the concatenated ranked unit texts.

    A unit cut by the budget contributes its word prefix; units past the cut
    contribute nothing and are not listed as sources.
    """
    if l < 1:
        raise ValueError(f"l must be >= 1, got {l}")
    words: list[str] = []
    sources: list[str] = []
    remaining = l
    for unit_id, text in ranked_units:
        unit_words = text.split()
        if not unit_words:
            continue
        take = unit_words[:remaining]
        words.extend(take)
        sources.append(unit_id)
        remaining -= len(take)
        if remaining == 0:
            break
    return AssembledContext(
        text=" ".join(words), word_count=len(words), source_unit_ids=tuple(sources)
    )
