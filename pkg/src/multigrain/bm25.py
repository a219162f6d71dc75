"""Okapi BM25 over passages, built from scratch for popularity estimation.

IDF uses the non-negative ln(1 + (N - df + 0.5) / (df + 0.5)) form, so a
query term absent from a document never changes that document's score.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass
from typing import Mapping, Sequence

_TOKEN_RE = re.compile(r"[a-z0-9]+")


def bm25_tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


@dataclass
class Bm25Index:
    k1: float
    b: float
    postings: dict[str, list[tuple[str, int]]]  # term -> [(passage_id, tf)]
    doc_lengths: dict[str, int]
    avg_doc_length: float
    doc_tokens: dict[str, list[str]]  # kept for phrase occurrence counting

    @property
    def num_docs(self) -> int:
        return len(self.doc_lengths)


def bm25_build(
    passages: Mapping[str, str] | Sequence[tuple[str, str]],
    k1: float = 0.9,
    b: float = 0.4,
) -> Bm25Index:
    if k1 < 0:
        raise ValueError(f"k1 must be >= 0, got {k1}")
    if not 0 <= b <= 1:
        raise ValueError(f"b must be in [0, 1], got {b}")
    items = passages.items() if isinstance(passages, Mapping) else passages
    postings: dict[str, list[tuple[str, int]]] = {}
    doc_lengths: dict[str, int] = {}
    doc_tokens: dict[str, list[str]] = {}
    for passage_id, text in items:
        if passage_id in doc_lengths:
            raise ValueError(f"duplicate passage id {passage_id!r}")
        tokens = bm25_tokenize(text)
        doc_tokens[passage_id] = tokens
        doc_lengths[passage_id] = len(tokens)
        for term, tf in Counter(tokens).items():
            postings.setdefault(term, []).append((passage_id, tf))
    n = len(doc_lengths)
    avg = sum(doc_lengths.values()) / n if n else 0.0
    return Bm25Index(
        k1=k1,
        b=b,
        postings=postings,
        doc_lengths=doc_lengths,
        avg_doc_length=avg,
        doc_tokens=doc_tokens,
    )


def bm25_scores(index: Bm25Index, query: str) -> dict[str, float]:
    """Score every passage for the query; absent terms contribute zero."""
    n = index.num_docs
    scores: dict[str, float] = {pid: 0.0 for pid in index.doc_lengths}
    if n == 0:
        return scores
    for term in bm25_tokenize(query):
        plist = index.postings.get(term)
        if not plist:
            continue
        df = len(plist)
        idf = math.log(1.0 + (n - df + 0.5) / (df + 0.5))
        for passage_id, tf in plist:
            dl = index.doc_lengths[passage_id]
            denom = tf + index.k1 * (
                1.0 - index.b + index.b * dl / index.avg_doc_length
            )
            scores[passage_id] += idf * tf * (index.k1 + 1.0) / denom
    return scores


def bm25_search(index: Bm25Index, query: str, n: int) -> list[tuple[str, float]]:
    """Top-n passages ordered (score desc, passage_id asc)."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    scores = bm25_scores(index, query)
    ranked = sorted(scores.items(), key=lambda item: (-item[1], item[0]))
    return ranked[:n]
