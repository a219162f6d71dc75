"""Measurement protocols: Recall@k, EM@l, answer-recall curves, set F1,
and BM25-based entity popularity with bucketed reporting.

Answer matching uses the community-standard normalization (lowercase, strip
punctuation, drop the articles a/an/the, collapse whitespace) and checks the
answer's token sequence as a contiguous token subsequence of the passage.
"""

from __future__ import annotations

import json
import re
import string
from bisect import bisect_left
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping, Sequence

from .bm25 import Bm25Index, bm25_search, bm25_tokenize
from .corpus import CorpusFormatError


class QidMismatchError(Exception):
    """A run references a question id with no example."""


class UndefinedMetricError(Exception):
    """Metric is undefined for the given inputs (e.g. empty proposition set)."""


@dataclass(frozen=True)
class QAExample:
    qid: str
    question: str
    answers: tuple[str, ...]
    entity: str | None = None

    def __post_init__(self) -> None:
        if not self.answers:
            raise ValueError(f"example {self.qid!r} has no answers")


def load_qa_examples(path: str | Path) -> list[QAExample]:
    """Read JSON-lines {"qid", "question", "answers": [...]} (+optional "entity")."""
    examples: list[QAExample] = []
    with open(path, encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusFormatError(path, line_no, f"invalid JSON: {exc}") from exc
            try:
                examples.append(
                    QAExample(
                        qid=str(row["qid"]),
                        question=str(row["question"]),
                        answers=tuple(str(a) for a in row["answers"]),
                        entity=row.get("entity"),
                    )
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise CorpusFormatError(path, line_no, f"bad example: {exc}") from exc
    return examples


_ARTICLE_RE = re.compile(r"\b(a|an|the)\b")
_PUNCT_TABLE = str.maketrans("", "", string.punctuation)


def normalize_answer(text: str) -> str:
    """Lowercase, strip punctuation, drop articles, collapse whitespace."""
    text = text.lower().translate(_PUNCT_TABLE)
    text = _ARTICLE_RE.sub(" ", text)
    return " ".join(text.split())


def _contains_token_seq(haystack: Sequence[str], needle: Sequence[str]) -> bool:
    n = len(needle)
    if n == 0 or n > len(haystack):
        return False
    needle = list(needle)
    return any(list(haystack[i : i + n]) == needle for i in range(len(haystack) - n + 1))


def contains_answer(passage_text: str, answers: Sequence[str]) -> bool:
    """True iff a normalized answer occurs as a contiguous token subsequence."""
    if not answers:
        raise ValueError("answers must be nonempty")
    haystack = normalize_answer(passage_text).split()
    for answer in answers:
        if _contains_token_seq(haystack, normalize_answer(answer).split()):
            return True
    return False


def _check_runs(runs: Mapping[str, object], examples: Sequence[QAExample]) -> None:
    known = {e.qid for e in examples}
    unknown = [qid for qid in runs if qid not in known]
    if unknown:
        raise QidMismatchError(f"runs contain unknown qids: {unknown[:5]}")


def recall_at_k(
    runs: Mapping[str, Sequence[str]],
    examples: Sequence[QAExample],
    ks: Sequence[int],
) -> dict[int, float]:
    """Fraction of questions answered within the top-k passage texts.

    ``runs`` maps qid to ranked passage texts; a missing or empty run counts
    as a miss at every k.
    """
    _check_runs(runs, examples)
    if not examples:
        return {k: 0.0 for k in ks}
    hit_ranks: list[int | None] = []
    for example in examples:
        texts = runs.get(example.qid, [])
        rank = next(
            (i for i, text in enumerate(texts) if contains_answer(text, example.answers)),
            None,
        )
        hit_ranks.append(rank)
    result = {
        k: sum(1 for r in hit_ranks if r is not None and r < k) / len(examples)
        for k in ks
    }
    ordered = [result[k] for k in sorted(result)]
    assert all(a <= b for a, b in zip(ordered, ordered[1:])), "recall must be monotone in k"
    return result


def answer_recall_curve(
    unit_runs: Mapping[str, Sequence[str]],
    examples: Sequence[QAExample],
    l_grid: Sequence[int],
) -> dict[int, float]:
    """Fraction of questions whose answer appears in the first l retrieved words.

    ``unit_runs`` maps qid to ranked unit texts; the context at budget l is
    the first l words of their concatenation.
    """
    if list(l_grid) != sorted(l_grid):
        raise ValueError("l_grid must be sorted ascending")
    _check_runs(unit_runs, examples)
    if not examples:
        return {l: 0.0 for l in l_grid}
    hits = {l: 0 for l in l_grid}
    for example in examples:
        words: list[str] = []
        for text in unit_runs.get(example.qid, []):
            words.extend(text.split())
        for l in l_grid:
            if l > 0 and contains_answer(" ".join(words[:l]), example.answers):
                hits[l] += 1
    curve = {l: hits[l] / len(examples) for l in l_grid}
    values = [curve[l] for l in l_grid]
    assert all(a <= b for a, b in zip(values, values[1:])), "curve must be monotone in l"
    return curve


def exact_match(prediction: str, answers: Sequence[str]) -> bool:
    normalized = normalize_answer(prediction)
    return any(normalized == normalize_answer(answer) for answer in answers)


def em_at_l(
    predictions_by_l: Mapping[int, Mapping[str, str]],
    examples: Sequence[QAExample],
) -> dict[int, float]:
    """EM fraction per word budget; a missing prediction counts as wrong."""
    if not examples:
        return {l: 0.0 for l in predictions_by_l}
    result: dict[int, float] = {}
    for l, predictions in predictions_by_l.items():
        _check_runs(predictions, examples)
        correct = sum(
            1
            for example in examples
            if example.qid in predictions
            and exact_match(predictions[example.qid], example.answers)
        )
        result[l] = correct / len(examples)
    return result


_SIM_PUNCT_TABLE = str.maketrans("", "", string.punctuation)


def _sim_tokens(text: str) -> list[str]:
    # Articles are kept here: similarity compares surface wording.
    return text.lower().translate(_SIM_PUNCT_TABLE).split()


def sim_token_f1(a: str, b: str) -> float:
    """Harmonic mean of token precision/recall over multiset overlap."""
    tokens_a = Counter(_sim_tokens(a))
    tokens_b = Counter(_sim_tokens(b))
    if not tokens_a or not tokens_b:
        return 0.0
    overlap = sum((tokens_a & tokens_b).values())
    if overlap == 0:
        return 0.0
    recall = overlap / sum(tokens_a.values())
    precision = overlap / sum(tokens_b.values())
    return 2 * precision * recall / (precision + recall)


@dataclass(frozen=True)
class PropSetPair:
    labeled: tuple[str, ...]
    predicted: tuple[str, ...]


@dataclass(frozen=True)
class PropSetScores:
    recall: float
    precision: float
    f1: float


def proposition_set_f1(
    pair: PropSetPair, sim: Callable[[str, str], float] = sim_token_f1
) -> PropSetScores:
    """Set-level F1: each side is credited with its best match on the other.

    Recall averages, over labeled propositions, the best similarity against
    any predicted one; precision is the mirror image; F1 is their harmonic
    mean (zero when both vanish). Empty sets are an error, not a zero.
    """
    if not pair.labeled or not pair.predicted:
        raise UndefinedMetricError("proposition set F1 needs nonempty sets")
    recall = sum(
        max(sim(p, q) for q in pair.predicted) for p in pair.labeled
    ) / len(pair.labeled)
    precision = sum(
        max(sim(p, q) for p in pair.labeled) for q in pair.predicted
    ) / len(pair.predicted)
    f1 = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
    return PropSetScores(recall=recall, precision=precision, f1=f1)


DEFAULT_BUCKET_EDGES = (1, 3, 7, 15, 31, 63, 127, 255, 511, 1023)


@dataclass(frozen=True)
class PopularityRecord:
    entity: str
    occurrence_count: int
    bucket: int


def bucket_for_count(count: int, edges: Sequence[int] = DEFAULT_BUCKET_EDGES) -> int:
    """Index of the first edge with count <= edge; past the last edge, len(edges)."""
    return bisect_left(list(edges), count)


def count_occurrences(tokens: Sequence[str], phrase_tokens: Sequence[str]) -> int:
    """Sliding (overlapping) count of a token sequence inside a token list."""
    n = len(phrase_tokens)
    if n == 0 or n > len(tokens):
        return 0
    phrase = list(phrase_tokens)
    return sum(1 for i in range(len(tokens) - n + 1) if list(tokens[i : i + n]) == phrase)


def estimate_popularity(
    entity: str,
    bm25: Bm25Index,
    n: int = 1000,
    bucket_edges: Sequence[int] = DEFAULT_BUCKET_EDGES,
) -> PopularityRecord:
    """Occurrences of the entity's surface form across its top-n BM25 passages."""
    if not entity:
        raise ValueError("entity must be nonempty")
    phrase = bm25_tokenize(entity)
    count = 0
    if bm25.num_docs:
        for passage_id, _score in bm25_search(bm25, entity, n):
            count += count_occurrences(bm25.doc_tokens[passage_id], phrase)
    return PopularityRecord(
        entity=entity,
        occurrence_count=count,
        bucket=bucket_for_count(count, bucket_edges),
    )


def popularity_bucket_report(
    runs_by_granularity: Mapping[str, Mapping[str, Sequence[str]]],
    examples: Sequence[QAExample],
    popularity: Mapping[str, PopularityRecord],
    k: int,
    bucket_edges: Sequence[int] = DEFAULT_BUCKET_EDGES,
) -> dict[int, dict[str, float]]:
    """Recall@k per popularity bucket and granularity; empty buckets absent."""
    by_bucket: dict[int, list[QAExample]] = {}
    for example in examples:
        if example.entity is None or example.entity not in popularity:
            raise QidMismatchError(
                f"no popularity record for qid {example.qid!r} "
                f"(entity {example.entity!r})"
            )
        bucket = popularity[example.entity].bucket
        by_bucket.setdefault(bucket, []).append(example)
    table: dict[int, dict[str, float]] = {}
    for bucket in sorted(by_bucket):
        subset = by_bucket[bucket]
        qids = {e.qid for e in subset}
        row: dict[str, float] = {}
        for granularity, runs in runs_by_granularity.items():
            subset_runs = {qid: texts for qid, texts in runs.items() if qid in qids}
            row[granularity] = recall_at_k(subset_runs, subset, [k])[k]
        table[bucket] = row
    return table


def bucket_label(bucket: int, edges: Sequence[int] = DEFAULT_BUCKET_EDGES) -> str:
    if bucket >= len(edges):
        return f">{edges[-1]}" if edges else "all"
    low = 0 if bucket == 0 else edges[bucket - 1] + 1
    return f"{low}-{edges[bucket]}"


@dataclass
class MetricReport:
    """Bundle of the retrieval and QA metrics for one granularity."""

    granularity: str
    n_questions: int
    recall_at_k: dict[int, float]
    em_at_l: dict[int, float]
    answer_recall_curve: dict[int, float]

    # The matching rule is part of the report so numbers stay interpretable.
    ANSWER_MATCH_RULE = (
        "answer counts as found when its normalized tokens (lowercase, "
        "punctuation stripped, articles dropped) occur as a contiguous token "
        "subsequence of the normalized passage"
    )

    def to_dict(self) -> dict:
        return {
            "granularity": self.granularity,
            "n_questions": self.n_questions,
            "answer_match_rule": self.ANSWER_MATCH_RULE,
            "recall_at_k": {str(k): v for k, v in sorted(self.recall_at_k.items())},
            "em_at_l": {str(l): v for l, v in sorted(self.em_at_l.items())},
            "answer_recall_curve": {
                str(l): v for l, v in sorted(self.answer_recall_curve.items())
            },
        }


def render_comparison_table(reports: Sequence[MetricReport]) -> str:
    """Plain-text metric table, one row per granularity."""
    if not reports:
        return "(no reports)"
    ks = sorted({k for r in reports for k in r.recall_at_k})
    ls = sorted({l for r in reports for l in r.em_at_l})
    curve_ls = sorted({l for r in reports for l in r.answer_recall_curve})
    headers = (
        ["granularity"]
        + [f"R@{k}" for k in ks]
        + [f"EM@{l}" for l in ls]
        + [f"AR@{l}w" for l in curve_ls]
    )
    rows = [headers]
    for report in reports:
        rows.append(
            [report.granularity]
            + [f"{report.recall_at_k.get(k, float('nan')):.3f}" for k in ks]
            + [f"{report.em_at_l.get(l, float('nan')):.3f}" for l in ls]
            + [f"{report.answer_recall_curve.get(l, float('nan')):.3f}" for l in curve_ls]
        )
    widths = [max(len(row[i]) for row in rows) for i in range(len(headers))]
    lines = []
    for i, row in enumerate(rows):
        lines.append("  ".join(cell.ljust(widths[j]) for j, cell in enumerate(row)))
        if i == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines)
