"""Document parsing and multi-granularity segmentation with provenance.

Documents are split into 100-word passage chunks (complete sentences only,
greedy fill, short final chunk merged back), passages into sentences, and
externally generated proposition files are validated and attached per passage.
Every unit keeps a total provenance chain unit -> passage -> document.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Mapping, Sequence

log = logging.getLogger(__name__)


class CorpusError(Exception):
    """Invalid corpus content or broken provenance."""


class CorpusFormatError(CorpusError):
    """Malformed input line; carries the 1-based line number."""

    def __init__(self, path: str | Path, line_no: int, message: str) -> None:
        super().__init__(f"{path}:{line_no}: {message}")
        self.path = str(path)
        self.line_no = line_no


class PropositionParseError(CorpusError):
    """Proposition document could not be parsed for a passage."""


class Granularity(str, Enum):
    PASSAGE = "passage"
    SENTENCE = "sentence"
    PROPOSITION = "proposition"


@dataclass(frozen=True)
class Document:
    doc_id: str
    title: str
    paragraphs: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.doc_id:
            raise CorpusError("document id must be nonempty")


@dataclass(frozen=True)
class Passage:
    passage_id: str
    doc_id: str
    title: str
    text: str
    word_count: int
    sentence_count: int


@dataclass(frozen=True)
class Unit:
    unit_id: str
    granularity: Granularity
    passage_id: str
    text: str


def count_words(text: str) -> int:
    """Number of maximal nonempty whitespace-separated tokens."""
    return len(text.split())


# Lowercased abbreviations (with trailing period) that do not end a sentence.
ABBREVIATIONS = frozenset(
    {
        "mr.", "mrs.", "ms.", "dr.", "prof.", "sr.", "jr.", "st.", "mt.",
        "no.", "nos.", "fig.", "figs.", "vs.", "etc.", "e.g.", "i.e.", "cf.",
        "al.", "approx.", "dept.", "est.", "min.", "max.",
        "jan.", "feb.", "mar.", "apr.", "jun.", "jul.", "aug.",
        "sep.", "sept.", "oct.", "nov.", "dec.",
        "u.s.", "u.k.", "a.m.", "p.m.", "inc.", "ltd.", "co.", "corp.",
        "ave.", "blvd.", "rd.", "gen.", "col.", "lt.", "sgt.", "capt.",
        "rev.", "hon.", "ph.d.", "b.c.", "a.d.", "ed.", "eds.", "vol.", "pp.",
    }
)

# Sentence boundary: run of terminators (plus any closing quotes/brackets),
# whitespace, then an uppercase letter, digit or opening quote starting the
# next sentence.
_BOUNDARY_RE = re.compile(r"([.!?]+[\"'”’)\]]*)(\s+)(?=[\"'“‘A-Z0-9])")


def _ends_with_abbreviation(prefix: str) -> bool:
    parts = prefix.rsplit(None, 1)
    if not parts:
        return False
    word = parts[-1]
    if word.lower() in ABBREVIATIONS:
        return True
    # Single-letter initials such as "J." in "J. K. Rowling".
    core = word.rstrip(".")
    return len(core) == 1 and core.isalpha()


def split_sentences(paragraph: str) -> list[str]:
    """Rule-based sentence splitting. Never drops non-whitespace characters."""
    text = paragraph.strip()
    if not text:
        return []
    sentences: list[str] = []
    start = 0
    for match in _BOUNDARY_RE.finditer(text):
        candidate = text[start : match.end(1)]
        if match.group(1) == "." and _ends_with_abbreviation(candidate):
            continue
        candidate = candidate.strip()
        if candidate:
            sentences.append(candidate)
        start = match.end()
    tail = text[start:].strip()
    if tail:
        sentences.append(tail)
    return sentences


def _chunk_sentence_lists(
    sentences: Sequence[str], target_words: int, min_final_words: int
) -> list[list[str]]:
    """Greedy grouping of one paragraph's sentences into passage chunks."""
    chunks: list[list[str]] = []
    current: list[str] = []
    current_words = 0
    for sentence in sentences:
        n = count_words(sentence)
        if current and current_words + n > target_words:
            chunks.append(current)
            current = [sentence]
            current_words = n
        else:
            current.append(sentence)
            current_words += n
    if current:
        chunks.append(current)
    # A short final chunk folds back into its predecessor (at most once).
    if len(chunks) >= 2 and count_words(" ".join(chunks[-1])) < min_final_words:
        tail = chunks.pop()
        chunks[-1].extend(tail)
    return chunks


def _chunk_document(
    doc: Document, target_words: int, min_final_words: int
) -> list[tuple[Passage, list[str]]]:
    """Chunk a document, keeping each passage's sentence list."""
    if not target_words > min_final_words > 0:
        raise ValueError(
            f"require target_words > min_final_words > 0, "
            f"got {target_words} and {min_final_words}"
        )
    out: list[tuple[Passage, list[str]]] = []
    ordinal = 0
    for paragraph in doc.paragraphs:
        sentences = split_sentences(paragraph)
        if not sentences:
            continue
        for chunk in _chunk_sentence_lists(sentences, target_words, min_final_words):
            text = " ".join(chunk)
            passage = Passage(
                passage_id=f"{doc.doc_id}:{ordinal}",
                doc_id=doc.doc_id,
                title=doc.title,
                text=text,
                word_count=count_words(text),
                sentence_count=len(chunk),
            )
            out.append((passage, chunk))
            ordinal += 1
    return out


def chunk_passages(
    doc: Document, target_words: int = 100, min_final_words: int = 50
) -> list[Passage]:
    """Split a document into passage chunks of complete sentences.

    Sentences are appended greedily per paragraph; a sentence that would push
    the chunk past ``target_words`` starts a new chunk. A final chunk under
    ``min_final_words`` is merged into the previous chunk of the same
    paragraph. Chunks never span paragraphs.
    """
    return [passage for passage, _ in _chunk_document(doc, target_words, min_final_words)]


def _proposition_units(passage_id: str, entries: Sequence[str]) -> list[Unit]:
    units: list[Unit] = []
    for position, entry in enumerate(entries):
        text = entry.strip()
        if not text:
            log.warning(
                "passage %s: skipping empty proposition at position %d",
                passage_id,
                position,
            )
            continue
        units.append(
            Unit(
                unit_id=f"{passage_id}:p{len(units)}",
                granularity=Granularity.PROPOSITION,
                passage_id=passage_id,
                text=text,
            )
        )
    if not entries:
        log.warning("passage %s: proposition array is empty", passage_id)
    return units


def ingest_propositions(passage_id: str, proposition_document: str) -> list[Unit]:
    """Parse a JSON array of proposition strings into units for one passage.

    Empty strings are skipped with a warning; an empty array yields zero units
    with a warning. Anything that is not a JSON array of strings raises
    :class:`PropositionParseError` naming the passage.
    """
    try:
        entries = json.loads(proposition_document)
    except json.JSONDecodeError as exc:
        raise PropositionParseError(
            f"malformed proposition document for passage {passage_id!r}: {exc}"
        ) from exc
    if not isinstance(entries, list) or not all(isinstance(e, str) for e in entries):
        raise PropositionParseError(
            f"proposition document for passage {passage_id!r} "
            "is not a JSON array of strings"
        )
    return _proposition_units(passage_id, entries)


DEFAULT_UNRESOLVED_PRONOUNS = ("it", "he", "she", "they", "this", "that")

_LEADING_TRIM = "\"'“”‘’([,.:;!?"


def check_proposition(
    text: str,
    parent_passage: Passage,
    pronouns: Sequence[str] = DEFAULT_UNRESOLVED_PRONOUNS,
) -> list[str]:
    """Advisory lints for a proposition; findings never block ingestion.

    Flags: ``unresolved-pronoun`` (leads with a configurable pronoun),
    ``longer-than-passage``, ``multi-sentence``.
    """
    findings: list[str] = []
    tokens = text.split()
    if tokens:
        first = tokens[0].strip(_LEADING_TRIM).lower()
        if first in {p.lower() for p in pronouns}:
            findings.append("unresolved-pronoun")
    if count_words(text) > parent_passage.word_count:
        findings.append("longer-than-passage")
    if len(split_sentences(text)) > 1:
        findings.append("multi-sentence")
    return findings


@dataclass
class Corpus:
    """Immutable-after-load store of documents, passages and units."""

    documents: list[Document] = field(default_factory=list)
    passages: list[Passage] = field(default_factory=list)
    units: dict[Granularity, list[Unit]] = field(default_factory=dict)
    unit_to_passage: dict[str, str] = field(default_factory=dict)
    passage_to_doc: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for granularity in Granularity:
            self.units.setdefault(granularity, [])
        self._passage_by_id = {p.passage_id: p for p in self.passages}

    def passage(self, passage_id: str) -> Passage:
        try:
            return self._passage_by_id[passage_id]
        except KeyError:
            raise CorpusError(f"unknown passage {passage_id!r}") from None

    def doc_of(self, passage_id: str) -> str:
        try:
            return self.passage_to_doc[passage_id]
        except KeyError:
            raise CorpusError(f"no document for passage {passage_id!r}") from None


def build_corpus(
    documents: Sequence[Document],
    propositions: Mapping[str, Sequence[str]] | None = None,
    target_words: int = 100,
    min_final_words: int = 50,
) -> Corpus:
    """Segment documents into all granularities and attach propositions.

    ``propositions`` maps passage ids to lists of proposition strings, as read
    from a proposition file. Referencing an unknown passage is an error.
    """
    seen_docs: set[str] = set()
    passages: list[Passage] = []
    sentence_units: list[Unit] = []
    passage_units: list[Unit] = []
    unit_to_passage: dict[str, str] = {}
    passage_to_doc: dict[str, str] = {}

    for doc in documents:
        if doc.doc_id in seen_docs:
            raise CorpusError(f"duplicate document id {doc.doc_id!r}")
        seen_docs.add(doc.doc_id)
        for passage, chunk in _chunk_document(doc, target_words, min_final_words):
            passages.append(passage)
            passage_to_doc[passage.passage_id] = doc.doc_id
            passage_units.append(
                Unit(
                    unit_id=passage.passage_id,
                    granularity=Granularity.PASSAGE,
                    passage_id=passage.passage_id,
                    text=passage.text,
                )
            )
            unit_to_passage[passage.passage_id] = passage.passage_id
            for i, sentence in enumerate(chunk):
                unit = Unit(
                    unit_id=f"{passage.passage_id}:s{i}",
                    granularity=Granularity.SENTENCE,
                    passage_id=passage.passage_id,
                    text=sentence,
                )
                sentence_units.append(unit)
                unit_to_passage[unit.unit_id] = passage.passage_id

    proposition_units: list[Unit] = []
    if propositions:
        for passage_id in propositions:
            if passage_id not in passage_to_doc:
                raise CorpusError(
                    f"proposition file references unknown passage {passage_id!r}"
                )
        for passage in passages:  # corpus order, not file order
            entries = propositions.get(passage.passage_id)
            if entries is None:
                continue
            for unit in _proposition_units(passage.passage_id, entries):
                proposition_units.append(unit)
                unit_to_passage[unit.unit_id] = passage.passage_id

    return Corpus(
        documents=list(documents),
        passages=passages,
        units={
            Granularity.PASSAGE: passage_units,
            Granularity.SENTENCE: sentence_units,
            Granularity.PROPOSITION: proposition_units,
        },
        unit_to_passage=unit_to_passage,
        passage_to_doc=passage_to_doc,
    )


@dataclass(frozen=True)
class CorpusStats:
    unit_counts: dict[Granularity, int]
    avg_words: dict[Granularity, float]
    sentences_per_passage: float
    propositions_per_passage: float

    def to_dict(self) -> dict:
        return {
            "unit_counts": {g.value: n for g, n in self.unit_counts.items()},
            "avg_words": {g.value: w for g, w in self.avg_words.items()},
            "sentences_per_passage": self.sentences_per_passage,
            "propositions_per_passage": self.propositions_per_passage,
        }


def corpus_stats(corpus: Corpus) -> CorpusStats:
    counts: dict[Granularity, int] = {}
    avgs: dict[Granularity, float] = {}
    for granularity in Granularity:
        units = corpus.units[granularity]
        counts[granularity] = len(units)
        total = sum(count_words(u.text) for u in units)
        avgs[granularity] = total / len(units) if units else 0.0
    n_passages = counts[Granularity.PASSAGE]
    return CorpusStats(
        unit_counts=counts,
        avg_words=avgs,
        sentences_per_passage=(
            counts[Granularity.SENTENCE] / n_passages if n_passages else 0.0
        ),
        propositions_per_passage=(
            counts[Granularity.PROPOSITION] / n_passages if n_passages else 0.0
        ),
    )


def load_documents(path: str | Path) -> list[Document]:
    """Read documents from JSON-lines: {"id", "title", "paragraphs": [...]}."""
    documents: list[Document] = []
    with open(path, encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusFormatError(path, line_no, f"invalid JSON: {exc}") from exc
            if not isinstance(row, dict) or "id" not in row or "paragraphs" not in row:
                raise CorpusFormatError(
                    path, line_no, 'expected object with "id" and "paragraphs"'
                )
            paragraphs = row["paragraphs"]
            if not isinstance(paragraphs, list) or not all(
                isinstance(p, str) for p in paragraphs
            ):
                raise CorpusFormatError(
                    path, line_no, '"paragraphs" must be a list of strings'
                )
            documents.append(
                Document(
                    doc_id=str(row["id"]),
                    title=str(row.get("title", "")),
                    paragraphs=tuple(paragraphs),
                )
            )
    return documents


def load_proposition_file(path: str | Path) -> dict[str, list[str]]:
    """Read JSON-lines {"passage_id", "propositions": [...]} keyed by passage."""
    by_passage: dict[str, list[str]] = {}
    with open(path, encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusFormatError(path, line_no, f"invalid JSON: {exc}") from exc
            if (
                not isinstance(row, dict)
                or "passage_id" not in row
                or "propositions" not in row
            ):
                raise CorpusFormatError(
                    path, line_no, 'expected object with "passage_id" and "propositions"'
                )
            props = row["propositions"]
            if not isinstance(props, list) or not all(isinstance(p, str) for p in props):
                raise CorpusFormatError(
                    path, line_no, '"propositions" must be a list of strings'
                )
            passage_id = str(row["passage_id"])
            if passage_id in by_passage:
                raise CorpusFormatError(
                    path, line_no, f"duplicate passage_id {passage_id!r}"
                )
            by_passage[passage_id] = list(props)
    return by_passage


def write_unit_file(corpus: Corpus, granularity: Granularity, path: str | Path) -> int:
    """Write one granularity's units as JSON-lines; returns the row count."""
    rows = 0
    with open(path, "w", encoding="utf-8") as handle:
        for unit in corpus.units[granularity]:
            passage = corpus.passage(unit.passage_id)
            record = {
                "unit_id": unit.unit_id,
                "granularity": granularity.value,
                "passage_id": unit.passage_id,
                "doc_id": passage.doc_id,
                "title": passage.title,
                "text": unit.text,
                "word_count": count_words(unit.text),
            }
            handle.write(json.dumps(record, ensure_ascii=False) + "\n")
            rows += 1
    return rows


@dataclass(frozen=True)
class UnitRecord:
    """One row of a segmented unit file."""

    unit_id: str
    granularity: Granularity
    passage_id: str
    doc_id: str
    title: str
    text: str
    word_count: int


def load_unit_file(path: str | Path) -> list[UnitRecord]:
    records: list[UnitRecord] = []
    required = {"unit_id", "granularity", "passage_id", "doc_id", "title", "text"}
    with open(path, encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusFormatError(path, line_no, f"invalid JSON: {exc}") from exc
            missing = required - set(row)
            if missing:
                raise CorpusFormatError(
                    path, line_no, f"missing fields: {sorted(missing)}"
                )
            records.append(
                UnitRecord(
                    unit_id=row["unit_id"],
                    granularity=Granularity(row["granularity"]),
                    passage_id=row["passage_id"],
                    doc_id=row["doc_id"],
                    title=row["title"],
                    text=row["text"],
                    word_count=int(row.get("word_count", count_words(row["text"]))),
                )
            )
    return records
