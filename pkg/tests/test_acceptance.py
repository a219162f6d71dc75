"""Acceptance suite: one test per criterion, each printing a PASS line.

Every expected value is either trivial, derived from an in-test independent
oracle (brute force, reference formula, hand simulation), or checked against
the bundled construction. Runtime bounds are asserted per criterion.
"""

import random
import time

import numpy as np
import pytest

from multigrain.bm25 import bm25_build, bm25_search
from multigrain.corpus import (
    Document,
    Granularity,
    build_corpus,
    chunk_passages,
    corpus_stats,
    count_words,
    split_sentences,
)
from multigrain.embed import (
    DeterministicProvider,
    DuplicateIdError,
    HeaderError,
    TruncatedFileError,
    embed_batch,
    load_embeddings,
    save_embeddings,
)
from multigrain.index import (
    MissingShardError,
    ShardChecksumError,
    build_index,
    load_index,
    save_index,
    search,
)
from multigrain.retrieve import RetrievalConfig, assemble_context, retrieve_passages, retrieve_units
from multigrain.evaluate import (
    PropSetPair,
    answer_recall_curve,
    exact_match,
    proposition_set_f1,
    recall_at_k,
)
from multigrain.toycorpus import build_adversarial_corpus
from conftest import brute_force_search, make_sentence, random_matrix, random_query
from test_bm25 import VOCAB, reference_bm25_ranking
from test_retrieve import group_by_passage_max


class Stopwatch:
    def __init__(self, budget_seconds: float):
        self.budget = budget_seconds

    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.start
        if exc[0] is None:
            assert self.elapsed < self.budget, (
                f"runtime {self.elapsed:.1f}s exceeds budget {self.budget}s"
            )


def test_a1_chunker_law_suite():
    with Stopwatch(5.0):
        rng = random.Random(42)
        target, min_final = 100, 50
        for trial in range(200):
            n_sentences = rng.randint(1, 12)
            lengths = [rng.randint(1, 120) for _ in range(n_sentences)]
            sentences = [make_sentence(n, f"t{trial}s{i}") for i, n in enumerate(lengths)]
            paragraph = " ".join(sentences)
            doc = Document(f"doc{trial}", "t", (paragraph,))
            passages = chunk_passages(doc, target, min_final)

            # Reconstruction + boundary legality: passages tile the paragraph's
            # sentence list exactly, in order.
            paragraph_sentences = split_sentences(paragraph)
            tiled = []
            for passage in passages:
                passage_sentences = split_sentences(passage.text)
                tiled.extend(passage_sentences)
            assert tiled == paragraph_sentences

            # Size bounds: an over-target passage is a single over-long
            # sentence or the final-merge result; at most one merge per
            # paragraph, and only the last chunk can be one.
            merges = [
                p for p in passages if p.word_count > target and p.sentence_count > 1
            ]
            assert len(merges) <= 1
            if merges:
                assert merges[0] is passages[-1]

            # Merge rule: a multi-chunk paragraph never ends below the minimum.
            if len(passages) >= 2:
                assert passages[-1].word_count >= min_final

            # Word counts are consistent.
            for passage in passages:
                assert passage.word_count == count_words(passage.text)

        # Hand-derived cases.
        def para(counts, tag):
            return " ".join(make_sentence(n, f"{tag}{i}") for i, n in enumerate(counts))

        case1 = chunk_passages(Document("h1", "t", (para([60, 50, 30], "a"),)))
        assert [p.word_count for p in case1] == [60, 80]
        case2 = chunk_passages(Document("h2", "t", (para([40, 40, 30], "b"),)))
        assert [p.word_count for p in case2] == [110]
    print("\n[A1] chunker law suite: PASS")


def test_a2_search_oracle():
    with Stopwatch(60.0):
        rng = random.Random(4242)
        dims = [8, 64, 256]
        shard_counts = [1, 3, 8]
        for trial in range(50):
            dim = dims[trial % 3]
            num_shards = shard_counts[(trial // 3) % 3]
            count = 10_000 if trial < 2 else rng.randint(1, 2000)
            matrix = random_matrix(rng, count, dim)
            index = build_index(matrix, num_shards)
            np_rng = np.random.RandomState(trial)
            for _ in range(3):
                query = random_query(np_rng, dim)
                top_m = rng.choice([1, 5, 50, count])
                got = search(index, query, top_m)
                want = brute_force_search(matrix, query, top_m)
                assert [h.unit_id for h in got] == [w[0] for w in want]
                got_scores = np.array([h.score for h in got])
                want_scores = np.array([w[1] for w in want])
                np.testing.assert_allclose(got_scores, want_scores, rtol=1e-5)
    print("\n[A2] sharded search equals brute force on 50 corpora: PASS")


def test_a3_aggregation_oracle():
    with Stopwatch(30.0):
        rng = random.Random(99)
        for trial in range(20):
            count = rng.randint(5, 500)
            dim = rng.choice([8, 32])
            matrix = random_matrix(rng, count, dim)
            n_passages = max(1, count // rng.randint(2, 10))
            provenance = {uid: f"P{rng.randrange(n_passages):05d}" for uid in matrix.ids}
            index = build_index(matrix, rng.choice([1, 3, 8]))
            query = random_query(np.random.RandomState(trial), dim)
            for k in (1, 5, 20):
                config = RetrievalConfig(Granularity.PROPOSITION, k=k)
                got = retrieve_passages(index, provenance, query, config)
                assert got == group_by_passage_max(matrix, provenance, query, k)

        # Passage-granularity degeneration is bitwise equal to raw search.
        matrix = random_matrix(rng, 300, 16)
        identity = {uid: uid for uid in matrix.ids}
        index = build_index(matrix, 8)
        query = random_query(np.random.RandomState(7), 16)
        config = RetrievalConfig(Granularity.PASSAGE, k=20)
        got = retrieve_passages(index, identity, query, config)
        raw = search(index, query, 20)
        assert [(p.passage_id, p.score) for p in got] == [
            (h.unit_id, h.score) for h in raw
        ]
    print("\n[A3] passage aggregation equals group-by-max oracle: PASS")


def test_a4_qualitative_granularity_ordering():
    with Stopwatch(30.0):
        toy = build_adversarial_corpus(num_docs=50, seed=42)
        corpus = build_corpus(toy.documents, toy.propositions)
        stats = corpus_stats(corpus)
        assert (
            stats.unit_counts[Granularity.PROPOSITION]
            >= stats.unit_counts[Granularity.SENTENCE]
            >= stats.unit_counts[Granularity.PASSAGE]
        )
        provider = DeterministicProvider(dim=256, seed=42)
        passage_texts = {p.passage_id: p.text for p in corpus.passages}
        examples = toy.examples
        queries = provider.embed([e.question for e in examples])

        recall5 = {}
        curve100 = {}
        for granularity in Granularity:
            units = corpus.units[granularity]
            matrix = embed_batch(
                [u.text for u in units], provider, ids=[u.unit_id for u in units]
            )
            index = build_index(matrix, 8)
            unit_texts = {u.unit_id: u.text for u in units}
            runs = {}
            unit_runs = {}
            for example, query in zip(examples, queries):
                config = RetrievalConfig(granularity, k=5)
                passages = retrieve_passages(index, corpus.unit_to_passage, query, config)
                runs[example.qid] = [passage_texts[p.passage_id] for p in passages]
                hits = retrieve_units(index, query, min(60, index.count))
                unit_runs[example.qid] = [unit_texts[h.unit_id] for h in hits]
            recall5[granularity] = recall_at_k(runs, examples, [5])[5]
            curve100[granularity] = answer_recall_curve(unit_runs, examples, [100])[100]

        prop, sent, passage = (
            Granularity.PROPOSITION, Granularity.SENTENCE, Granularity.PASSAGE,
        )
        assert recall5[prop] >= recall5[sent] >= recall5[passage]
        assert curve100[prop] > curve100[sent]
        assert curve100[prop] > curve100[passage]
    print(
        "\n[A4] granularity ordering (R@5 "
        f"prop={recall5[prop]:.2f} >= sent={recall5[sent]:.2f} >= "
        f"pass={recall5[passage]:.2f}; AR@100w prop strictly highest): PASS"
    )


def test_a5_metric_identities():
    with Stopwatch(5.0):
        exact = lambda a, b: 1.0 if a == b else 0.0
        same = PropSetPair(("x", "y", "z"), ("x", "y", "z"))
        scores = proposition_set_f1(same, sim=exact)
        assert scores.f1 == 1.0

        sub = proposition_set_f1(PropSetPair(("a",), ("a", "b")), sim=exact)
        assert sub.recall == 1.0 and sub.precision == 0.5
        assert sub.f1 == pytest.approx(2 / 3)

        rng = random.Random(55)
        vocab = ["one two", "three", "four five six", "seven", "eight nine"]
        for _ in range(100):
            labeled = tuple(rng.choice(vocab) for _ in range(rng.randint(1, 5)))
            predicted = tuple(rng.choice(vocab) for _ in range(rng.randint(1, 5)))
            fwd = proposition_set_f1(PropSetPair(labeled, predicted))
            rev = proposition_set_f1(PropSetPair(predicted, labeled))
            assert fwd.recall == pytest.approx(rev.precision)
            assert fwd.precision == pytest.approx(rev.recall)
            assert fwd.f1 == pytest.approx(rev.f1)
            assert 0.0 <= fwd.f1 <= 1.0

        # Monotonicity is asserted inside every evaluation call; exercise one.
        from multigrain.evaluate import QAExample

        examples = [QAExample("q1", "q", ("needle",))]
        runs = {"q1": ["no", "a needle here", "no"]}
        recall = recall_at_k(runs, examples, [1, 2, 3, 10])
        assert list(recall.values()) == sorted(recall.values())
        curve = answer_recall_curve({"q1": ["pad pad needle"]}, examples, [1, 2, 3, 4])
        assert list(curve.values()) == sorted(curve.values())
    print("\n[A5] metric identities and monotonicity: PASS")


def test_a6_bm25_oracle():
    with Stopwatch(5.0):
        rng = random.Random(1234)
        passages = {
            f"p{i:02d}": " ".join(rng.choice(VOCAB) for _ in range(rng.randint(5, 40)))
            for i in range(20)
        }
        index = bm25_build(passages, k1=0.9, b=0.4)
        for q in range(10):
            query = " ".join(rng.choice(VOCAB) for _ in range(rng.randint(1, 4)))
            got = bm25_search(index, query, 20)
            want = reference_bm25_ranking(passages, query, 0.9, 0.4, 20)
            assert [g[0] for g in got] == [w[0] for w in want]
            for (_, gs), (_, ws) in zip(got, want):
                assert gs == pytest.approx(ws, rel=1e-9)
    print("\n[A6] BM25 ranking equals reference formula on 10 queries: PASS")


def test_a7_persistence_round_trips(tmp_path):
    with Stopwatch(10.0):
        rng = random.Random(8)
        matrix = random_matrix(rng, 137, 24)
        path = tmp_path / "vectors.grem"
        save_embeddings(matrix, path)
        loaded = load_embeddings(path)
        assert loaded.ids == matrix.ids
        assert loaded.vectors.tobytes() == matrix.vectors.tobytes()

        payload = path.read_bytes()
        (tmp_path / "cut.grem").write_bytes(payload[: len(payload) // 2])
        with pytest.raises(TruncatedFileError):
            load_embeddings(tmp_path / "cut.grem")

        corrupted = bytearray(payload)
        corrupted[0] ^= 0xFF
        (tmp_path / "magic.grem").write_bytes(bytes(corrupted))
        with pytest.raises(HeaderError):
            load_embeddings(tmp_path / "magic.grem")

        import struct

        from multigrain.embed import FORMAT_VERSION, MAGIC

        dup = tmp_path / "dup.grem"
        with open(dup, "wb") as handle:
            handle.write(struct.pack("<4sIIIQ", MAGIC, FORMAT_VERSION, 0, 2, 2))
            for encoded in (b"x", b"x"):
                handle.write(struct.pack("<I", len(encoded)))
                handle.write(encoded)
            handle.write(np.zeros((2, 2), "<f4").tobytes())
        with pytest.raises(DuplicateIdError):
            load_embeddings(dup)

        # Index round trip: identical results on 100 random queries.
        index = build_index(matrix, 5)
        save_index(index, tmp_path / "idx")
        reloaded = load_index(tmp_path / "idx")
        np_rng = np.random.RandomState(3)
        for _ in range(100):
            query = np_rng.randn(24).astype(np.float32)
            assert search(reloaded, query, 7) == search(index, query, 7)

        (tmp_path / "idx" / "shard_00002.grem").unlink()
        with pytest.raises(MissingShardError):
            load_index(tmp_path / "idx")

        save_index(index, tmp_path / "idx2")
        shard = tmp_path / "idx2" / "shard_00001.grem"
        blob = bytearray(shard.read_bytes())
        blob[len(blob) // 2] ^= 0x01
        shard.write_bytes(bytes(blob))
        with pytest.raises(ShardChecksumError):
            load_index(tmp_path / "idx2")
    print("\n[A7] persistence round-trips and corruption detection: PASS")


EM_GOLDEN_TABLE = [
    # (prediction, gold, expected exact-match)
    ("The Pacific Ocean", "Pacific Ocean", True),
    ("pacific ocean", "Pacific Ocean", True),
    ("PACIFIC OCEAN", "the Pacific Ocean", True),
    ("Pacific", "Pacific Ocean", False),
    ("an apple", "apple", True),
    ("a dog", "the dog", True),
    ("dog", "dogs", False),
    ("Eiffel Tower!", "eiffel tower", True),
    ("Eiffel-Tower", "eiffel tower", False),  # hyphen strips into one token
    ("3.99 degrees", "399 degrees", True),
    ("3 99 degrees", "3.99 degrees", False),
    ("  spaced   out  ", "spaced out", True),
    ("U.S.A.", "usa", True),
    ("don't", "dont", True),
    ("the", "a", True),  # both normalize to empty
    ("something", "", False),
    ("King Henry VIII", "king henry viii", True),
    ("1,000,000", "1000000", True),
    ("answer.", "answer", True),
    ("answers", "answer", False),
]


def test_a8_em_protocol():
    with Stopwatch(5.0):
        rng = random.Random(321)
        for trial in range(100):
            units = [
                (f"q{trial}u{i}", " ".join(f"w{i}x{j}" for j in range(rng.randint(1, 40))))
                for i in range(rng.randint(1, 30))
            ]
            available = sum(len(t.split()) for _, t in units)
            for l in (100, 500):
                context = assemble_context(units, l)
                assert context.word_count == min(l, available)
                assert len(context.text.split()) == context.word_count

        for prediction, gold, expected in EM_GOLDEN_TABLE:
            assert exact_match(prediction, [gold]) is expected, (
                f"exact_match({prediction!r}, {gold!r}) != {expected}"
            )
    print("\n[A8] context budgets exact and EM golden table: PASS")
