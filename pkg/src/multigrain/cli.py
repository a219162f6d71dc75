"""Command-line pipeline: segment, embed, index, search, eval, popularity, stats.

Every command reads/writes files under the configured workdir, never mutates
its inputs, and is idempotent for fixed inputs and seed. Exit codes: 0 ok,
1 metric-pipeline failure, 2 input error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

from . import bm25 as bm25mod
from . import corpus as corpusmod
from . import embed as embedmod
from . import evaluate as evalmod
from . import index as indexmod
from . import retrieve as retrievemod
from .config import ConfigError, RunConfig, load_config
from .corpus import Granularity

log = logging.getLogger("multigrain")

# Exceptions caused by bad or missing inputs; everything else is a pipeline
# failure (exit 1).
_INPUT_ERRORS = (
    ConfigError,
    corpusmod.CorpusFormatError,
    corpusmod.CorpusError,
    embedmod.EmbeddingFileError,
    embedmod.ProviderConfigError,
    indexmod.IndexConfigError,
    indexmod.DimensionMismatchError,
    indexmod.IndexPersistenceError,
    FileNotFoundError,
)


class MissingArtifactError(FileNotFoundError):
    def __init__(self, path: Path, producer: str) -> None:
        super().__init__(f"missing {path}; run `multigrain {producer}` first")


def _unit_path(config: RunConfig, granularity: str) -> Path:
    return config.workdir / f"units.{granularity}.jsonl"


def _embedding_path(config: RunConfig, granularity: str) -> Path:
    return config.workdir / f"embeddings.{granularity}.grem"


def _index_path(config: RunConfig, granularity: str) -> Path:
    return config.workdir / f"index.{granularity}"


def _run_path(config: RunConfig, granularity: str) -> Path:
    return config.workdir / f"run.{granularity}.jsonl"


def _unit_run_path(config: RunConfig, granularity: str) -> Path:
    return config.workdir / f"unit_run.{granularity}.jsonl"


def _require(path: Path, producer: str) -> Path:
    if not path.exists():
        raise MissingArtifactError(path, producer)
    return path


def make_provider(config: RunConfig) -> embedmod.EmbeddingProvider:
    if config.provider == "deterministic":
        return embedmod.DeterministicProvider(
            dim=config.dim, seed=config.seed, normalize=config.normalize
        )
    if config.provider == "file":
        if config.provider_path is None:
            raise ConfigError("file provider needs [provider].path")
        return embedmod.FileProvider(config.provider_path, normalize=config.normalize)
    if config.provider == "remote":
        return embedmod.RemoteProvider(
            endpoint=config.endpoint,
            model_name=config.model,
            batch_size=config.batch_size,
            normalize=config.normalize,
        )
    raise ConfigError(f"unknown provider {config.provider!r}")


def _write_jsonl(path: Path, rows: Sequence[dict]) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for row in rows:
            handle.write(json.dumps(row, ensure_ascii=False) + "\n")


def cmd_segment(config: RunConfig) -> int:
    if config.corpus is None:
        raise ConfigError("segment needs a corpus path (--corpus or [paths].corpus)")
    documents = corpusmod.load_documents(config.corpus)
    propositions = None
    if config.propositions is not None:
        propositions = corpusmod.load_proposition_file(config.propositions)
    corpus = corpusmod.build_corpus(documents, propositions)
    config.workdir.mkdir(parents=True, exist_ok=True)
    written = {}
    for granularity in Granularity:
        if granularity is Granularity.PROPOSITION and not propositions:
            continue
        path = _unit_path(config, granularity.value)
        written[granularity.value] = corpusmod.write_unit_file(corpus, granularity, path)
    stats = corpusmod.corpus_stats(corpus)
    stats_path = config.workdir / "stats.json"
    with open(stats_path, "w", encoding="utf-8") as handle:
        json.dump(stats.to_dict(), handle, indent=2, sort_keys=True)
        handle.write("\n")
    for granularity, count in written.items():
        print(f"wrote {count} {granularity} units")
    print(f"stats -> {stats_path}")
    return 0


def cmd_embed(config: RunConfig) -> int:
    records = corpusmod.load_unit_file(
        _require(_unit_path(config, config.granularity), "segment")
    )
    provider = make_provider(config)
    matrix = embedmod.embed_batch(
        [r.text for r in records], provider, ids=[r.unit_id for r in records]
    )
    out = _embedding_path(config, config.granularity)
    embedmod.save_embeddings(matrix, out)
    print(f"embedded {matrix.count} {config.granularity} units (dim {matrix.dim}) -> {out}")
    return 0


def cmd_index(config: RunConfig) -> int:
    matrix = embedmod.load_embeddings(
        _require(_embedding_path(config, config.granularity), "embed")
    )
    built = indexmod.build_index(matrix, num_shards=config.shards)
    out = _index_path(config, config.granularity)
    indexmod.save_index(built, out)
    print(
        f"indexed {built.count} vectors in {built.num_shards} shards "
        f"(dim {built.dim}) -> {out}"
    )
    return 0


def _ranked_units_for_context(
    index: indexmod.ShardedIndex,
    query_vector,
    unit_texts: dict[str, str],
    max_words: int,
) -> list[indexmod.ScoredHit]:
    """Fetch units until their texts cover the largest word budget."""
    if index.count == 0:
        return []
    m = 64
    while True:
        hits = retrievemod.retrieve_units(index, query_vector, min(m, index.count))
        words = sum(len(unit_texts[h.unit_id].split()) for h in hits)
        if words >= max_words or m >= index.count:
            return hits
        m *= 2


def cmd_search(config: RunConfig) -> int:
    if config.dataset is None:
        raise ConfigError("search needs a dataset path (--dataset or [paths].dataset)")
    index = indexmod.load_index(
        _require(_index_path(config, config.granularity), "index")
    )
    records = corpusmod.load_unit_file(
        _require(_unit_path(config, config.granularity), "segment")
    )
    provenance = {r.unit_id: r.passage_id for r in records}
    unit_texts = {r.unit_id: r.text for r in records}
    examples = evalmod.load_qa_examples(config.dataset)
    provider = make_provider(config)
    queries = provider.embed([e.question for e in examples])

    retrieval = retrievemod.RetrievalConfig(
        granularity=Granularity(config.granularity), k=max(config.k)
    )
    max_words = max(config.l_grid)
    run_rows = []
    unit_rows = []
    for example, query_vector in zip(examples, queries):
        passages = retrievemod.retrieve_passages(index, provenance, query_vector, retrieval)
        ranked = _ranked_units_for_context(index, query_vector, unit_texts, max_words)
        contexts = {
            str(l): retrievemod.assemble_context(
                [(h.unit_id, unit_texts[h.unit_id]) for h in ranked], l
            ).text
            for l in config.l_grid
        }
        run_rows.append(
            {
                "qid": example.qid,
                "granularity": config.granularity,
                "passages": [
                    {
                        "passage_id": p.passage_id,
                        "score": p.score,
                        "best_unit_id": p.best_unit_id,
                    }
                    for p in passages
                ],
                "context_at": contexts,
            }
        )
        unit_rows.append(
            {
                "qid": example.qid,
                "granularity": config.granularity,
                "units": [{"unit_id": h.unit_id, "score": h.score} for h in ranked],
            }
        )
    _write_jsonl(_run_path(config, config.granularity), run_rows)
    _write_jsonl(_unit_run_path(config, config.granularity), unit_rows)
    print(
        f"searched {len(examples)} queries at {config.granularity} granularity -> "
        f"{_run_path(config, config.granularity)}"
    )
    return 0


def _load_run(path: Path) -> dict[str, list[str]]:
    """Run file -> qid -> ranked passage ids."""
    runs: dict[str, list[str]] = {}
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if not line:
                continue
            row = json.loads(line)
            runs[row["qid"]] = [p["passage_id"] for p in row["passages"]]
    return runs


def _load_unit_run(path: Path) -> dict[str, list[str]]:
    runs: dict[str, list[str]] = {}
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if not line:
                continue
            row = json.loads(line)
            runs[row["qid"]] = [u["unit_id"] for u in row["units"]]
    return runs


def _load_context_at(path: Path) -> dict[str, dict[str, str]]:
    contexts: dict[str, dict[str, str]] = {}
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if not line:
                continue
            row = json.loads(line)
            contexts[row["qid"]] = row.get("context_at", {})
    return contexts


def _granularities_with_runs(config: RunConfig) -> list[str]:
    return [
        g.value for g in Granularity if _run_path(config, g.value).exists()
    ]


def _parse_predictions_args(pairs: Sequence[str]) -> dict[int, Path]:
    out: dict[int, Path] = {}
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(
                f"--predictions expects L=PATH (e.g. 100=preds.jsonl), got {pair!r}"
            )
        l_str, path = pair.split("=", 1)
        try:
            out[int(l_str)] = Path(path)
        except ValueError:
            raise ConfigError(f"--predictions budget must be an integer, got {l_str!r}")
    return out


def _load_predictions(path: Path) -> dict[str, str]:
    predictions: dict[str, str] = {}
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if not line:
                continue
            row = json.loads(line)
            predictions[row["qid"]] = row.get("prediction", "")
    return predictions


def cmd_eval(config: RunConfig, predictions: dict[int, Path] | None = None) -> int:
    if config.dataset is None:
        raise ConfigError("eval needs a dataset path (--dataset or [paths].dataset)")
    examples = evalmod.load_qa_examples(config.dataset)
    examples_by_qid = {e.qid: e for e in examples}
    passage_records = corpusmod.load_unit_file(
        _require(_unit_path(config, "passage"), "segment")
    )
    passage_texts = {r.passage_id: r.text for r in passage_records}

    granularities = _granularities_with_runs(config)
    if not granularities:
        raise MissingArtifactError(_run_path(config, config.granularity), "search")

    reports: list[evalmod.MetricReport] = []
    for granularity in granularities:
        id_runs = _load_run(_run_path(config, granularity))
        text_runs = {
            qid: [passage_texts[pid] for pid in pids] for qid, pids in id_runs.items()
        }
        recall = evalmod.recall_at_k(text_runs, examples, config.k)

        unit_records = corpusmod.load_unit_file(
            _require(_unit_path(config, granularity), "segment")
        )
        unit_texts = {r.unit_id: r.text for r in unit_records}
        unit_runs = {
            qid: [unit_texts[uid] for uid in uids]
            for qid, uids in _load_unit_run(
                _require(_unit_run_path(config, granularity), "search")
            ).items()
        }
        curve = evalmod.answer_recall_curve(unit_runs, examples, sorted(config.l_grid))

        # Reader exchange: emit inputs for every stored budget, score any
        # predictions supplied back.
        contexts = _load_context_at(_run_path(config, granularity))
        for l in config.l_grid:
            rows = [
                {
                    "qid": qid,
                    "question": examples_by_qid[qid].question,
                    "context": per_l.get(str(l), ""),
                }
                for qid, per_l in contexts.items()
                if qid in examples_by_qid
            ]
            _write_jsonl(config.workdir / f"reader_input.{granularity}.l{l}.jsonl", rows)
        em: dict[int, float] = {}
        if predictions:
            em = evalmod.em_at_l(
                {l: _load_predictions(path) for l, path in predictions.items()},
                examples,
            )

        report = evalmod.MetricReport(
            granularity=granularity,
            n_questions=len(examples),
            recall_at_k=recall,
            em_at_l=em,
            answer_recall_curve=curve,
        )
        reports.append(report)
        report_path = config.workdir / f"report.{granularity}.json"
        with open(report_path, "w", encoding="utf-8") as handle:
            json.dump(report.to_dict(), handle, indent=2)
            handle.write("\n")

    table = evalmod.render_comparison_table(reports)
    print(table)
    csv_path = config.workdir / "comparison.csv"
    with open(csv_path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["granularity", "metric", "x", "value"])
        for report in reports:
            for k, v in sorted(report.recall_at_k.items()):
                writer.writerow([report.granularity, "recall_at_k", k, v])
            for l, v in sorted(report.em_at_l.items()):
                writer.writerow([report.granularity, "em_at_l", l, v])
            for l, v in sorted(report.answer_recall_curve.items()):
                writer.writerow([report.granularity, "answer_recall_curve", l, v])
    print(f"reports -> {config.workdir} (comparison.csv, report.<granularity>.json)")
    return 0


def cmd_popularity(config: RunConfig) -> int:
    if config.dataset is None:
        raise ConfigError("popularity needs a dataset path")
    examples = evalmod.load_qa_examples(config.dataset)
    missing = [e.qid for e in examples if not e.entity]
    if missing:
        raise ConfigError(
            f"{len(missing)} dataset rows lack an \"entity\" field "
            f"(first: {missing[0]!r})"
        )
    passage_records = corpusmod.load_unit_file(
        _require(_unit_path(config, "passage"), "segment")
    )
    bm25 = bm25mod.bm25_build(
        [(r.passage_id, r.text) for r in passage_records],
        k1=config.bm25_k1,
        b=config.bm25_b,
    )
    edges = tuple(config.bucket_edges)
    records: dict[str, evalmod.PopularityRecord] = {}
    for example in examples:
        if example.entity not in records:
            records[example.entity] = evalmod.estimate_popularity(
                example.entity, bm25, n=config.popularity_top_n, bucket_edges=edges
            )
    config.workdir.mkdir(parents=True, exist_ok=True)
    _write_jsonl(
        config.workdir / "popularity.jsonl",
        [
            {
                "entity": r.entity,
                "occurrence_count": r.occurrence_count,
                "bucket": r.bucket,
            }
            for r in records.values()
        ],
    )

    granularities = _granularities_with_runs(config)
    if granularities:
        passage_texts = {r.passage_id: r.text for r in passage_records}
        runs_by_granularity = {}
        for granularity in granularities:
            id_runs = _load_run(_run_path(config, granularity))
            runs_by_granularity[granularity] = {
                qid: [passage_texts[pid] for pid in pids]
                for qid, pids in id_runs.items()
            }
        k = max(config.k)
        table = evalmod.popularity_bucket_report(
            runs_by_granularity, examples, records, k, edges
        )
        csv_path = config.workdir / "popularity_buckets.csv"
        with open(csv_path, "w", encoding="utf-8", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["bucket", "label", "granularity", f"recall_at_{k}"])
            for bucket in sorted(table):
                for granularity, value in table[bucket].items():
                    writer.writerow(
                        [bucket, evalmod.bucket_label(bucket, edges), granularity, value]
                    )
        print(f"bucket report -> {csv_path}")
        header = ["bucket"] + granularities
        print("  ".join(header))
        for bucket in sorted(table):
            cells = [evalmod.bucket_label(bucket, edges)] + [
                f"{table[bucket][g]:.3f}" for g in granularities
            ]
            print("  ".join(cells))
    print(f"popularity records -> {config.workdir / 'popularity.jsonl'}")
    return 0


def cmd_stats(config: RunConfig) -> int:
    counts: dict[str, int] = {}
    avg_words: dict[str, float] = {}
    for granularity in Granularity:
        path = _unit_path(config, granularity.value)
        if not path.exists():
            continue
        records = corpusmod.load_unit_file(path)
        counts[granularity.value] = len(records)
        total = sum(r.word_count for r in records)
        avg_words[granularity.value] = total / len(records) if records else 0.0
    if not counts:
        raise MissingArtifactError(_unit_path(config, "passage"), "segment")
    n_passages = counts.get("passage", 0)
    payload = {
        "unit_counts": counts,
        "avg_words": avg_words,
        "sentences_per_passage": (
            counts.get("sentence", 0) / n_passages if n_passages else 0.0
        ),
        "propositions_per_passage": (
            counts.get("proposition", 0) / n_passages if n_passages else 0.0
        ),
    }
    print(json.dumps(payload, indent=2, sort_keys=True))
    return 0


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="TOML run configuration")
    common.add_argument("--seed", type=int, help="seed for all randomness (default 42)")
    common.add_argument(
        "--granularity",
        choices=["passage", "sentence", "proposition"],
        help="retrieval unit granularity",
    )
    common.add_argument("--shards", type=int, help="number of index shards (default 8)")
    common.add_argument("--k", help="comma-separated unique-passage cutoffs, e.g. 1,5,20")
    common.add_argument("--l-grid", help="comma-separated word budgets, e.g. 100,500")
    common.add_argument(
        "--provider",
        choices=["deterministic", "file", "remote"],
        help="embedding provider kind",
    )
    common.add_argument("--endpoint", help="remote embedding service base URL")
    common.add_argument("--model", help="remote model name")
    common.add_argument("--dim", type=int, help="deterministic embedder dimension")
    common.add_argument("--batch-size", type=int, help="remote batch size")
    common.add_argument("--workdir", type=Path, help="artifact directory")
    common.add_argument("--corpus", type=Path, help="corpus JSONL path")
    common.add_argument("--propositions", type=Path, help="proposition JSONL path")
    common.add_argument("--dataset", type=Path, help="QA dataset JSONL path")

    parser = argparse.ArgumentParser(
        prog="multigrain",
        description="Multi-granularity dense retrieval engine and QA evaluation harness",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("segment", parents=[common], help="segment corpus into unit files")
    sub.add_parser("embed", parents=[common], help="embed one granularity's units")
    sub.add_parser("index", parents=[common], help="build the sharded index")
    sub.add_parser("search", parents=[common], help="run retrieval for a dataset")
    eval_parser = sub.add_parser("eval", parents=[common], help="compute metric reports")
    eval_parser.add_argument(
        "--predictions",
        action="append",
        default=[],
        metavar="L=PATH",
        help="reader predictions JSONL for budget L (repeatable)",
    )
    sub.add_parser("popularity", parents=[common], help="entity popularity via BM25")
    sub.add_parser("stats", parents=[common], help="print corpus statistics")
    return parser


def _apply_overrides(config: RunConfig, args: argparse.Namespace) -> RunConfig:
    direct = [
        "seed", "granularity", "shards", "provider", "endpoint", "model",
        "dim", "batch_size", "workdir", "corpus", "propositions", "dataset",
    ]
    for name in direct:
        value = getattr(args, name, None)
        if value is not None:
            setattr(config, name, value)
    if getattr(args, "k", None) is not None:
        config.k = [int(x) for x in str(args.k).split(",") if x]
    if getattr(args, "l_grid", None) is not None:
        config.l_grid = [int(x) for x in str(args.l_grid).split(",") if x]
    return config


def main(argv: Sequence[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        config = load_config(args.config) if args.config else RunConfig()
        config = _apply_overrides(config, args)
        config.validate()
        if args.command == "segment":
            return cmd_segment(config)
        if args.command == "embed":
            return cmd_embed(config)
        if args.command == "index":
            return cmd_index(config)
        if args.command == "search":
            return cmd_search(config)
        if args.command == "eval":
            return cmd_eval(config, _parse_predictions_args(args.predictions))
        if args.command == "popularity":
            return cmd_popularity(config)
        if args.command == "stats":
            return cmd_stats(config)
        parser.error(f"unknown command {args.command!r}")
    except _INPUT_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # pipeline failure
        log.exception("pipeline failure")
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
