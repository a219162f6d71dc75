"""Multi-granularity dense retrieval engine and QA evaluation harness."""

from .corpus import (
    Corpus,
    CorpusStats,
    Document,
    Granularity,
    Passage,
    Unit,
    build_corpus,
    chunk_passages,
    corpus_stats,
    count_words,
    ingest_propositions,
    split_sentences,
)
from .embed import (
    DeterministicProvider,
    EmbeddingMatrix,
    FileProvider,
    RemoteProvider,
    deterministic_embed,
    embed_batch,
    load_embeddings,
    save_embeddings,
)
from .index import ScoredHit, ShardedIndex, build_index, load_index, save_index, search
from .retrieve import (
    AssembledContext,
    RetrievalConfig,
    ScoredPassage,
    assemble_context,
    retrieve_passages,
    retrieve_units,
)

__version__ = "0.1.0"
