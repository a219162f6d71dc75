"""Construct a small adversarial corpus where unit granularity matters.

Each document states one target fact inside a distractor-heavy fact passage:
a short intro sentence names the entity, the fact sentence hides the answer
behind a pronoun, and several decoy passages repeat the entity name without
the fact. The proposition file restates the fact self-contained. Under a
lexical-overlap embedder this forces proposition retrieval to find the fact
first, sentence retrieval to reach the right passage via the intro, and
passage retrieval to drown in the decoys.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from pathlib import Path

from .corpus import Document
from .evaluate import QAExample

_NAME_SYLLABLES = [
    "vor", "zan", "thal", "quil", "mor", "bex", "dran", "fyx", "gol", "hurn",
    "jev", "kol", "lum", "nyr", "pesh", "rok", "syl", "tarn", "ulm", "wex",
]
_PLACE_KINDS = ["Citadel", "Keep", "Bastion", "Spire", "Sanctum", "Vault"]
_ERA_ADJECTIVES = [
    "amber", "cobalt", "crimson", "ivory", "obsidian", "silver", "umber",
    "verdant", "ashen", "golden",
]
_ERA_NOUNS = [
    "falcon", "heron", "lynx", "otter", "raven", "serpent", "stag", "wolf",
    "badger", "crane",
]
_FILLER = [
    "Merchants carry grain and salt along the river road every market season.",
    "Local records describe long winters and careful stores of dried fish.",
    "Travelers rest at roadside inns before crossing the high passes.",
    "The province levies a modest toll on carts, barges and pack mules.",
    "Stone bridges span the lowland fords where caravans gather at dawn.",
    "Harvest festivals bring weavers, smiths and traders to the square.",
    "Old survey maps mark quarries, orchards and terraced fields nearby.",
    "Couriers change horses twice before reaching the coastal markets.",
]
_DECOY_TEMPLATES = [
    "{entity} hosts a noisy copper fair where traders barter tools, cloth and hides.",
    "{entity} keeps a small garrison that drills each morning on the north terrace.",
    "{entity} collects river tolls from heavy barges hauling timber, ore and wool.",
    "{entity} maintains dusty archives of tax rolls, survey ledgers and land deeds.",
    "{entity} shelters weary pilgrims during the long storm months of every year.",
    "{entity} overlooks terraced vineyards that supply the busy lowland wine markets.",
    "{entity} guards deep granaries stocked carefully against the lean winter seasons.",
    "{entity} trains patient falconers who patrol the beacon towers after nightfall.",
]


@dataclass(frozen=True)
class ToyCorpus:
    documents: list[Document]
    propositions: dict[str, list[str]]  # passage_id -> proposition strings
    examples: list[QAExample]


def build_adversarial_corpus(
    num_docs: int = 50, decoys_per_doc: int = 5, seed: int = 42
) -> ToyCorpus:
    """Deterministic generator; one paragraph per passage so ids are stable."""
    rng = random.Random(seed)
    documents: list[Document] = []
    propositions: dict[str, list[str]] = {}
    examples: list[QAExample] = []
    used_names: set[str] = set()
    used_eras: set[tuple[str, str]] = set()

    for doc_index in range(num_docs):
        while True:
            name = "".join(rng.sample(_NAME_SYLLABLES, 3)).capitalize()
            if name not in used_names:
                used_names.add(name)
                break
        entity = f"{name} {rng.choice(_PLACE_KINDS)}"
        while True:
            era = (rng.choice(_ERA_ADJECTIVES), rng.choice(_ERA_NOUNS))
            if era not in used_eras:
                used_eras.add(era)
                break
        answer = f"{era[0]} {era[1]} era"
        doc_id = f"toy{doc_index:03d}"

        intro = f"{entity} crowns the valley road."
        fact = f"It was founded during the {answer}, according to the chronicle."
        filler = rng.sample(_FILLER, 4)
        fact_paragraph = " ".join([intro, *filler, fact])

        paragraphs = [fact_paragraph]
        decoy_sentence_lists: list[list[str]] = []
        for _ in range(decoys_per_doc):
            decoys = [t.format(entity=entity) for t in rng.sample(_DECOY_TEMPLATES, 3)]
            decoy_sentence_lists.append(decoys)
            paragraphs.append(" ".join(decoys))

        documents.append(
            Document(doc_id=doc_id, title=entity, paragraphs=tuple(paragraphs))
        )

        # Every paragraph fits one chunk, so passage ids follow paragraph order.
        propositions[f"{doc_id}:0"] = [
            f"{entity} crowns the valley road.",
            f"{entity} was founded during the {answer}.",
            *filler,
        ]
        for decoy_index, decoys in enumerate(decoy_sentence_lists):
            propositions[f"{doc_id}:{decoy_index + 1}"] = list(decoys)

        examples.append(
            QAExample(
                qid=f"q{doc_index:03d}",
                question=f"When was {entity} founded?",
                answers=(answer,),
                entity=entity,
            )
        )

    return ToyCorpus(documents=documents, propositions=propositions, examples=examples)


def write_toy_corpus(toy: ToyCorpus, directory: str | Path) -> dict[str, Path]:
    """Write corpus, proposition and dataset JSON-lines files; returns paths."""
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    corpus_path = root / "corpus.jsonl"
    props_path = root / "propositions.jsonl"
    dataset_path = root / "dataset.jsonl"
    with open(corpus_path, "w", encoding="utf-8") as handle:
        for doc in toy.documents:
            handle.write(
                json.dumps(
                    {
                        "id": doc.doc_id,
                        "title": doc.title,
                        "paragraphs": list(doc.paragraphs),
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )
    with open(props_path, "w", encoding="utf-8") as handle:
        for passage_id, props in toy.propositions.items():
            handle.write(
                json.dumps(
                    {"passage_id": passage_id, "propositions": props},
                    ensure_ascii=False,
                )
                + "\n"
            )
    with open(dataset_path, "w", encoding="utf-8") as handle:
        for example in toy.examples:
            handle.write(
                json.dumps(
                    {
                        "qid": example.qid,
                        "question": example.question,
                        "answers": list(example.answers),
                        "entity": example.entity,
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )
    return {"corpus": corpus_path, "propositions": props_path, "dataset": dataset_path}
