"""Lexical extractive reader: best-overlap sentence from the context."""

from __future__ import annotations

import re

_TOKEN_RE = re.compile(r"[a-z0-9]+")
_SENTENCE_SPLIT_RE = re.compile(r"(?<=[.!?])\s+")

_STOPWORDS = frozenset(
    "a an the is are was were be been what which who whom whose when where why "
    "how of in on at to for by with from and or not no do does did it this "
    "that these those".split()
)


def _content_tokens(text: str) -> set[str]:
    return {t for t in _TOKEN_RE.findall(text.lower()) if t not in _STOPWORDS}


class ExtractiveReader:
    """Returns the context sentence sharing the most content words with the
    question; empty context yields an empty prediction, never an error."""

    def answer(self, question: str, context: str) -> str:
        context = context.strip()
        if not context:
            return ""
        question_tokens = _content_tokens(question)
        sentences = [s for s in _SENTENCE_SPLIT_RE.split(context) if s.strip()]
        if not sentences:
            return ""
        best = max(
            sentences,
            key=lambda s: (len(_content_tokens(s) & question_tokens), -len(s)),
        )
        return best.strip()
