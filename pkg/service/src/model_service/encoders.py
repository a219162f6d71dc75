"""Text encoders served over the wire.

The built-in tiny encoder is a small randomly initialized torch network
(hashed-token embeddings, mean pooling, two linear layers). It is seeded,
runs in eval mode, and encodes texts one at a time, so outputs are bitwise
reproducible regardless of request batching. Hugging Face sentence encoders
can be served instead when their weights are available locally.
"""

from __future__ import annotations

import hashlib
import re

import numpy as np
import torch
from torch import nn

_TOKEN_RE = re.compile(r"[a-z0-9]+")


def _hash_tokens(text: str, buckets: int) -> list[int]:
    tokens = _TOKEN_RE.findall(text.lower())
    out = []
    for token in tokens:
        digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
        out.append(int.from_bytes(digest, "little") % buckets)
    return out


class TinyHashEncoder(nn.Module):
    """Seeded random-weight encoder; deterministic inference on CPU."""

    def __init__(self, dim: int = 64, buckets: int = 4096, seed: int = 42) -> None:
        super().__init__()
        generator = torch.Generator().manual_seed(seed)
        self.dim = dim
        self.buckets = buckets
        self.embedding = nn.Embedding(buckets, 128)
        self.hidden = nn.Linear(128, 128)
        self.out = nn.Linear(128, dim)
        with torch.no_grad():
            for parameter in self.parameters():
                parameter.copy_(
                    torch.empty_like(parameter).normal_(0.0, 0.2, generator=generator)
                )
        self.eval()

    @torch.no_grad()
    def encode_one(self, text: str) -> np.ndarray:
        indices = _hash_tokens(text, self.buckets)
        if indices:
            pooled = self.embedding(torch.tensor(indices, dtype=torch.long)).mean(dim=0)
        else:
            pooled = torch.zeros(128)
        hidden = torch.tanh(self.hidden(pooled))
        return self.out(hidden).numpy().astype(np.float32)

    def encode(self, texts: list[str]) -> np.ndarray:
        # One text at a time keeps results independent of batch shape.
        if not texts:
            return np.zeros((0, self.dim), dtype=np.float32)
        return np.stack([self.encode_one(t) for t in texts])


class SentenceTransformerEncoder:
    """Wraps a locally available sentence-transformers checkpoint."""

    def __init__(self, name: str) -> None:
        from sentence_transformers import SentenceTransformer

        self._model = SentenceTransformer(name, device="cpu")
        self._model.eval()
        self.dim = int(self._model.get_sentence_embedding_dimension())

    def encode(self, texts: list[str]) -> np.ndarray:
        if not texts:
            return np.zeros((0, self.dim), dtype=np.float32)
        with torch.no_grad():
            vectors = self._model.encode(
                list(texts), convert_to_numpy=True, show_progress_bar=False
            )
        return np.asarray(vectors, dtype=np.float32)


def load_encoder(name: str, dim: int = 64, seed: int = 42):
    """``hf:<checkpoint>`` loads a sentence-transformers model; anything else
    gets the built-in tiny encoder."""
    if name.startswith("hf:"):
        return SentenceTransformerEncoder(name[3:])
    return TinyHashEncoder(dim=dim, seed=seed)
