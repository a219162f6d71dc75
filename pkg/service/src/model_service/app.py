"""FastAPI app exposing /embed, /read and /healthz.

One process serves one embedding model, selected at startup; the request's
``model`` field is validated against it, not used for hot-swapping. Requests
are handled concurrently but inference is serialized per device.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from .encoders import load_encoder
from .reader import ExtractiveReader

DEFAULT_MODEL_NAME = "tiny-hash-encoder"
DEFAULT_BATCH_CAP = 128


@dataclass
class ServiceSettings:
    model_name: str = DEFAULT_MODEL_NAME
    dim: int = 64
    seed: int = 42
    batch_cap: int = DEFAULT_BATCH_CAP
    reader: str = "extractive"  # or "none"
    extra_model_aliases: tuple[str, ...] = field(default_factory=tuple)


class EmbedRequest(BaseModel):
    model: str
    texts: list[str] = Field(min_length=1)


class EmbedResponse(BaseModel):
    dim: int
    embeddings: list[list[float]]


class ReadRequest(BaseModel):
    question: str
    context: str


class ReadResponse(BaseModel):
    prediction: str


def create_app(settings: ServiceSettings | None = None) -> FastAPI:
    settings = settings or ServiceSettings()
    encoder = load_encoder(settings.model_name, dim=settings.dim, seed=settings.seed)
    reader = ExtractiveReader() if settings.reader == "extractive" else None
    known_models = {settings.model_name, *settings.extra_model_aliases}
    inference_lock = threading.Lock()

    app = FastAPI(title="model-service")

    @app.post("/embed", response_model=EmbedResponse)
    def embed(request: EmbedRequest) -> EmbedResponse:
        if request.model not in known_models:
            raise HTTPException(
                status_code=404, detail=f"unknown model {request.model!r}"
            )
        if len(request.texts) > settings.batch_cap:
            raise HTTPException(
                status_code=413,
                detail=f"batch of {len(request.texts)} exceeds cap {settings.batch_cap}",
            )
        with inference_lock:
            vectors = encoder.encode(request.texts)
        return EmbedResponse(dim=encoder.dim, embeddings=vectors.tolist())

    @app.post("/read", response_model=ReadResponse)
    def read(request: ReadRequest) -> ReadResponse:
        if reader is None:
            raise HTTPException(status_code=501, detail="reader not configured")
        return ReadResponse(prediction=reader.answer(request.question, request.context))

    @app.get("/healthz")
    def healthz() -> dict:
        return {"status": "ok", "models": sorted(known_models)}

    return app
