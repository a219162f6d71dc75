"""Wire conformance acceptance: the retrieval engine's embedding client talks
to this service over real HTTP and gets order-preserving, length-matching,
deterministic vectors; /read answers a known QA pair; schemas validate."""

import threading
import time

import numpy as np
import pytest
import requests
import uvicorn

from model_service.app import ServiceSettings, create_app

from multigrain.embed import RemoteProvider, embed_batch

MODEL = "tiny-hash-encoder"


@pytest.fixture(scope="module")
def live_server():
    config = uvicorn.Config(
        create_app(ServiceSettings()), host="127.0.0.1", port=0, log_level="warning"
    )
    server = uvicorn.Server(config)
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    deadline = time.time() + 30
    while not server.started:
        if time.time() > deadline:
            raise RuntimeError("server did not start")
        time.sleep(0.05)
    port = server.servers[0].sockets[0].getsockname()[1]
    yield f"http://127.0.0.1:{port}"
    server.should_exit = True
    thread.join(timeout=10)


def test_a9_wire_conformance(live_server):
    start = time.perf_counter()

    provider = RemoteProvider(live_server, MODEL, batch_size=32)
    texts = [f"passage number {i} about rivers and roads" for i in range(100)]
    matrix = embed_batch(texts, provider, ids=[f"u{i}" for i in range(100)])

    # Length match and learned dimension.
    assert matrix.count == 100
    assert matrix.dim == 64 == provider.dim

    # Determinism: a second pass over the wire is bitwise identical.
    again = embed_batch(texts, provider, ids=[f"v{i}" for i in range(100)])
    assert np.array_equal(matrix.vectors, again.vectors)

    # Order preservation: each row equals its single-text embedding.
    for i in (0, 17, 63, 99):
        single = provider.embed([texts[i]])
        assert np.array_equal(matrix.vectors[i], single[0])

    # Protocol schemas: exact field names on the wire.
    raw = requests.post(
        f"{live_server}/embed", json={"model": MODEL, "texts": ["check"]}, timeout=30
    )
    assert raw.status_code == 200
    assert set(raw.json()) == {"dim", "embeddings"}

    read = requests.post(
        f"{live_server}/read",
        json={
            "question": "What is the angle of the tower?",
            "context": "Nothing here. The tower leans at an angle of 3.99 degrees.",
        },
        timeout=30,
    )
    assert read.status_code == 200
    assert set(read.json()) == {"prediction"}
    assert read.json()["prediction"] != ""

    health = requests.get(f"{live_server}/healthz", timeout=30)
    assert health.status_code == 200
    assert MODEL in health.json()["models"]

    elapsed = time.perf_counter() - start
    assert elapsed < 120.0
    print(f"\n[A9] wire conformance over live HTTP ({elapsed:.1f}s): PASS")
