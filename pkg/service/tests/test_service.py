import numpy as np
import pytest
from fastapi.testclient import TestClient

from model_service.app import ServiceSettings, create_app
from model_service.encoders import TinyHashEncoder
from model_service.reader import ExtractiveReader

MODEL = "tiny-hash-encoder"


@pytest.fixture(scope="module")
def client():
    return TestClient(create_app())


class TestEmbedEndpoint:
    def test_shape_matches_model_card(self, client):
        response = client.post(
            "/embed", json={"model": MODEL, "texts": ["one", "two"]}
        )
        assert response.status_code == 200
        body = response.json()
        assert body["dim"] == 64
        assert len(body["embeddings"]) == 2
        assert all(len(row) == body["dim"] for row in body["embeddings"])

    def test_response_field_names_exact(self, client):
        response = client.post("/embed", json={"model": MODEL, "texts": ["x"]})
        assert set(response.json()) == {"dim", "embeddings"}

    def test_same_text_twice_identical(self, client):
        response = client.post(
            "/embed", json={"model": MODEL, "texts": ["repeat me", "repeat me"]}
        )
        rows = response.json()["embeddings"]
        assert rows[0] == rows[1]

    def test_order_preservation(self, client):
        texts = [f"text {i}" for i in range(10)]
        batch = client.post("/embed", json={"model": MODEL, "texts": texts}).json()
        for i, text in enumerate(texts):
            single = client.post(
                "/embed", json={"model": MODEL, "texts": [text]}
            ).json()
            assert batch["embeddings"][i] == single["embeddings"][0]

    def test_unknown_model_404_names_model(self, client):
        response = client.post("/embed", json={"model": "missing-model", "texts": ["x"]})
        assert response.status_code == 404
        assert "missing-model" in response.json()["detail"]

    def test_oversized_batch_413_names_cap(self, client):
        response = client.post(
            "/embed", json={"model": MODEL, "texts": ["x"] * 129}
        )
        assert response.status_code == 413
        assert "128" in response.json()["detail"]

    def test_empty_texts_rejected(self, client):
        response = client.post("/embed", json={"model": MODEL, "texts": []})
        assert response.status_code == 422


class TestReadEndpoint:
    def test_verbatim_answer_sentence(self, client):
        response = client.post(
            "/read",
            json={
                "question": "What is the angle of the tower?",
                "context": "It rains a lot. The tower leans at an angle of 3.99 "
                "degrees. Cats sleep.",
            },
        )
        assert response.status_code == 200
        prediction = response.json()["prediction"]
        assert prediction
        assert "3.99" in prediction

    def test_empty_context_never_crashes(self, client):
        response = client.post("/read", json={"question": "who?", "context": ""})
        assert response.status_code == 200
        assert isinstance(response.json()["prediction"], str)

    def test_response_field_names_exact(self, client):
        response = client.post("/read", json={"question": "q", "context": "Some text."})
        assert set(response.json()) == {"prediction"}

    def test_reader_disabled_gives_501(self):
        disabled = TestClient(create_app(ServiceSettings(reader="none")))
        response = disabled.post("/read", json={"question": "q", "context": "c"})
        assert response.status_code == 501


class TestHealthz:
    def test_lists_loaded_models(self, client):
        response = client.get("/healthz")
        assert response.status_code == 200
        assert MODEL in response.json()["models"]


class TestTinyEncoder:
    def test_deterministic_across_instances(self):
        a = TinyHashEncoder(dim=32, seed=7).encode(["hello there"])
        b = TinyHashEncoder(dim=32, seed=7).encode(["hello there"])
        assert np.array_equal(a, b)

    def test_seed_changes_weights(self):
        a = TinyHashEncoder(dim=32, seed=1).encode(["hello"])
        b = TinyHashEncoder(dim=32, seed=2).encode(["hello"])
        assert not np.array_equal(a, b)

    def test_empty_text_encodes(self):
        vec = TinyHashEncoder(dim=32, seed=1).encode([""])
        assert vec.shape == (1, 32)
        assert np.all(np.isfinite(vec))

    def test_batch_independent_of_grouping(self):
        encoder = TinyHashEncoder(dim=32, seed=3)
        texts = ["a b c", "d e", "f"]
        whole = encoder.encode(texts)
        parts = np.concatenate([encoder.encode(texts[:1]), encoder.encode(texts[1:])])
        assert np.array_equal(whole, parts)


class TestReader:
    def test_picks_overlapping_sentence(self):
        reader = ExtractiveReader()
        out = reader.answer(
            "Where do otters live?",
            "Bears roam forests. Otters live in rivers. Hawks fly high.",
        )
        assert out == "Otters live in rivers."

    def test_empty_context(self):
        assert ExtractiveReader().answer("q?", "  ") == ""
