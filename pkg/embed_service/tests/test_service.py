"""Contract tests for the embedding sidecar.

These run against the service alone (offline toy encoder); the same
assertions hold for a real sentence-transformer when one is available.
"""
import numpy as np
import pytest
from fastapi.testclient import TestClient

from embed_service.app import create_app
from embed_service.encoders import EncoderError, ToyMultilingualEncoder, load_encoder


@pytest.fixture(scope="module")
def client():
    return TestClient(create_app(model_spec="toy://dim=256"))


def _embed(client, texts, expect=200):
    resp = client.post("/embed", json={"texts": texts})
    assert resp.status_code == expect, resp.text
    return resp.json()


def _cos(a, b):
    a, b = np.asarray(a), np.asarray(b)
    return float(np.dot(a, b) / (np.linalg.norm(a) * np.linalg.norm(b)))


def test_health(client):
    resp = client.get("/health")
    assert resp.status_code == 200
    body = resp.json()
    assert body["status"] == "ok"
    assert body["model"] == "toy-multilingual-256"
    assert body["dim"] == 256


def test_embed_basic_shape(client):
    body = _embed(client, ["hello world"])
    assert body["dim"] == 256
    assert body["model"] == "toy-multilingual-256"
    assert len(body["vectors"]) == 1
    assert len(body["vectors"][0]) == 256


def test_identical_inputs_identical_vectors(client):
    a = _embed(client, ["the president spoke"])
    b = _embed(client, ["the president spoke"])
    assert a["vectors"] == b["vectors"]


def test_statelessness_across_batches(client):
    alone = _embed(client, ["storm hits the city"])["vectors"][0]
    batched = _embed(client, ["unrelated text", "storm hits the city"])["vectors"][1]
    assert alone == batched


def test_batch_order_preserved(client):
    texts = ["first text", "second text", "third text"]
    vectors = _embed(client, texts)["vectors"]
    assert len(vectors) == 3
    singles = [_embed(client, [t])["vectors"][0] for t in texts]
    assert vectors == singles
    reversed_vectors = _embed(client, texts[::-1])["vectors"]
    assert reversed_vectors == singles[::-1]


def test_dim_constant_across_requests(client):
    dims = set()
    for texts in (["a b c"], ["x"], ["longer text here", "and another"]):
        body = _embed(client, texts)
        dims.add(body["dim"])
        dims.update(len(v) for v in body["vectors"])
    assert dims == {256}


def test_translation_pair_scores_above_unrelated(client):
    english = "the president spoke to the parliament"
    spanish = "el presidente habló con el parlamento"
    german = "der präsident sprach mit dem parlament"
    unrelated = "the football team won the game yesterday"
    vectors = _embed(client, [english, spanish, german, unrelated])["vectors"]
    en, es, de, other = vectors
    assert _cos(en, es) > _cos(en, other)
    assert _cos(en, de) > _cos(en, other)
    assert _cos(es, de) > _cos(es, other)


def test_empty_texts_rejected(client):
    resp = client.post("/embed", json={"texts": []})
    assert resp.status_code == 400
    assert "error" in resp.json()
    resp = client.post("/embed", json={"texts": ["ok", "  "]})
    assert resp.status_code == 400
    resp = client.post("/embed", json={"wrong": "shape"})
    assert resp.status_code == 400


def test_overlong_text_truncated_with_warning():
    client = TestClient(create_app(model_spec="toy://dim=64", max_chars=50))
    long_text = "word " * 30
    body = _embed(client, [long_text])
    assert body["warnings"] == ["text 0 truncated to 50 chars"]
    truncated = _embed(client, [long_text[:50]])
    assert body["vectors"] == truncated["vectors"]


def test_encoder_load_failure_returns_503(monkeypatch):
    monkeypatch.delenv("EMBED_MODEL", raising=False)
    app = create_app(model_spec="toy://dim=banana")
    client = TestClient(app)
    assert client.post("/embed", json={"texts": ["x"]}).status_code == 503
    assert client.get("/health").status_code == 503


def test_toy_encoder_direct():
    enc = ToyMultilingualEncoder(dim=128)
    out = enc.encode(["police report", "informe de la policía"])
    assert out.shape == (2, 128)
    assert np.allclose(np.linalg.norm(out, axis=1), 1.0)
    with pytest.raises(EncoderError):
        ToyMultilingualEncoder(dim=2)


def test_load_encoder_specs():
    enc = load_encoder("toy://dim=32")
    assert enc.dim == 32
    enc = load_encoder("toy://")
    assert enc.dim == 512
    with pytest.raises(EncoderError):
        load_encoder("toy://dim=abc")


def test_real_model_if_available():
    try:
        encoder = load_encoder("sentence-transformers/distiluse-base-multilingual-cased-v2")
    except EncoderError as exc:
        pytest.skip(f"real encoder unavailable: {exc}")
    client = TestClient(create_app(encoder=encoder))
    body = _embed(client, ["the president spoke", "el presidente habló", "completely different topic: quantum chemistry"])
    assert body["dim"] == encoder.dim
    en, es, other = body["vectors"]
    assert _cos(en, es) > _cos(en, other)


def test_primary_service_client_interop():
    """Round-trip through the primary package's HTTP client, if installed."""
    storystream_corpus = pytest.importorskip(
        "storystream.corpus", reason="primary package not installed"
    )
    import threading
    import time

    import uvicorn

    app = create_app(model_spec="toy://dim=96")
    config = uvicorn.Config(app, host="127.0.0.1", port=8917, log_level="error")
    server = uvicorn.Server(config)
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    try:
        for _ in range(100):
            if server.started:
                break
            time.sleep(0.05)
        assert server.started, "uvicorn did not start"
        client = storystream_corpus.ServiceClient("http://127.0.0.1:8917", batch_size=2)
        vectors, dim, model = client.encode(["uno", "dos", "tres"])
        assert dim == 96 and model == "toy-multilingual-96"
        assert len(vectors) == 3 and vectors[0].shape == (96,)
    finally:
        server.should_exit = True
        thread.join(timeout=5)
