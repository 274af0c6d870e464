import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tool2agent import (
    CatalogEntity,
    EmbeddingCache,
    EmbeddingProviderSpec,
    EmbeddingVector,
    Embedder,
    Kind,
    build_dense,
    dense_scores,
    embed_batch,
    hash_embed,
)
from tool2agent.dense import DenseIndex, load_dense, save_dense
from tool2agent.errors import CredentialMissing, DimensionMismatch, IndexFormatError, ProviderError

HASH = EmbeddingProviderSpec("deterministic_hash", "hash", 64)


def cos(a, b):
    return float(np.dot(a.values, b.values))


def test_hash_embed_deterministic():
    a, b = embed_batch(HASH, ["abc"]), embed_batch(HASH, ["abc"])
    assert a[0].values.tobytes() == b[0].values.tobytes()


def test_hash_embed_unit_norm():
    v = embed_batch(HASH, ["x"])[0]
    assert v.dimension == 64
    assert abs(np.linalg.norm(v.values) - 1.0) <= 1e-6


def test_shared_token_positive_cosine():
    assert cos(hash_embed("alpha", 64), hash_embed("alpha beta", 64)) > 0


def test_empty_text_is_flagged_zero():
    v = hash_embed("", 64)
    assert v.is_zero and not v.values.any()


def test_disjoint_vocabulary_near_orthogonal():
    # frozen from an offline run: 0 of 1000 random single-token pairs reached |cos| >= 0.2 at dim 4096
    rng = np.random.default_rng(3)
    letters = np.array(list("abcdefghijklmnopqrstuvwxyz"))
    bad = 0
    for i in range(1000):
        a, b = ("".join(rng.choice(letters, 8)) for _ in range(2))
        if a != b:
            bad += abs(cos(hash_embed(a, 4096, seed=i), hash_embed(b, 4096, seed=i))) >= 0.2
    assert bad <= 5


def test_seed_changes_embedding():
    assert not np.array_equal(hash_embed("alpha", 64, 0).values, hash_embed("alpha", 64, 1).values)


def test_dimension_floor():
    with pytest.raises(ValueError):
        hash_embed("x", 4)


def test_normalized_rejects_bad_input():
    with pytest.raises(ValueError):
        EmbeddingVector.normalized([[1.0]])
    with pytest.raises(ValueError):
        EmbeddingVector.normalized([np.nan, 1.0])


def test_cache_coherence_counts_requests(tmp_path):
    emb = Embedder(HASH, EmbeddingCache(tmp_path))
    first = emb.embed_batch(["a b", "c", "a b"])
    assert emb.requests == 1
    second = emb.embed_batch(["a b", "c"])
    assert emb.requests == 1
    assert all(x.equals(y) for x, y in zip(first, second))

    # a fresh process (new cache object) reads the same files back
    cold = Embedder(HASH, EmbeddingCache(tmp_path))
    third = cold.embed_batch(["c", "a b"])
    assert cold.requests == 0
    assert third[0].equals(first[1]) and third[1].equals(first[0])
    files = list(tmp_path.rglob("*.npy"))
    assert len(files) == 2
    assert all(f.parent.name == f.stem[:2] for f in files)


def test_cache_key_separates_models(tmp_path):
    cache = EmbeddingCache(tmp_path)
    a = Embedder(HASH, cache).embed("alpha")
    b = Embedder(EmbeddingProviderSpec("deterministic_hash", "hash", 64, seed=5), cache).embed("alpha")
    assert not a.equals(b)


# --- HTTP provider ----------------------------------------------------------

class StubAPI:
    """Tiny embedding API: returns un-normalized vectors derived from the text."""

    def __init__(self, dimension=16, failures=(), wrong_dim=False):
        self.dimension = dimension
        self.failures = list(failures)
        self.wrong_dim = wrong_dim
        self.calls = []
        api = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *a):
                pass

            def do_POST(self):
                body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
                api.calls.append({"body": body, "auth": self.headers.get("Authorization")})
                if api.failures:
                    status = api.failures.pop(0)
                    self.send_response(status)
                    self.end_headers()
                    return
                dim = api.dimension + (1 if api.wrong_dim else 0)
                data = [
                    {"index": i, "embedding": (3.0 * hash_embed(t, max(dim, 8)).values[:dim]).tolist()}
                    for i, t in enumerate(body["input"])
                ]
                payload = json.dumps({"data": list(reversed(data))}).encode()
                self.send_response(200)
                self.send_header("Content-Length", str(len(payload)))
                self.end_headers()
                self.wfile.write(payload)

        self.server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.url = f"http://127.0.0.1:{self.server.server_address[1]}/v1/embeddings"
        threading.Thread(target=self.server.serve_forever, daemon=True).start()

    def close(self):
        self.server.shutdown()
        self.server.server_close()


@pytest.fixture
def api():
    stub = StubAPI()
    yield stub
    stub.close()


def http_spec(url, **kw):
    base = dict(provider_kind="http_api", model_name="stub-embed", dimension=16, endpoint=url,
                credential_env_var="STUB_KEY", batch_size=2, backoff_seconds=0.001)
    base.update(kw)
    return EmbeddingProviderSpec(**base)


def test_http_provider_round_trip(api, monkeypatch, tmp_path):
    monkeypatch.setenv("STUB_KEY", "sekret")
    emb = Embedder(http_spec(api.url), EmbeddingCache(tmp_path))
    texts = ["one", "two", "three", "four", "five"]
    vecs = emb.embed_batch(texts)
    assert len(api.calls) == 3 and emb.requests == 3
    assert api.calls[0]["auth"] == "Bearer sekret"
    assert api.calls[0]["body"]["model"] == "stub-embed"
    for t, v in zip(texts, vecs):
        assert abs(np.linalg.norm(v.values) - 1) < 1e-6
        expected = EmbeddingVector.normalized(hash_embed(t, 16).values)
        assert np.allclose(v.values, expected.values)
    emb.embed_batch(texts)
    assert len(api.calls) == 3


def test_credential_missing(api, monkeypatch):
    monkeypatch.delenv("STUB_KEY", raising=False)
    with pytest.raises(CredentialMissing):
        Embedder(http_spec(api.url)).embed_batch(["x"])
    assert api.calls == []


def test_transient_failures_are_retried(monkeypatch):
    monkeypatch.setenv("STUB_KEY", "k")
    stub = StubAPI(failures=[503, 429])
    try:
        v = Embedder(http_spec(stub.url)).embed("x")
        assert len(stub.calls) == 3 and not v.is_zero
    finally:
        stub.close()


def test_gives_up_after_three_attempts(monkeypatch):
    monkeypatch.setenv("STUB_KEY", "k")
    stub = StubAPI(failures=[500, 502, 503, 504])
    try:
        with pytest.raises(ProviderError) as err:
            Embedder(http_spec(stub.url)).embed("x")
        assert err.value.status == 503 and err.value.retries == 2
        assert len(stub.calls) == 3
    finally:
        stub.close()


def test_client_error_not_retried(monkeypatch):
    monkeypatch.setenv("STUB_KEY", "k")
    stub = StubAPI(failures=[401])
    try:
        with pytest.raises(ProviderError) as err:
            Embedder(http_spec(stub.url)).embed("x")
        assert err.value.status == 401 and len(stub.calls) == 1
    finally:
        stub.close()


def test_unreachable_endpoint(monkeypatch):
    monkeypatch.setenv("STUB_KEY", "k")
    with pytest.raises(ProviderError) as err:
        Embedder(http_spec("http://127.0.0.1:9/nothing", timeout=0.5)).embed("x")
    assert err.value.retries == 2


def test_dimension_mismatch(monkeypatch):
    monkeypatch.setenv("STUB_KEY", "k")
    stub = StubAPI(wrong_dim=True)
    try:
        with pytest.raises(DimensionMismatch):
            Embedder(http_spec(stub.url)).embed("x")
    finally:
        stub.close()


def test_parallel_batches_keep_order(api, monkeypatch):
    monkeypatch.setenv("STUB_KEY", "k")
    texts = [f"text number {i}" for i in range(23)]
    parallel = Embedder(http_spec(api.url, batch_size=3, max_in_flight=4)).embed_batch(texts)
    serial = Embedder(http_spec(api.url, batch_size=3, max_in_flight=1)).embed_batch(texts)
    assert all(a.equals(b) for a, b in zip(parallel, serial))


def test_spec_validation():
    with pytest.raises(ValueError):
        EmbeddingProviderSpec("deterministic_hash", "h", 0)
    with pytest.raises(ValueError):
        EmbeddingProviderSpec("deterministic_hash", "h", 64, batch_size=0)
    with pytest.raises(ValueError):
        EmbeddingProviderSpec("http_api", "h", 64)


# --- search -------------------------------------------------------------------

def vec_index(rows):
    ents = [CatalogEntity(Kind.TOOL, f"e{i}", f"e{i}") for i in range(len(rows))]
    mats = np.vstack([EmbeddingVector.normalized(r).values for r in rows])
    return DenseIndex(tuple(ents), mats, "test:%d" % mats.shape[1])


def test_self_query_scores_one():
    rng = np.random.default_rng(0)
    idx = vec_index(rng.normal(size=(5, 8)))
    q = EmbeddingVector(idx.vectors[3].copy())
    ranked = dense_scores(idx, q)
    assert ranked[0].entity_id == "e3" and ranked[0].score == pytest.approx(1.0, abs=1e-6)
    assert len(ranked) == 5


def test_orthogonal_scores_zero():
    idx = vec_index([[1, 0, 0, 0, 0, 0, 0, 0], [0, 1, 0, 0, 0, 0, 0, 0]])
    ranked = dense_scores(idx, EmbeddingVector.normalized([1, 0, 0, 0, 0, 0, 0, 0]))
    assert {e.entity_id: e.score for e in ranked}["e1"] == pytest.approx(0.0, abs=1e-6)


def test_ranking_matches_bruteforce_oracle():
    rng = np.random.default_rng(42)
    raw = rng.normal(size=(10, 32))
    idx = vec_index(raw)
    for _ in range(20):
        qraw = rng.normal(size=32)
        q = EmbeddingVector.normalized(qraw)
        # oracle: plain-python cosine on the raw (unnormalized) vectors
        sims = []
        for i, row in enumerate(raw):
            dot = sum(float(a) * float(b) for a, b in zip(row, qraw))
            na = sum(float(a) ** 2 for a in row) ** 0.5
            nb = sum(float(b) ** 2 for b in qraw) ** 0.5
            sims.append((-dot / (na * nb), i))
        expected = [f"e{i}" for _, i in sorted(sims)]
        ranked = dense_scores(idx, q)
        assert [e.entity_id for e in ranked] == expected
        for e in ranked:
            assert e.score == pytest.approx(-dict((f"e{i}", s) for s, i in sims)[e.entity_id], abs=1e-9)


def test_ties_break_by_ordinal():
    idx = vec_index([[1, 1, 0, 0, 0, 0, 0, 0]] * 3 + [[0, 0, 1, 0, 0, 0, 0, 0]])
    ranked = dense_scores(idx, EmbeddingVector.normalized([0, 0, 0, 0, 0, 0, 0, 1]))
    assert [e.entity_id for e in ranked] == ["e0", "e1", "e2", "e3"]


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(1e-3, 1e3))
def test_scale_invariance(seed, scale):
    rng = np.random.default_rng(seed)
    raw = rng.normal(size=(8, 16))
    q = EmbeddingVector.normalized(rng.normal(size=16))
    a = [e.entity_id for e in dense_scores(vec_index(raw), q)]
    b = [e.entity_id for e in dense_scores(vec_index(raw * scale), q)]
    assert a == b


def test_dimension_mismatch_on_query():
    idx = vec_index(np.eye(8))
    with pytest.raises(DimensionMismatch):
        dense_scores(idx, EmbeddingVector.normalized(np.ones(9)))


def test_build_and_persist(tmp_path):
    entities = [CatalogEntity(Kind.AGENT, "a", "alpha: first"), CatalogEntity(Kind.TOOL, "t", "beta: second", "a")]
    emb = Embedder(HASH)
    idx = build_dense(entities, emb)
    assert idx.vectors.shape == (2, 64) and idx.provider_fingerprint == HASH.fingerprint
    path = tmp_path / "d.npz"
    save_dense(idx, path)
    loaded = load_dense(path)
    assert np.array_equal(loaded.vectors, idx.vectors) and loaded.entities == idx.entities
    q = emb.embed("alpha")
    assert dense_scores(loaded, q) == dense_scores(idx, q)


def test_dense_version_check(tmp_path):
    idx = build_dense([CatalogEntity(Kind.AGENT, "a", "alpha")], Embedder(HASH))
    path = tmp_path / "d.npz"
    save_dense(idx, path)
    with np.load(path) as data:
        meta = json.loads(str(data["meta"]))
        vectors = data["vectors"]
    meta["version"] = 7
    np.savez(path, vectors=vectors, meta=np.array(json.dumps(meta)))
    with pytest.raises(IndexFormatError):
        load_dense(path)
