import math

import numpy as np
import pytest
from scipy import sparse

import oracles
from commsent import embeddings, ingest


def _stream(comments, window=4):
    return ingest.concat_with_dummies(
        [list(c) for c in comments], community="t", n_dummy=max(5, window)
    )


def _random_stream(rng, n_tokens, vocab_n, window):
    tokens = [f"w{i}" for i in rng.integers(0, vocab_n, n_tokens)]
    comments = []
    i = 0
    while i < len(tokens):
        step = int(rng.integers(1, 12))
        comments.append(tokens[i : i + step])
        i += step
    return _stream(comments, window)


# --- co-occurrence counting -------------------------------------------------


def test_counts_three_token_example():
    m = embeddings.count_cooccurrences(_stream([["a", "b", "c"]]), window=4)
    idx = m.index
    dense = m.counts.toarray()
    for x, y in (("a", "b"), ("a", "c"), ("b", "c")):
        assert dense[idx[x], idx[y]] == 1
        assert dense[idx[y], idx[x]] == 1
    assert m.total == 6.0
    assert np.all(np.diag(dense) == 0)


def test_counts_dummy_gap_isolates():
    m = embeddings.count_cooccurrences(_stream([["a"], ["b"]]), window=4)
    assert m.total == 0.0
    assert m.words == ["a", "b"]
    assert ingest.DUMMY_TOKEN not in m.words


def test_counts_empty_stream():
    m = embeddings.count_cooccurrences(_stream([[]]), window=4)
    assert m.words == []
    assert m.total == 0.0


def test_counts_window_must_fit_dummy_gap():
    stream = ingest.concat_with_dummies([["a"], ["b"]], n_dummy=5)
    with pytest.raises(ValueError, match="n_dummy"):
        embeddings.count_cooccurrences(stream, window=6)


@pytest.mark.parametrize("window", [1, 2, 4])
def test_counts_match_positional_oracle(window):
    rng = np.random.default_rng(100 + window)
    for _ in range(5):
        stream = _random_stream(rng, int(rng.integers(30, 300)), 12, window)
        m = embeddings.count_cooccurrences(stream, window)
        want = oracles.window_cooccurrence(stream.tokens, window)
        got = {}
        coo = m.counts.tocoo()
        for r, c, v in zip(coo.row, coo.col, coo.data):
            got[(m.words[r], m.words[c])] = v
        assert got == want
        assert m.total == sum(want.values())


def test_counts_symmetric_and_doubled():
    rng = np.random.default_rng(42)
    stream = _random_stream(rng, 200, 9, 3)
    m = embeddings.count_cooccurrences(stream, 3)
    dense = m.counts.toarray()
    assert np.array_equal(dense, dense.T)
    assert m.total % 2 == 0


def test_word_counts_are_plain_frequencies():
    m = embeddings.count_cooccurrences(_stream([["a", "a", "b"]]), window=2)
    assert m.word_counts[m.index["a"]] == 2
    assert m.word_counts[m.index["b"]] == 1


# --- min-count filter -------------------------------------------------------


def test_filter_min_count_drops_rare_rows():
    m = embeddings.count_cooccurrences(
        _stream([["a", "b", "a", "b"], ["a", "c", "b", "a"]]), window=2
    )
    filtered = embeddings.filter_min_count(m, 2)
    assert "c" not in filtered.words
    assert set(filtered.words) == {"a", "b"}
    sub = filtered.counts.toarray()
    full = m.counts.toarray()
    keep = [m.index["a"], m.index["b"]]
    assert np.array_equal(sub, full[np.ix_(keep, keep)])


def test_filter_min_count_noop_below_two():
    m = embeddings.count_cooccurrences(_stream([["a", "b"]]), window=2)
    assert embeddings.filter_min_count(m, 1) is m


# --- PPMI -------------------------------------------------------------------


def test_ppmi_single_pair_is_ln2():
    m = embeddings.count_cooccurrences(_stream([["w", "c"]]), window=4)
    out = embeddings.ppmi(m, smoothing_c=0.75).toarray()
    i, j = m.index["w"], m.index["c"]
    assert out[i, j] == pytest.approx(math.log(2), abs=1e-12)
    assert out[j, i] == pytest.approx(math.log(2), abs=1e-12)


def test_ppmi_zero_cells_stay_zero():
    rng = np.random.default_rng(21)
    stream = _random_stream(rng, 150, 10, 2)
    m = embeddings.count_cooccurrences(stream, 2)
    out = embeddings.ppmi(m, 0.75)
    zero_mask = m.counts.toarray() == 0
    assert np.all(out.toarray()[zero_mask] == 0)


def test_ppmi_nonnegative():
    rng = np.random.default_rng(22)
    stream = _random_stream(rng, 400, 8, 4)
    out = embeddings.ppmi(embeddings.count_cooccurrences(stream, 4), 0.75)
    assert out.data.min() >= 0.0


@pytest.mark.parametrize("alpha", [0.75, 1.0])
def test_ppmi_matches_dense_oracle(alpha):
    rng = np.random.default_rng(int(alpha * 100))
    for _ in range(4):
        stream = _random_stream(rng, int(rng.integers(50, 400)), 11, 4)
        m = embeddings.count_cooccurrences(stream, 4)
        if m.total == 0:
            continue
        got = embeddings.ppmi(m, alpha).toarray()
        pairs = oracles.window_cooccurrence(stream.tokens, 4)
        want = oracles.dense_ppmi(pairs, alpha)
        for (w, c), val in want.items():
            assert got[m.index[w], m.index[c]] == pytest.approx(val, abs=1e-10)
        assert np.count_nonzero(got) == sum(1 for v in want.values() if v > 0)


def test_ppmi_rejects_empty_and_bad_smoothing():
    m = embeddings.count_cooccurrences(_stream([["a"], ["b"]]), window=4)
    with pytest.raises(ValueError, match="empty"):
        embeddings.ppmi(m, 0.75)
    m2 = embeddings.count_cooccurrences(_stream([["a", "b"]]), window=4)
    with pytest.raises(ValueError, match="smoothing_c"):
        embeddings.ppmi(m2, 0.0)


# --- SVD embeddings ---------------------------------------------------------


def _counts_from_dense(dense, words):
    dense = np.asarray(dense, dtype=float)
    return embeddings.SparseCountMatrix(
        words=list(words),
        counts=sparse.csr_matrix(dense),
        total=float(dense.sum()),
        word_counts=dense.sum(axis=1).astype(np.int64),
    )


def test_embed_shape_and_determinism():
    rng = np.random.default_rng(31)
    stream = _random_stream(rng, 500, 14, 4)
    m = embeddings.count_cooccurrences(stream, 4)
    pm = embeddings.ppmi(m, 0.75)
    params = embeddings.EmbedParams(dims=6)
    a = embeddings.embed_svd(pm, m, params)
    b = embeddings.embed_svd(pm, m, params)
    assert a.vectors.shape == (len(m.words), 6)
    assert a.words == m.words
    assert np.array_equal(a.vectors, b.vectors)


def test_embed_caps_dims_at_vocab(caplog):
    sym = np.array([[0.0, 1.0, 2.0], [1.0, 0.0, 1.0], [2.0, 1.0, 0.0]])
    m = _counts_from_dense(sym, ["a", "b", "c"])
    pm = embeddings.ppmi(m, 1.0)
    emb = embeddings.embed_svd(pm, m, embeddings.EmbedParams(dims=50))
    assert emb.dims == 3
    assert emb.vectors.shape == (3, 3)
    assert "reducing dims" in caplog.text


def test_embed_rank1_preserves_cosines():
    v = np.array([1.0, 2.0, 3.0, 4.0])
    dense = np.outer(v, v)
    m = _counts_from_dense(dense, list("abcd"))
    emb = embeddings.embed_svd(
        sparse.csr_matrix(dense), m, embeddings.EmbedParams(dims=1)
    )
    unit = emb.vectors / np.linalg.norm(emb.vectors, axis=1, keepdims=True)
    sims = unit @ unit.T
    rows = dense / np.linalg.norm(dense, axis=1, keepdims=True)
    assert sims == pytest.approx(rows @ rows.T, abs=1e-6)


def test_embed_rank2_preserves_cosines():
    rng = np.random.default_rng(33)
    basis = np.abs(rng.standard_normal((2, 6)))
    coef = np.abs(rng.standard_normal((6, 2))) + 0.2
    dense = coef @ basis  # nonnegative, exactly rank 2
    m = _counts_from_dense(dense, [f"w{i}" for i in range(6)])
    emb = embeddings.embed_svd(
        sparse.csr_matrix(dense), m, embeddings.EmbedParams(dims=2)
    )
    unit = emb.vectors / np.linalg.norm(emb.vectors, axis=1, keepdims=True)
    rows = dense / np.linalg.norm(dense, axis=1, keepdims=True)
    assert unit @ unit.T == pytest.approx(rows @ rows.T, abs=1e-6)


def test_embed_top_words_restriction_keeps_seeds(caplog):
    dense = np.array(
        [
            [0.0, 5.0, 1.0, 1.0],
            [5.0, 0.0, 1.0, 1.0],
            [1.0, 1.0, 0.0, 1.0],
            [1.0, 1.0, 1.0, 0.0],
        ]
    )
    m = _counts_from_dense(dense, ["busy", "noisy", "quiet", "rare"])
    pm = embeddings.ppmi(m, 1.0)
    params = embeddings.EmbedParams(dims=2, top_words=2)
    emb = embeddings.embed_svd(pm, m, params, seed_words=("rare", "ghost"))
    assert set(emb.words) == {"busy", "noisy", "rare"}
    assert "absent from vocabulary" in caplog.text


def test_nearest_neighbors_shape():
    rng = np.random.default_rng(34)
    emb = embeddings.EmbeddingMatrix(
        words=[f"w{i}" for i in range(8)],
        vectors=rng.standard_normal((8, 3)),
        dims=3,
    )
    nn = embeddings.nearest_neighbors(emb, n_neighbors=3)
    assert set(nn) == set(emb.words)
    for word, pairs in nn.items():
        assert len(pairs) == 3
        assert word not in [w for w, _ in pairs]


def test_embedding_matrix_rejects_nonfinite():
    with pytest.raises(ValueError, match="finite"):
        embeddings.EmbeddingMatrix(
            words=["a"], vectors=np.array([[np.nan]]), dims=1
        )


def test_embed_params_validation():
    bad = embeddings.EmbedParams(window=0, smoothing_c=2.0, dims=0)
    errors = bad.validate()
    text = "\n".join(errors)
    assert "window" in text
    assert "smoothing_c" in text
    assert "dims" in text
    assert embeddings.EmbedParams().validate() == []
