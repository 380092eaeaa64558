import math

import numpy as np
import pytest
from scipy import sparse

from commsent import sentiment
from commsent.embeddings import EmbeddingMatrix


def _emb(words, vectors, community="toy"):
    vectors = np.asarray(vectors, dtype=float)
    return EmbeddingMatrix(
        words=list(words), vectors=vectors, dims=vectors.shape[1], community=community
    )


def _seeded_embedding(n_extra=60, dims=16, rng_seed=5):
    """Random embedding whose vocabulary includes all default seed words.

    Seed vectors are pushed toward opposite corners so both polarities
    form real neighborhoods instead of uniform noise.
    """
    rng = np.random.default_rng(rng_seed)
    seeds = sentiment.SeedSet()
    words = list(seeds.positive) + list(seeds.negative)
    words += [f"w{i}" for i in range(n_extra)]
    vectors = rng.standard_normal((len(words), dims))
    pole = np.zeros(dims)
    pole[0] = 3.0
    vectors[: len(seeds.positive)] += pole
    vectors[len(seeds.positive) : len(seeds.positive) + len(seeds.negative)] -= pole
    return _emb(words, vectors)


# --- seed sets --------------------------------------------------------------


def test_default_seed_lists():
    seeds = sentiment.SeedSet()
    assert len(seeds.positive) == 10
    assert len(seeds.negative) == 10
    assert "love" in seeds.positive
    assert "hate" in seeds.negative


def test_seed_set_rejects_overlap_and_empty():
    with pytest.raises(ValueError, match="overlap"):
        sentiment.SeedSet(positive=["good", "fine"], negative=["fine"])
    with pytest.raises(ValueError, match="non-empty"):
        sentiment.SeedSet(positive=[], negative=["bad"])


def test_swapped_exchanges_polarities():
    seeds = sentiment.SeedSet(positive=["up"], negative=["down"])
    flipped = seeds.swapped()
    assert flipped.positive == ["down"]
    assert flipped.negative == ["up"]


def test_load_seed_file(tmp_path):
    path = tmp_path / "seeds.txt"
    path.write_text(
        "# hand-picked\n[positive]\nup\nhigh\n\n[negative]\ndown\n# trailing note\n"
    )
    seeds = sentiment.load_seed_file(path)
    assert seeds.positive == ["up", "high"]
    assert seeds.negative == ["down"]


def test_load_seed_file_colon_sections(tmp_path):
    path = tmp_path / "seeds.txt"
    path.write_text("positive:\nup\nnegative:\ndown\n")
    seeds = sentiment.load_seed_file(path)
    assert seeds.positive == ["up"]


def test_load_seed_file_word_before_section(tmp_path):
    path = tmp_path / "seeds.txt"
    path.write_text("stray\n[positive]\nup\n")
    with pytest.raises(ValueError, match="before any polarity section"):
        sentiment.load_seed_file(path)


def test_prop_params_validation():
    assert sentiment.PropParams().validate() == []
    errors = "\n".join(sentiment.PropParams(beta=1.5, knn=0).validate())
    assert "beta" in errors
    assert "knn" in errors


# --- graph construction -----------------------------------------------------


def test_knn_graph_k1_example():
    emb = _emb(["a", "b", "c"], [[1.0, 0.0], [0.98, 0.2], [-1.0, 0.0]])
    graph = sentiment.build_knn_graph(emb, 1)
    adj = graph.adjacency.toarray()
    ia, ib, ic = (graph.index[w] for w in "abc")
    assert adj[ia, ib] > 0 and adj[ib, ia] > 0  # mutual nearest pair
    # c's nearest is b (less anti-aligned than a); union keeps the edge
    assert adj[ib, ic] > 0 and adj[ic, ib] > 0
    assert adj[ia, ic] == 0
    assert np.array_equal(adj, adj.T)


def test_knn_graph_weights_positive_and_monotone():
    emb = _emb(["a", "b", "c"], [[1.0, 0.0], [0.9, 0.1], [0.0, 1.0]])
    graph = sentiment.build_knn_graph(emb, 2)
    weights = graph.adjacency.data
    assert np.all(weights > 0)
    assert np.all(weights < math.pi)
    adj = graph.adjacency.toarray()
    # closer pair gets the larger arccos(-cos) weight
    assert adj[graph.index["a"], graph.index["b"]] > adj[graph.index["a"], graph.index["c"]]


def test_knn_graph_union_symmetrization():
    # b sits between a and far-off c; with K=1, c selects b but b selects a.
    emb = _emb(["a", "b", "c"], [[1.0, 0.0], [0.995, 0.0998], [0.6, 0.8]])
    graph = sentiment.build_knn_graph(emb, 1)
    adj = graph.adjacency.toarray()
    ib, ic = graph.index["b"], graph.index["c"]
    assert adj[ib, ic] > 0 and adj[ic, ib] > 0
    assert np.array_equal(adj, adj.T)


def test_knn_graph_rejects_knn_geq_vocab():
    emb = _emb(["a", "b"], [[1.0, 0.0], [0.0, 1.0]])
    with pytest.raises(ValueError, match="knn"):
        sentiment.build_knn_graph(emb, 2)


def test_knn_graph_drops_zero_vectors(caplog):
    emb = _emb(["a", "b", "z", "c"], [[1, 0], [0.9, 0.1], [0, 0], [0, 1]])
    graph = sentiment.build_knn_graph(emb, 2)
    assert "z" not in graph.words
    assert len(graph.words) == 3
    assert "zero-vector" in caplog.text


def test_transition_is_symmetric_normalization():
    emb = _emb(["a", "b", "c"], [[1.0, 0.0], [0.9, 0.44], [0.5, 0.87]])
    graph = sentiment.build_knn_graph(emb, 1)
    adj = graph.adjacency.toarray()
    deg = adj.sum(axis=1)
    d = np.diag(1.0 / np.sqrt(deg))
    assert graph.transition.toarray() == pytest.approx(d @ adj @ d, abs=1e-12)


# --- random walks -----------------------------------------------------------


def _two_node_graph():
    emb = _emb(["u", "v"], [[1.0, 0.0], [0.8, 0.6]])
    return sentiment.build_knn_graph(emb, 1)


def test_walk_two_node_closed_form():
    p = sentiment.random_walk(_two_node_graph(), ["u"], beta=0.5, tol=1e-13)
    assert abs(p[0] - 2.0 / 3.0) < 1e-9
    assert abs(p[1] - 1.0 / 3.0) < 1e-9


def test_walk_beta_zero_returns_seed_vector_exactly():
    graph = _two_node_graph()
    p = sentiment.random_walk(graph, ["u"], beta=0.0)
    assert p[graph.index["u"]] == 1.0
    assert p[graph.index["v"]] == 0.0


def test_walk_single_node_self_loop():
    # An isolated word's only context is itself: self-loop of weight
    # arccos(-1), normalized transition exactly 1.
    adj = sparse.csr_matrix(np.array([[math.pi]]))
    graph = sentiment.PropagationGraph(
        words=["w"], adjacency=adj, knn=1, transition=sparse.csr_matrix([[1.0]])
    )
    p = sentiment.random_walk(graph, ["w"], beta=0.9)
    assert p[0] == pytest.approx(1.0, abs=1e-12)


def test_walk_residual_contract():
    graph = _two_node_graph()
    beta, tol = 0.9, 1e-8
    p = sentiment.random_walk(graph, ["u"], beta=beta, tol=tol)
    s = np.array([1.0, 0.0])
    t = graph.transition
    residual = np.abs(p - (beta * (t @ p) + (1 - beta) * s)).sum()
    assert residual < tol


def test_walk_rejects_unknown_seed():
    with pytest.raises(ValueError, match="seeds not in graph"):
        sentiment.random_walk(_two_node_graph(), ["nope"], beta=0.5)


def test_walk_raises_on_non_convergence():
    with pytest.raises(sentiment.ConvergenceError) as info:
        sentiment.random_walk(_two_node_graph(), ["u"], beta=0.9, tol=1e-12, max_iter=2)
    assert info.value.residual > 0


# --- score shaping ----------------------------------------------------------


def test_polarity_examples():
    p_pos = np.array([0.3, 0.4, 0.02])
    p_neg = np.array([0.3, 0.0, 0.06])
    scores = sentiment.polarity_scores(p_pos, p_neg)
    assert scores[0] == 0.5
    assert scores[1] == 1.0
    assert scores[2] == pytest.approx(0.25, abs=1e-12)


def test_polarity_dead_nodes_are_neutral(caplog):
    scores = sentiment.polarity_scores(np.array([0.0, 0.5]), np.array([0.0, 0.5]))
    assert scores[0] == 0.5
    assert "unreachable" in caplog.text


def test_standardize_example():
    out = sentiment.standardize(np.array([1.0, 2.0, 3.0]))
    assert out == pytest.approx([-1.2247, 0.0, 1.2247], abs=1e-4)


def test_standardize_moments():
    rng = np.random.default_rng(8)
    out = sentiment.standardize(rng.standard_normal(500) * 3 + 7)
    assert abs(out.mean()) < 1e-9
    assert abs(out.var() - 1.0) < 1e-6


def test_standardize_rejects_constant():
    with pytest.raises(ValueError, match="identical"):
        sentiment.standardize(np.full(5, 2.0))


# --- bootstrap induction ----------------------------------------------------


def _fast_params(**kw):
    base = dict(knn=8, runs=6, seed_sample=7, rng_seed=0)
    base.update(kw)
    return sentiment.PropParams(**base)


def test_bootstrap_deterministic():
    emb = _seeded_embedding()
    seeds = sentiment.SeedSet()
    a = sentiment.bootstrap_lexicon(emb, seeds, _fast_params())
    b = sentiment.bootstrap_lexicon(emb, seeds, _fast_params())
    assert a.words == b.words
    assert np.array_equal(a.mean, b.mean)
    assert np.array_equal(a.std, b.std)


def test_bootstrap_single_run_has_zero_std():
    emb = _seeded_embedding()
    lex = sentiment.bootstrap_lexicon(emb, sentiment.SeedSet(), _fast_params(runs=1))
    assert np.all(lex.std == 0.0)


def test_bootstrap_label_swap_antisymmetry_bitwise():
    emb = _seeded_embedding()
    seeds = sentiment.SeedSet()
    lex = sentiment.bootstrap_lexicon(emb, seeds, _fast_params())
    swapped = sentiment.bootstrap_lexicon(emb, seeds.swapped(), _fast_params())
    assert lex.words == swapped.words
    assert np.array_equal(lex.mean, -swapped.mean)
    assert np.array_equal(lex.std, swapped.std)


def test_bootstrap_per_run_standardization(caplog):
    emb = _seeded_embedding()
    run_log = []
    sentiment.bootstrap_lexicon(emb, sentiment.SeedSet(), _fast_params(), run_log=run_log)
    assert len(run_log) == 6
    for entry in run_log:
        z = entry["standardized"]
        assert abs(z.mean()) < 1e-9
        assert abs(z.var() - 1.0) < 1e-6
        assert len(entry["sampled_positive"]) == 7
        assert len(entry["sampled_negative"]) == 7


def test_bootstrap_seed_scores_separate_per_run():
    emb = _seeded_embedding()
    run_log = []
    lex = sentiment.bootstrap_lexicon(
        emb, sentiment.SeedSet(), _fast_params(), run_log=run_log
    )
    for entry in run_log:
        raw = entry["raw_scores"]
        pos = np.mean([raw[lex.index[w]] for w in entry["sampled_positive"]])
        neg = np.mean([raw[lex.index[w]] for w in entry["sampled_negative"]])
        assert pos > neg


def test_bootstrap_requires_surviving_seeds():
    rng = np.random.default_rng(6)
    words = ["love", "hate", "awful"] + [f"w{i}" for i in range(30)]
    emb = _emb(words, rng.standard_normal((len(words), 8)))
    with pytest.raises(ValueError, match="surviving seeds"):
        sentiment.bootstrap_lexicon(emb, sentiment.SeedSet(), _fast_params())


def test_surviving_seeds_reports_missing():
    emb = _seeded_embedding()
    seeds = sentiment.SeedSet(positive=["love", "ghostword"], negative=["hate"])
    graph = sentiment.build_knn_graph(emb, 4)
    pos, neg, missing = sentiment.surviving_seeds(graph, seeds)
    assert pos == ["love"]
    assert neg == ["hate"]
    assert missing == ["ghostword"]


def test_sample_smaller_pool_takes_everything():
    emb = _seeded_embedding()
    seeds = sentiment.SeedSet(
        positive=["love", "loved", "loves", "nice"], negative=["hate", "hated", "hates", "sad"]
    )
    run_log = []
    sentiment.bootstrap_lexicon(
        emb, seeds, _fast_params(seed_sample=7, runs=2), run_log=run_log
    )
    for entry in run_log:
        assert sorted(entry["sampled_positive"]) == ["love", "loved", "loves", "nice"]


# --- vector assembly --------------------------------------------------------


def _lexicon(community, entries):
    words = sorted(entries)
    return sentiment.SentimentLexicon(
        community=community,
        words=words,
        mean=np.array([entries[w][0] for w in words], dtype=float),
        std=np.array([entries[w][1] for w in words], dtype=float),
    )


def test_assemble_uses_union_vocab_with_neutral_zero():
    lexicons = {
        "a": _lexicon("a", {"up": (1.0, 0.1), "both": (0.5, 0.1)}),
        "b": _lexicon("b", {"down": (-1.0, 0.2), "both": (0.4, 0.1)}),
    }
    vecs = sentiment.assemble_sentiment_vectors(lexicons)
    assert [v.community for v in vecs] == ["a", "b"]
    union = sorted({"up", "down", "both"})
    for v in vecs:
        assert v.kind == "sentiment"
        assert len(v.values) == len(union)
    a, b = vecs
    assert a.values[union.index("down")] == 0.0
    assert b.values[union.index("up")] == 0.0
    assert a.values[union.index("both")] == 0.5


def test_assemble_requires_two_lexicons():
    with pytest.raises(ValueError, match="at least 2"):
        sentiment.assemble_sentiment_vectors({"a": _lexicon("a", {"x": (0.0, 0.0)})})


# --- sensitivity sweep ------------------------------------------------------


def test_sensitivity_reference_correlates_perfectly():
    emb = _seeded_embedding()
    sweep = sentiment.sensitivity_sweep(
        emb, sentiment.SeedSet(), _fast_params(), ks=(6, 8)
    )
    ref = [row for row in sweep["grid"] if row["knn"] == 8]
    assert len(ref) == 1
    assert ref[0]["pearson_vs_reference"] == pytest.approx(1.0, abs=1e-12)
    other = [row for row in sweep["grid"] if row["knn"] == 6][0]
    assert -1.0 <= other["pearson_vs_reference"] <= 1.0
