"""Seed-propagated sentiment lexicons.

Builds a K-nearest-neighbor graph over a community's word embeddings and
runs damped random walks from positive and negative seed words. A word's
polarity comes from the relative probability of being hit by the two
walks; scores are standardized per run and aggregated over bootstrap
seed subsamples into a per-word mean and standard deviation.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from . import _kernels
from .community_vectors import CommunityVector
from .embeddings import EmbeddingMatrix

log = logging.getLogger(__name__)

DEFAULT_POSITIVE_SEEDS = [
    "love", "loved", "loves", "awesome", "nice",
    "amazing", "best", "fantastic", "correct", "happy",
]
DEFAULT_NEGATIVE_SEEDS = [
    "hate", "hated", "hates", "terrible", "nasty",
    "awful", "worst", "horrible", "wrong", "sad",
]


class ConvergenceError(RuntimeError):
    def __init__(self, message, residual):
        super().__init__(message)
        self.residual = residual


@dataclass
class SeedSet:
    positive: list = field(default_factory=lambda: list(DEFAULT_POSITIVE_SEEDS))
    negative: list = field(default_factory=lambda: list(DEFAULT_NEGATIVE_SEEDS))

    def __post_init__(self):
        if not self.positive or not self.negative:
            raise ValueError("seed lists must be non-empty")
        overlap = set(self.positive) & set(self.negative)
        if overlap:
            raise ValueError(f"seed lists overlap: {sorted(overlap)}")

    def swapped(self):
        return SeedSet(positive=list(self.negative), negative=list(self.positive))


def load_seed_file(path):
    """Read a seed file: one word per line, sectioned by [positive]/[negative]."""
    positive, negative = [], []
    current = None
    with open(path, encoding="utf-8") as fh:
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            lowered = line.lower()
            if lowered in ("[positive]", "positive:"):
                current = positive
            elif lowered in ("[negative]", "negative:"):
                current = negative
            elif current is None:
                raise ValueError(f"{path}: word {line!r} before any polarity section")
            else:
                current.append(line)
    return SeedSet(positive=positive, negative=negative)


@dataclass
class PropParams:
    beta: float = 0.9
    knn: int = 25
    runs: int = 50
    tol: float = 1e-6
    max_iter: int = 5000
    rng_seed: int = 0
    seed_sample: int = 7  # seeds drawn per polarity per bootstrap run

    def validate(self):
        errors = []
        if not (0.0 <= self.beta < 1.0):
            errors.append("propagation.beta: must satisfy 0 <= beta < 1")
        if self.knn < 1:
            errors.append("propagation.knn: must be >= 1")
        if self.runs < 1:
            errors.append("propagation.runs: must be >= 1")
        if self.tol <= 0:
            errors.append("propagation.tol: must be > 0")
        if self.max_iter < 1:
            errors.append("propagation.max_iter: must be >= 1")
        if self.seed_sample < 1:
            errors.append("propagation.seed_sample: must be >= 1")
        return errors


@dataclass
class PropagationGraph:
    """K-NN graph over embedding space with a cached normalized adjacency."""

    words: list
    adjacency: sparse.csr_matrix
    knn: int
    transition: sparse.csr_matrix  # D^(-1/2) A D^(-1/2)

    index: dict = field(init=False, repr=False)

    def __post_init__(self):
        self.index = {w: i for i, w in enumerate(self.words)}


@dataclass
class SentimentLexicon:
    """Per-word standardized polarity: bootstrap mean and standard deviation."""

    community: str
    words: list
    mean: np.ndarray
    std: np.ndarray

    index: dict = field(init=False, repr=False)

    def __post_init__(self):
        self.index = {w: i for i, w in enumerate(self.words)}

    @property
    def entries(self):
        return {
            w: (float(self.mean[i]), float(self.std[i])) for i, w in enumerate(self.words)
        }


def build_knn_graph(emb: EmbeddingMatrix, knn: int) -> PropagationGraph:
    """Connect each word to its K nearest cosine neighbors.

    Edge weight is arccos(-cos_sim), monotone increasing in similarity
    and positive. The adjacency is symmetrized by union: an edge stays if
    either endpoint selected it. Zero-vector words are dropped with a
    warning.
    """
    norms = np.linalg.norm(emb.vectors, axis=1)
    nonzero = np.flatnonzero(norms > 0.0)
    dropped = len(emb.words) - len(nonzero)
    if dropped:
        log.warning("excluding %d zero-vector words from the propagation graph", dropped)
    words = [emb.words[i] for i in nonzero]
    n = len(words)
    if knn >= n:
        raise ValueError(f"knn={knn} must be smaller than the vocabulary ({n})")
    unit = emb.vectors[nonzero] / norms[nonzero, None]

    block = 512
    rows = np.empty(n * knn, dtype=np.int64)
    cols = np.empty(n * knn, dtype=np.int64)
    vals = np.empty(n * knn, dtype=np.float64)
    pos = 0
    for start in range(0, n, block):
        stop = min(start + block, n)
        sims = unit[start:stop] @ unit.T
        for local in range(stop - start):
            sims[local, start + local] = -np.inf  # no self edge
        top = np.argpartition(-sims, kth=knn - 1, axis=1)[:, :knn]
        picked = np.take_along_axis(sims, top, axis=1)
        m = stop - start
        rows[pos : pos + m * knn] = np.repeat(np.arange(start, stop), knn)
        cols[pos : pos + m * knn] = top.ravel()
        vals[pos : pos + m * knn] = np.arccos(-np.clip(picked.ravel(), -1.0, 1.0))
        pos += m * knn

    adj = sparse.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    adj = adj.maximum(adj.T)  # union symmetrization

    degree = np.asarray(adj.sum(axis=1)).ravel()
    inv_sqrt = np.zeros(n)
    ok = degree > 0
    if not np.all(ok):
        log.warning("%d isolated nodes in the K-NN graph", int((~ok).sum()))
    inv_sqrt[ok] = 1.0 / np.sqrt(degree[ok])
    d = sparse.diags(inv_sqrt)
    transition = (d @ adj @ d).tocsr()
    return PropagationGraph(words=words, adjacency=adj, knn=knn, transition=transition)


def random_walk(graph: PropagationGraph, seeds, beta, tol=1e-6, max_iter=5000):
    """Hit probabilities: fixed point of p = beta*T*p + (1-beta)*s.

    ``s`` is uniform over the seed words and sums to one; T is the
    symmetrically normalized adjacency. Iteration stops when the L1
    change drops below ``tol``; exhausting ``max_iter`` first raises
    ConvergenceError carrying the final residual.
    """
    missing = [w for w in seeds if w not in graph.index]
    if missing:
        raise ValueError(f"seeds not in graph: {sorted(missing)}")
    if not seeds:
        raise ValueError("need at least one seed")
    s = np.zeros(len(graph.words))
    for w in seeds:
        s[graph.index[w]] = 1.0 / len(seeds)
    p, _, residual = _kernels.walk_to_fixed_point(
        graph.transition, s, beta, tol, max_iter
    )
    if residual >= tol:
        raise ConvergenceError(
            f"random walk did not converge in {max_iter} iterations "
            f"(residual {residual:.3e} >= tol {tol:.3e})",
            residual,
        )
    return p


def polarity_scores(p_pos, p_neg):
    """score(w) = p_pos / (p_pos + p_neg); words hit by neither walk get 0.5."""
    p_pos = np.asarray(p_pos, dtype=np.float64)
    p_neg = np.asarray(p_neg, dtype=np.float64)
    denom = p_pos + p_neg
    dead = denom == 0.0
    n_dead = int(dead.sum())
    if n_dead:
        log.warning("%d words unreachable from both walks; scored neutral 0.5", n_dead)
    out = np.full(len(p_pos), 0.5)
    np.divide(p_pos, denom, out=out, where=~dead)
    return out


def _signed_polarity(p_pos, p_neg):
    # (p_pos - p_neg) / (p_pos + p_neg) = 2*score - 1, but odd under seed
    # swap at the bit level, which the plain ratio is not. Unreachable
    # words get exactly 0.
    denom = p_pos + p_neg
    dead = denom == 0.0
    out = np.zeros(len(p_pos))
    np.divide(p_pos - p_neg, denom, out=out, where=~dead)
    return out


def standardize(scores):
    """Zero mean, unit variance over the vocabulary (population std)."""
    scores = np.asarray(scores, dtype=np.float64)
    if len(np.unique(scores)) < 2:
        raise ValueError("degenerate lexicon: all scores identical")
    std = scores.std()
    return (scores - scores.mean()) / std


def _list_fingerprint(words):
    digest = hashlib.blake2b("\x00".join(words).encode("utf-8"), digest_size=8)
    return int.from_bytes(digest.digest(), "big")


def _sample_seeds(words, size, rng_seed, run_idx):
    # The subsample stream is keyed by the word list itself (not by its
    # polarity slot) so that swapping the positive and negative lists
    # reproduces the exact same subsets, walk for walk.
    rng = np.random.default_rng([rng_seed, run_idx, _list_fingerprint(words)])
    if size >= len(words):
        return list(words)
    idx = rng.choice(len(words), size=size, replace=False)
    return [words[i] for i in idx]


def surviving_seeds(graph: PropagationGraph, seeds: SeedSet):
    pos = [w for w in seeds.positive if w in graph.index]
    neg = [w for w in seeds.negative if w in graph.index]
    missing = sorted(
        (set(seeds.positive) | set(seeds.negative)) - set(pos) - set(neg)
    )
    return pos, neg, missing


def bootstrap_lexicon(
    emb: EmbeddingMatrix,
    seeds: SeedSet,
    params: PropParams,
    community=None,
    run_log=None,
) -> SentimentLexicon:
    """Induce a lexicon: per-run subsampled walks, standardized, averaged.

    Each bootstrap run draws ``seed_sample`` seeds per polarity without
    replacement, runs both walks, standardizes the combined score over
    the graph vocabulary, and the per-word mean/std are taken over runs.
    Deterministic given ``params.rng_seed``. ``run_log`` (a list, if
    provided) collects per-run details for diagnostics.
    """
    community = emb.community if community is None else community
    graph = build_knn_graph(emb, params.knn)
    pos, neg, missing = surviving_seeds(graph, seeds)
    if missing:
        log.warning("%s: seeds missing from vocabulary: %s", community, ", ".join(missing))
    if len(pos) < 3 or len(neg) < 3:
        raise ValueError(
            f"{community}: need >= 3 surviving seeds per polarity "
            f"(have {len(pos)} positive, {len(neg)} negative; missing: {missing})"
        )

    n = len(graph.words)
    per_run = np.empty((params.runs, n))
    for r in range(params.runs):
        sampled_pos = _sample_seeds(pos, params.seed_sample, params.rng_seed, r)
        sampled_neg = _sample_seeds(neg, params.seed_sample, params.rng_seed, r)
        p_pos = random_walk(graph, sampled_pos, params.beta, params.tol, params.max_iter)
        p_neg = random_walk(graph, sampled_neg, params.beta, params.tol, params.max_iter)
        per_run[r] = standardize(_signed_polarity(p_pos, p_neg))
        if run_log is not None:
            run_log.append(
                {
                    "run": r,
                    "sampled_positive": sampled_pos,
                    "sampled_negative": sampled_neg,
                    "raw_scores": polarity_scores(p_pos, p_neg),
                    "standardized": per_run[r].copy(),
                }
            )

    return SentimentLexicon(
        community=community,
        words=list(graph.words),
        mean=per_run.mean(axis=0),
        std=per_run.std(axis=0),
    )


def assemble_sentiment_vectors(lexicons):
    """Community vectors over the union vocabulary; absent words are neutral zero."""
    if len(lexicons) < 2:
        raise ValueError("need lexicons for at least 2 communities")
    union = sorted(set().union(*(lex.words for lex in lexicons.values())))
    slot = {w: i for i, w in enumerate(union)}
    out = []
    for community in sorted(lexicons):
        lex = lexicons[community]
        values = np.zeros(len(union))
        for i, w in enumerate(lex.words):
            values[slot[w]] = lex.mean[i]
        out.append(CommunityVector(community=community, kind="sentiment", values=values))
    return out


def sensitivity_sweep(emb, seeds, params: PropParams, betas=(0.9,), ks=(15, 25, 35)):
    """Lexicon stability across beta/K settings.

    Every grid point is induced with the same rng_seed and compared to
    the reference setting (params.beta, params.knn) by Pearson
    correlation of the bootstrap means over the shared vocabulary.
    """
    from dataclasses import replace

    grid = [(b, k) for b in betas for k in ks]
    if not grid:
        raise ValueError("empty sensitivity grid")
    reference = bootstrap_lexicon(emb, seeds, params)
    ref_scores = {w: reference.mean[i] for i, w in enumerate(reference.words)}
    rows = []
    for beta, k in grid:
        lex = bootstrap_lexicon(emb, seeds, replace(params, beta=beta, knn=k))
        shared = [w for w in lex.words if w in ref_scores]
        a = np.array([ref_scores[w] for w in shared])
        b = np.array([lex.mean[lex.index[w]] for w in shared])
        corr = float(np.corrcoef(a, b)[0, 1])
        rows.append(
            {
                "beta": beta,
                "knn": k,
                "pearson_vs_reference": corr,
                "shared_words": len(shared),
            }
        )
    return {
        "reference": {"beta": params.beta, "knn": params.knn},
        "community": emb.community,
        "grid": rows,
    }
