"""Community-specific word embeddings.

Co-occurrence counting with a symmetric window over the dummy-separated
token stream, PPMI reweighting with context-distribution smoothing, and
truncated SVD down to a fixed dimension.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from . import _kernels
from .community_vectors import truncated_svd
from .ingest import DUMMY_TOKEN, TokenStream

log = logging.getLogger(__name__)


@dataclass
class EmbedParams:
    window: int = 4
    smoothing_c: float = 0.75  # context-distribution smoothing exponent
    dims: int = 100
    min_count: int = 1
    top_words: int = 5000
    svd_weight_exponent: float = 1.0  # singular-value weighting: U * S**e
    rng_seed: int = 0

    def validate(self):
        errors = []
        if self.window < 1:
            errors.append("embed.window: must be >= 1")
        if not (0.0 < self.smoothing_c <= 1.0):
            errors.append("embed.smoothing_c: must be in (0, 1]")
        if self.dims < 1:
            errors.append("embed.dims: must be >= 1")
        if self.min_count < 1:
            errors.append("embed.min_count: must be >= 1")
        if self.top_words < 1:
            errors.append("embed.top_words: must be >= 1")
        if self.svd_weight_exponent < 0:
            errors.append("embed.svd_weight_exponent: must be >= 0")
        return errors


@dataclass
class SparseCountMatrix:
    """Symmetric word-word co-occurrence counts with a vocabulary index.

    The dummy separator is never part of the vocabulary. ``word_counts``
    holds plain token frequencies (used later for the top-words cut).
    """

    words: list
    counts: sparse.csr_matrix
    total: float
    word_counts: np.ndarray

    index: dict = field(init=False, repr=False)

    def __post_init__(self):
        self.index = {w: i for i, w in enumerate(self.words)}

    @property
    def vocab(self):
        return self.index


@dataclass
class EmbeddingMatrix:
    words: list
    vectors: np.ndarray  # len(words) x dims
    dims: int
    community: str = ""

    index: dict = field(init=False, repr=False)

    def __post_init__(self):
        self.index = {w: i for i, w in enumerate(self.words)}
        if not np.all(np.isfinite(self.vectors)):
            raise ValueError("embedding matrix contains non-finite entries")

    @property
    def vocab(self):
        return self.index


def count_cooccurrences(stream: TokenStream, window: int) -> SparseCountMatrix:
    """Count symmetric in-window co-occurrences, skipping dummy positions.

    Every ordered position pair (i, j) with 1 <= |i - j| <= window and
    neither token a dummy contributes one count, so the matrix is
    symmetric by construction and its total is twice the number of
    unordered in-window pairs.
    """
    if window < 1:
        raise ValueError("window must be >= 1")
    if window > stream.n_dummy:
        raise ValueError(
            f"stream was built with n_dummy={stream.n_dummy} < window={window}; "
            "comment isolation does not hold"
        )
    vocab = sorted(set(stream.tokens) - {DUMMY_TOKEN})
    index = {w: i for i, w in enumerate(vocab)}
    n = len(vocab)
    ids = np.fromiter(
        (index.get(t, -1) for t in stream.tokens), dtype=np.int32, count=len(stream.tokens)
    )
    word_counts = np.bincount(ids[ids >= 0], minlength=n).astype(np.int64)
    rows, cols = _kernels.cooccurrence_pairs(ids, window)
    counts = sparse.coo_matrix(
        (np.ones(len(rows), dtype=np.float64), (rows, cols)), shape=(n, n)
    ).tocsr()
    counts.sum_duplicates()
    return SparseCountMatrix(
        words=vocab, counts=counts, total=float(counts.sum()), word_counts=word_counts
    )


def filter_min_count(m: SparseCountMatrix, min_count: int) -> SparseCountMatrix:
    """Drop words occurring fewer than ``min_count`` times from the matrix."""
    if min_count <= 1:
        return m
    keep = np.flatnonzero(m.word_counts >= min_count)
    if len(keep) == len(m.words):
        return m
    sub = m.counts[keep][:, keep].tocsr()
    return SparseCountMatrix(
        words=[m.words[i] for i in keep],
        counts=sub,
        total=float(sub.sum()),
        word_counts=m.word_counts[keep],
    )


def ppmi(counts: SparseCountMatrix, smoothing_c: float = 0.75) -> sparse.csr_matrix:
    """Positive PMI with the context distribution raised to ``smoothing_c``.

    For a nonzero cell (w, c):
        PPMI = max(0, log[ p(w,c) / (p(w) * p_a(c)) ])
    where p_a(c) is the smoothed context marginal
    colsum(c)**a / sum_c' colsum(c')**a. Zero cells stay zero.
    """
    if counts.total <= 0:
        raise ValueError("empty corpus: co-occurrence total is zero")
    if not (0.0 < smoothing_c <= 1.0):
        raise ValueError("smoothing_c must be in (0, 1]")
    mat = counts.counts.tocoo()
    row_sum = np.asarray(counts.counts.sum(axis=1)).ravel()
    col_sum = np.asarray(counts.counts.sum(axis=0)).ravel()
    col_smooth = col_sum**smoothing_c
    col_prob = col_smooth / col_smooth.sum()
    total = counts.total

    # log[(v/total) / ((row/total) * col_prob)] = log(v) - log(row) - log(col_prob)
    with np.errstate(divide="ignore"):
        vals = np.log(mat.data) - np.log(row_sum[mat.row]) - np.log(col_prob[mat.col])
    np.maximum(vals, 0.0, out=vals)
    out = sparse.csr_matrix((vals, (mat.row, mat.col)), shape=mat.shape)
    out.eliminate_zeros()
    return out


def _top_word_indices(m: SparseCountMatrix, top_words: int, seed_words=()):
    order = sorted(range(len(m.words)), key=lambda i: (-m.word_counts[i], m.words[i]))
    keep = set(order[:top_words])
    missing = []
    for w in seed_words:
        i = m.index.get(w)
        if i is None:
            missing.append(w)
        else:
            keep.add(i)
    if missing:
        log.warning("seed words absent from vocabulary: %s", ", ".join(sorted(missing)))
    return sorted(keep), missing


def embed_svd(
    ppmi_matrix: sparse.csr_matrix,
    counts: SparseCountMatrix,
    params: EmbedParams,
    seed_words=(),
    community="",
) -> EmbeddingMatrix:
    """SVD word vectors (U * S**exponent) over the most frequent words.

    The decomposition runs on the full PPMI matrix; the returned rows are
    restricted to the ``top_words`` most frequent words plus every seed
    word present in the vocabulary.
    """
    n = ppmi_matrix.shape[0]
    dims = params.dims
    if dims > n:
        log.warning("vocabulary size %d < dims %d; reducing dims", n, dims)
        dims = n
    u, s, _ = truncated_svd(ppmi_matrix, dims, rng_seed=params.rng_seed)
    vectors = u * (s ** params.svd_weight_exponent)
    keep, _ = _top_word_indices(counts, params.top_words, seed_words)
    return EmbeddingMatrix(
        words=[counts.words[i] for i in keep],
        vectors=np.ascontiguousarray(vectors[keep]),
        dims=dims,
        community=community,
    )


def nearest_neighbors(emb: EmbeddingMatrix, n_neighbors=10):
    """Cosine nearest-neighbor lists, for lexicon sanity inspection."""
    norms = np.linalg.norm(emb.vectors, axis=1)
    safe = np.where(norms == 0.0, 1.0, norms)
    unit = emb.vectors / safe[:, None]
    out = {}
    for i, word in enumerate(emb.words):
        sims = unit @ unit[i]
        sims[i] = -np.inf
        top = np.argsort(-sims)[:n_neighbors]
        out[word] = [(emb.words[j], float(sims[j])) for j in top]
    return out
