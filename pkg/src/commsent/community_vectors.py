"""tf-idf community matrices (text and user) and reduced unit vectors.

Communities are the "documents". Features are unigrams (text kind) or
commenting users (user kind), weighted (1 + ln tf) * ln(N / df), filtered
by exclusive-lower / inclusive-upper df bounds, reduced with truncated
SVD and row-normalized to unit length.
"""

from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import svds

from .ingest import DUMMY_TOKEN, TokenStream

log = logging.getLogger(__name__)

VECTOR_KINDS = ("text", "user", "sentiment")


@dataclass
class TfIdfMatrix:
    communities: list
    features: list
    matrix: sparse.csr_matrix  # communities x features, weights >= 0
    df: np.ndarray  # per-feature document frequency

    @property
    def n_communities(self):
        return len(self.communities)


@dataclass
class CommunityVector:
    community: str
    kind: str
    values: np.ndarray

    def __post_init__(self):
        if self.kind not in VECTOR_KINDS:
            raise ValueError(f"unknown vector kind {self.kind!r}")
        self.values = np.asarray(self.values, dtype=np.float64)


def tfidf_weight(tf, df, n_docs):
    """(1 + ln tf) * ln(N / df), natural log both factors."""
    if df <= 0 or df > n_docs:
        raise ValueError(f"df must satisfy 1 <= df <= N (got df={df}, N={n_docs})")
    if tf < 1:
        raise ValueError(f"tf must be >= 1 (got {tf})")
    return (1.0 + math.log(tf)) * math.log(n_docs / df)


def default_df_bounds(kind, n_communities):
    """Bounds (lower, upper] on document frequency, scaled to corpus size.

    At full scale (N >= ~400) these are (5, N-20] for unigrams and
    (1, N-20] for users; the upper margin drops stop words / ubiquitous
    bots. For desk-scale corpora the margins are clamped so the filter
    stays satisfiable.
    """
    upper = n_communities - 20 if n_communities > 21 else n_communities
    if kind == "text":
        lower = 5 if n_communities > 6 else 0
    elif kind == "user":
        lower = 1
    else:
        raise ValueError(f"no df bounds for kind {kind!r}")
    return lower, upper


def _build_matrix(counts_by_community, df_bounds, stopwords=None):
    communities = sorted(counts_by_community)
    n = len(communities)
    if n < 2:
        raise ValueError("need at least 2 communities to build a tf-idf matrix")
    lower, upper = df_bounds
    stopset = set(stopwords or ())

    df_counter = Counter()
    for counts in counts_by_community.values():
        df_counter.update(counts.keys())

    features = sorted(
        t for t, df in df_counter.items() if lower < df <= upper and t not in stopset
    )
    if not features:
        raise ValueError(
            f"no features survive df bounds ({lower}, {upper}] over {n} communities"
        )
    index = {t: i for i, t in enumerate(features)}
    df = np.array([df_counter[t] for t in features], dtype=np.int64)

    rows, cols, vals = [], [], []
    log_n = math.log(n)
    for r, community in enumerate(communities):
        for t, tf in counts_by_community[community].items():
            c = index.get(t)
            if c is None or tf < 1:
                continue
            rows.append(r)
            cols.append(c)
            vals.append((1.0 + math.log(tf)) * (log_n - math.log(df[c])))
    matrix = sparse.csr_matrix(
        (vals, (rows, cols)), shape=(n, len(features)), dtype=np.float64
    )
    return TfIdfMatrix(communities=communities, features=features, matrix=matrix, df=df)


def token_counts(stream: TokenStream) -> Counter:
    counts = Counter(stream.tokens)
    counts.pop(DUMMY_TOKEN, None)
    return counts


def build_text_matrix(corpora, df_bounds=None, stopwords=None):
    """Unigram tf-idf matrix over a map community -> TokenStream."""
    counts = {
        c: (token_counts(s) if isinstance(s, TokenStream) else dict(s))
        for c, s in corpora.items()
    }
    if df_bounds is None:
        df_bounds = default_df_bounds("text", len(counts))
    return _build_matrix(counts, df_bounds, stopwords=stopwords)


def build_user_matrix(user_counts, df_bounds=None):
    """User tf-idf matrix over a map community -> {author: comment count}."""
    if df_bounds is None:
        df_bounds = default_df_bounds("user", len(user_counts))
    return _build_matrix({c: dict(v) for c, v in user_counts.items()}, df_bounds)


def _fix_svd_signs(u, vt):
    # Deterministic orientation: make the largest-magnitude entry of each
    # right singular vector positive.
    for k in range(vt.shape[0]):
        j = np.argmax(np.abs(vt[k]))
        if vt[k, j] < 0:
            vt[k] *= -1.0
            u[:, k] *= -1.0
    return u, vt


def truncated_svd(matrix, dims, rng_seed=0, dense_cutoff=500):
    """Top-``dims`` singular triplets, deterministically oriented.

    Small problems go through exact dense SVD; larger ones through ARPACK
    with a seeded start vector so repeated runs are bit-identical.
    """
    n_rows, n_cols = matrix.shape
    k_max = min(n_rows, n_cols)
    if dims > k_max:
        raise ValueError(f"dims={dims} exceeds min(matrix shape)={k_max}")
    if min(n_rows, n_cols) <= dense_cutoff or dims >= k_max:
        dense = matrix.toarray() if sparse.issparse(matrix) else np.asarray(matrix)
        u, s, vt = np.linalg.svd(dense, full_matrices=False)
        u, s, vt = u[:, :dims], s[:dims], vt[:dims]
    else:
        rng = np.random.default_rng(rng_seed)
        v0 = rng.standard_normal(min(n_rows, n_cols))
        u, s, vt = svds(matrix.astype(np.float64), k=dims, v0=v0)
        order = np.argsort(-s)
        u, s, vt = u[:, order], s[order], vt[order]
    u, vt = _fix_svd_signs(u, vt)
    return u, s, vt


def reduce_and_normalize(m: TfIdfMatrix, dims=100, rng_seed=0, kind="text"):
    """Truncated SVD of the community x feature matrix, rows scaled to unit norm."""
    if dims < 1:
        raise ValueError("dims must be >= 1")
    if dims > min(m.matrix.shape):
        raise ValueError(
            f"dims={dims} exceeds min(communities={m.matrix.shape[0]}, "
            f"features={m.matrix.shape[1]})"
        )
    row_norms = np.sqrt(np.asarray(m.matrix.multiply(m.matrix).sum(axis=1)).ravel())
    for i, norm in enumerate(row_norms):
        if norm == 0.0:
            raise ValueError(f"community {m.communities[i]!r} has an all-zero row")
    u, s, _ = truncated_svd(m.matrix, dims, rng_seed=rng_seed)
    reduced = u * s
    norms = np.linalg.norm(reduced, axis=1)
    if np.any(norms == 0.0):
        bad = m.communities[int(np.argmin(norms))]
        raise ValueError(f"community {bad!r} collapsed to a zero vector under SVD")
    reduced = reduced / norms[:, None]
    return [
        CommunityVector(community=c, kind=kind, values=reduced[i])
        for i, c in enumerate(m.communities)
    ]


def vectors_to_rows(vectors):
    """Stack CommunityVectors into (sorted communities, value matrix, kind)."""
    vectors = sorted(vectors, key=lambda v: v.community)
    if not vectors:
        raise ValueError("no vectors given")
    kinds = {v.kind for v in vectors}
    if len(kinds) > 1:
        raise ValueError(f"mixed vector kinds {sorted(kinds)}")
    mat = np.vstack([v.values for v in vectors])
    return [v.community for v in vectors], mat, vectors[0].kind
