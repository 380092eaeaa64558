"""Comparing community representations.

Pairwise cosine similarity matrices, rank correlation between views,
agglomerative clustering with adjusted-mutual-information agreement, and
two notions of cross-view misalignment (raw-similarity outliers and
rank-shift z-scores). Also vocabulary-level descriptive tools: variance
ranking, word profiles, top polar words.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.cluster import hierarchy
from scipy.special import gammaln
from scipy.stats import rankdata
from scipy.stats import t as t_dist

log = logging.getLogger(__name__)


@dataclass
class SimilarityMatrix:
    communities: list
    kind: str
    values: np.ndarray

    index: dict = field(init=False, repr=False)

    def __post_init__(self):
        n = len(self.communities)
        if self.values.shape != (n, n):
            raise ValueError("similarity matrix shape does not match community list")
        self.index = {c: i for i, c in enumerate(self.communities)}

    def pair(self, a, b):
        return float(self.values[self.index[a], self.index[b]])


@dataclass
class ClusterAssignment:
    communities: list
    labels: np.ndarray
    k: int


@dataclass
class MisalignmentMatrix:
    communities: list
    kinds: tuple
    z2: np.ndarray  # z-squared rank-shift scores
    z: np.ndarray  # signed doubly z-scored shifts (z2 == z * z)
    rank_shift: np.ndarray  # signed rank differences R_a - R_b


def cosine_similarity_matrix(vectors) -> SimilarityMatrix:
    """All-pairs cosine similarity with an exact unit diagonal."""
    from .community_vectors import vectors_to_rows

    communities, rows, kind = vectors_to_rows(vectors)
    norms = np.linalg.norm(rows, axis=1)
    zero = [communities[i] for i in np.flatnonzero(norms == 0.0)]
    if zero:
        raise ValueError(f"zero vectors for communities: {zero}")
    unit = rows / norms[:, None]
    sims = unit @ unit.T
    np.clip(sims, -1.0, 1.0, out=sims)
    np.fill_diagonal(sims, 1.0)
    return SimilarityMatrix(communities=communities, kind=kind, values=sims)


def upper_triangle_values(sim: SimilarityMatrix):
    """Off-diagonal pair similarities in a fixed (lexicographic pair) order."""
    n = len(sim.communities)
    iu = np.triu_indices(n, k=1)
    pairs = [(sim.communities[i], sim.communities[j]) for i, j in zip(*iu)]
    return pairs, sim.values[iu]


def _average_ranks(values):
    return rankdata(values, method="average")


def spearman(x, y):
    """Spearman rank correlation with a permutation-exact p for small n.

    Ties get average ranks. For n < 10 the p-value enumerates all n!
    permutations (two-sided, counting |rho_perm| >= |rho| with a small
    float cushion); for n >= 10 it uses the t approximation.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("inputs must be 1-d and the same length")
    n = len(x)
    if n < 3:
        raise ValueError("need at least 3 observations")
    if np.unique(x).size < 2 or np.unique(y).size < 2:
        raise ValueError("constant input: rank correlation undefined")

    rx = _average_ranks(x)
    ry = _average_ranks(y)
    rho = float(np.corrcoef(rx, ry)[0, 1])

    if n < 10:
        target = abs(rho) - 1e-12
        hits = 0
        total = 0
        for perm in itertools.permutations(range(n)):
            rp = rx[list(perm)]
            r = np.corrcoef(rp, ry)[0, 1]
            hits += abs(r) >= target
            total += 1
        p = hits / total
    else:
        if abs(rho) >= 1.0:
            p = 0.0
        else:
            t_stat = rho * math.sqrt((n - 2) / (1.0 - rho * rho))
            p = 2.0 * t_dist.sf(abs(t_stat), df=n - 2)
    return rho, float(p)


def similarity_rank_correlation(sim_a: SimilarityMatrix, sim_b: SimilarityMatrix):
    """Spearman correlation of the two views' pairwise similarity lists."""
    if sim_a.communities != sim_b.communities:
        raise ValueError("similarity matrices cover different communities")
    pairs, va = upper_triangle_values(sim_a)
    _, vb = upper_triangle_values(sim_b)
    rho, p = spearman(va, vb)
    return {"kinds": (sim_a.kind, sim_b.kind), "rho": rho, "p": p, "n_pairs": len(pairs)}


LINKAGES = ("single", "complete", "average")


def cluster_similarity(sim: SimilarityMatrix, k, linkage="average") -> ClusterAssignment:
    """Agglomerative clustering on cosine distance (1 - similarity).

    Input order is fixed lexicographically before linkage so the
    dendrogram (and any tie-breaking inside it) is reproducible. Labels
    are relabeled to first-occurrence order: community list sorted, the
    first community's cluster is 0, the next unseen cluster is 1, ...
    """
    n = len(sim.communities)
    if not (1 <= k <= n):
        raise ValueError(f"k must be in [1, {n}]")
    if linkage not in LINKAGES:
        raise ValueError(f"linkage must be one of {LINKAGES}")
    order = np.argsort(np.asarray(sim.communities, dtype=object))
    communities = [sim.communities[i] for i in order]
    values = sim.values[np.ix_(order, order)]
    dist = 1.0 - values
    np.fill_diagonal(dist, 0.0)
    dist = np.maximum(dist, 0.0)
    # condensed form, averaging the (numerically equal) symmetric halves
    dist = (dist + dist.T) / 2.0
    iu = np.triu_indices(n, k=1)
    z = hierarchy.linkage(dist[iu], method=linkage)
    raw = hierarchy.cut_tree(z, n_clusters=k).ravel()
    relabel = {}
    labels = np.empty(n, dtype=np.int64)
    for i, r in enumerate(raw):
        if r not in relabel:
            relabel[r] = len(relabel)
        labels[i] = relabel[r]
    return ClusterAssignment(communities=communities, labels=labels, k=k)


def agglomerative_cluster(vectors, k=20, linkage="average") -> ClusterAssignment:
    """Cluster communities bottom-up from their (unit-normalized) vectors."""
    return cluster_similarity(cosine_similarity_matrix(vectors), k, linkage)


def _entropy(labels):
    _, counts = np.unique(labels, return_counts=True)
    p = counts / counts.sum()
    return float(-(p * np.log(p)).sum())


def _mutual_information(a, b):
    n = len(a)
    ua, ia = np.unique(a, return_inverse=True)
    ub, ib = np.unique(b, return_inverse=True)
    cont = np.zeros((len(ua), len(ub)))
    np.add.at(cont, (ia, ib), 1.0)
    nz = cont > 0
    pij = cont / n
    pa = pij.sum(axis=1, keepdims=True)
    pb = pij.sum(axis=0, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = pij * (np.log(pij) - np.log(pa) - np.log(pb))
    return float(terms[nz].sum())


def _expected_mutual_information(a, b):
    # Expectation of MI under the permutation (hypergeometric) model,
    # summed with log-gamma factorials for numerical range.
    n = len(a)
    _, ca = np.unique(a, return_counts=True)
    _, cb = np.unique(b, return_counts=True)
    lg = gammaln
    emi = 0.0
    for ai in ca:
        for bj in cb:
            nij_lo = max(1, ai + bj - n)
            nij_hi = min(ai, bj)
            for nij in range(nij_lo, nij_hi + 1):
                term = (nij / n) * math.log(n * nij / (ai * bj))
                log_weight = (
                    lg(ai + 1) + lg(bj + 1) + lg(n - ai + 1) + lg(n - bj + 1)
                    - lg(n + 1) - lg(nij + 1) - lg(ai - nij + 1) - lg(bj - nij + 1)
                    - lg(n - ai - bj + nij + 1)
                )
                emi += term * math.exp(log_weight)
    return emi


def adjusted_mutual_information(assign_a: ClusterAssignment, assign_b: ClusterAssignment):
    """AMI with the arithmetic-mean normalizer.

    (MI - E[MI]) / (mean(H_a, H_b) - E[MI]). When the denominator is
    degenerate (both partitions trivial), returns 1.0 if the partitions
    are identical up to relabeling and 0.0 otherwise.
    """
    if assign_a.communities != assign_b.communities:
        raise ValueError("cluster assignments cover different communities")
    a = np.asarray(assign_a.labels)
    b = np.asarray(assign_b.labels)
    mi = _mutual_information(a, b)
    emi = _expected_mutual_information(a, b)
    mean_h = (_entropy(a) + _entropy(b)) / 2.0
    denom = mean_h - emi
    if abs(denom) < 1e-15:
        # both partitions are single-cluster or all-singletons; identical
        # up to relabeling iff the joint partition refines neither side
        n_joint = len({(x, y) for x, y in zip(a.tolist(), b.tolist())})
        same = n_joint == len(np.unique(a)) == len(np.unique(b))
        return 1.0 if same else 0.0
    return float((mi - emi) / denom)


def misalignment_outliers(sim_a: SimilarityMatrix, sim_b: SimilarityMatrix,
                          low=0.2, high=0.8):
    """Pairs scored low (< low) by one view and high (> high) by the other.

    Both directions are reported, sorted by descending |sim_a - sim_b|.
    """
    if sim_a.communities != sim_b.communities:
        raise ValueError("similarity matrices cover different communities")
    pairs, va = upper_triangle_values(sim_a)
    _, vb = upper_triangle_values(sim_b)
    out = []
    for (ca, cb), x, y in zip(pairs, va, vb):
        if (x < low and y > high) or (y < low and x > high):
            out.append(
                {
                    "pair": (ca, cb),
                    sim_a.kind: float(x),
                    sim_b.kind: float(y),
                    "gap": float(abs(x - y)),
                }
            )
    out.sort(key=lambda d: (-d["gap"], d["pair"]))
    return out


def z2_misalignment(sim_a: SimilarityMatrix, sim_b: SimilarityMatrix) -> MisalignmentMatrix:
    """Rank-shift misalignment between two similarity views.

    Within each view, every community's similarities to the others are
    ranked ascending (average ties; the self cell is excluded and kept at
    0). The signed shift D = R_a - R_b is then z-scored down the columns
    and the result z-scored again along the rows; the final score is
    z**2. A zero-variance column or row contributes zeros rather than
    NaNs, with a diagnostic.
    """
    if sim_a.communities != sim_b.communities:
        raise ValueError("similarity matrices cover different communities")
    communities = sim_a.communities
    n = len(communities)
    if n < 3:
        raise ValueError("need at least 3 communities to rank")

    def ranks(values):
        r = np.zeros((n, n))
        mask = ~np.eye(n, dtype=bool)
        for i in range(n):
            r[i, mask[i]] = _average_ranks(values[i, mask[i]])
        return r

    shift = ranks(sim_a.values) - ranks(sim_b.values)

    def zscore(m, axis):
        mu = m.mean(axis=axis, keepdims=True)
        sd = m.std(axis=axis, keepdims=True)
        flat = sd == 0.0
        if flat.any():
            log.warning(
                "z2_misalignment: %d degenerate %s with zero variance scored 0",
                int(flat.sum()), "columns" if axis == 0 else "rows",
            )
        sd = np.where(flat, 1.0, sd)
        return (m - mu) / sd

    z = zscore(zscore(shift, axis=0), axis=1)
    return MisalignmentMatrix(
        communities=list(communities), kinds=(sim_a.kind, sim_b.kind),
        z2=z * z, z=z, rank_shift=shift,
    )


def top_misaligned_pairs(mis: MisalignmentMatrix, top_n=10):
    n = len(mis.communities)
    scored = []
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            scored.append(
                {
                    "community": mis.communities[i],
                    "against": mis.communities[j],
                    "z2": float(mis.z2[i, j]),
                    "rank_shift": float(mis.rank_shift[i, j]),
                }
            )
    scored.sort(key=lambda d: (-d["z2"], d["community"], d["against"]))
    return scored[:top_n]


def word_variance_ranking(lexicons, min_communities=2, top_n=None):
    """Words ranked by population variance of mean polarity across communities.

    Only communities whose lexicon contains the word contribute (absence
    is not imputed as zero); words in fewer than ``min_communities`` are
    skipped. Each row also names the most positive and most negative
    community for the word.
    """
    if min_communities < 2:
        raise ValueError("min_communities must be >= 2")
    by_word = {}
    for community in sorted(lexicons):
        lex = lexicons[community]
        for i, w in enumerate(lex.words):
            by_word.setdefault(w, []).append((community, float(lex.mean[i])))
    rows = []
    for w, scored in by_word.items():
        if len(scored) < min_communities:
            continue
        arr = np.asarray([s for _, s in scored])
        rows.append(
            {
                "word": w,
                "variance": float(arr.var()),
                "most_positive": max(scored, key=lambda t: (t[1], t[0]))[0],
                "most_negative": min(scored, key=lambda t: (t[1], t[0]))[0],
                "n_communities": len(scored),
            }
        )
    rows.sort(key=lambda d: (-d["variance"], d["word"]))
    return rows if top_n is None else rows[:top_n]


def word_profile(lexicons, word):
    """One word's (community, mean, std) rows, most positive community first.

    Communities whose lexicon lacks the word are listed under "missing"
    rather than imputed.
    """
    rows, missing = [], []
    for community in sorted(lexicons):
        lex = lexicons[community]
        i = lex.index.get(word)
        if i is None:
            missing.append(community)
        else:
            rows.append(
                {
                    "community": community,
                    "mean": float(lex.mean[i]),
                    "std": float(lex.std[i]),
                }
            )
    if not rows:
        raise KeyError(f"word {word!r} not present in any community lexicon")
    rows.sort(key=lambda d: (-d["mean"], d["community"]))
    return {"word": word, "profile": rows, "missing": missing}


def top_polar_words(lexicon, seeds, top_n=10):
    """Most positive and most negative non-seed words in one lexicon."""
    if top_n < 0:
        raise ValueError("top_n must be >= 0")
    seed_words = set(seeds.positive) | set(seeds.negative)
    scored = sorted(
        ((float(lexicon.mean[i]), w) for i, w in enumerate(lexicon.words)
         if w not in seed_words),
        key=lambda t: (-t[0], t[1]),
    )
    take = min(top_n, len(scored))
    positive = [{"word": w, "mean": m} for m, w in scored[:take]]
    negative = [{"word": w, "mean": m} for m, w in
                sorted(scored[len(scored) - take:] if take else [],
                       key=lambda t: (t[0], t[1]))]
    return {"positive": positive, "negative": negative}
