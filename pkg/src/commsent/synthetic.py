"""Deterministic synthetic comment corpus for end-to-end checks.

Three communities with engineered structure:

* text: "alpine" and "breeze" share a topic vocabulary, "cinder" has its
  own, and a large global pool appears everywhere (df = N, so it carries
  no tf-idf weight but plenty of co-occurrence mass);
* users: author pools overlap heavily between alpine and breeze and only
  lightly with cinder, so text and user views cluster the same way;
* sentiment: "glee" occurs only inside comments made of positive seed
  words, "drear" only with negative seeds, and "flux" flips — positive
  company in alpine, negative in breeze, absent from cinder — which makes
  it the top cross-community variance word.

Everything is drawn from one seeded generator, so a given (scale, seed)
pair always produces byte-identical corpus and config files.
"""

from __future__ import annotations

import argparse
import json
from pathlib import Path

import numpy as np

from .ingest import DELETED_AUTHOR
from .sentiment import DEFAULT_NEGATIVE_SEEDS, DEFAULT_POSITIVE_SEEDS

COMMUNITIES = ("alpine", "breeze", "cinder")
PLANTED_POSITIVE = "glee"
PLANTED_NEGATIVE = "drear"
PLANTED_FLIP = "flux"
DEFAULT_SEED = 20160501

_MAY_2016 = 1462060800  # first created_utc; comments step forward from here

_SYLLABLES = [
    c + v
    for c in ("b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z")
    for v in ("a", "e", "i", "o", "u")
]


def _make_words(rng, count, taken):
    """Pseudo-words from syllables, unique and disjoint from ``taken``."""
    words = []
    while len(words) < count:
        n_syll = int(rng.integers(2, 4))
        w = "".join(_SYLLABLES[i] for i in rng.integers(0, len(_SYLLABLES), n_syll))
        if w not in taken:
            taken.add(w)
            words.append(w)
    return words


def _decorate(rng, tokens):
    """Light punctuation/casing noise that the tokenizer strips again."""
    body = " ".join(tokens)
    if rng.random() < 0.3:
        body = body[0].upper() + body[1:]
    r = rng.random()
    if r < 0.25:
        body += "."
    elif r < 0.4:
        body += "!"
    return body


class _CommunityPlan:
    def __init__(self, name, topic_pool, exclusive_pool, authors):
        self.name = name
        self.topic_pool = topic_pool
        self.exclusive_pool = exclusive_pool
        self.authors = authors


def _seed_comment(rng, planted, seeds):
    """A comment whose non-planted tokens are seed words only."""
    k = int(rng.integers(4, 8))
    tokens = [seeds[i] for i in rng.integers(0, len(seeds), k)]
    tokens.insert(int(rng.integers(0, len(tokens) + 1)), planted)
    return tokens


def _affect_comment(rng, seeds, pool, filler):
    n_seed = int(rng.integers(2, 5))
    n_pool = int(rng.integers(2, 5))
    n_fill = int(rng.integers(2, 6))
    tokens = (
        [seeds[i] for i in rng.integers(0, len(seeds), n_seed)]
        + [pool[i] for i in rng.integers(0, len(pool), n_pool)]
        + [filler[i] for i in rng.integers(0, len(filler), n_fill)]
    )
    rng.shuffle(tokens)
    return tokens


def _background_comment(rng, global_pool, topic_pool, exclusive_pool, seed_sprinkle,
                        affect_sprinkle):
    n = int(rng.integers(6, 19))
    tokens = []
    for _ in range(n):
        r = rng.random()
        if r < 0.45:
            pool = global_pool
        elif r < 0.8:
            pool = topic_pool
        else:
            pool = exclusive_pool
        tokens.append(pool[int(rng.integers(0, len(pool)))])
    if seed_sprinkle and rng.random() < 0.08:
        tokens.insert(
            int(rng.integers(0, len(tokens) + 1)),
            seed_sprinkle[int(rng.integers(0, len(seed_sprinkle)))],
        )
    # Affect-pool words are ordinary vocabulary that merely leans polar:
    # most of their occurrences are neutral chatter, so their embeddings
    # sit inside the main cloud and the propagation graph stays connected.
    # Only the planted tokens co-occur with seeds exclusively.
    if affect_sprinkle:
        for _ in range(int(rng.integers(1, 4))):
            tokens.insert(
                int(rng.integers(0, len(tokens) + 1)),
                affect_sprinkle[int(rng.integers(0, len(affect_sprinkle)))],
            )
    return tokens


def generate(out_dir, scale=1.0, seed=DEFAULT_SEED):
    """Write corpus.jsonl + config.yaml under ``out_dir``; return metadata.

    ``scale`` = 1.0 yields roughly a million tokens across the three
    communities; smaller values shrink every comment population
    proportionally (floors keep the corpus viable down to scale ~0.02).
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)

    pos_seeds = list(DEFAULT_POSITIVE_SEEDS)
    neg_seeds = list(DEFAULT_NEGATIVE_SEEDS)
    taken = set(pos_seeds) | set(neg_seeds)
    taken.update((PLANTED_POSITIVE, PLANTED_NEGATIVE, PLANTED_FLIP))

    global_pool = _make_words(rng, 350, taken)
    pool_ab = _make_words(rng, 250, taken)
    pool_c = _make_words(rng, 250, taken)
    excl = {c: _make_words(rng, 120, taken) for c in COMMUNITIES}
    pos_pool = _make_words(rng, 40, taken)
    neg_pool = _make_words(rng, 40, taken)

    def authors(prefix, count):
        return [f"{prefix}_{i:04d}" for i in range(count)]

    shared_ab = authors("ab", 120)
    shared_ac = authors("ac", 40)
    shared_bc = authors("bc", 40)
    shared_abc = authors("abc", 30)
    own = {c: authors(c[:2], 300) for c in COMMUNITIES}
    author_pools = {
        "alpine": own["alpine"] + shared_ab + shared_ac + shared_abc,
        "breeze": own["breeze"] + shared_ab + shared_bc + shared_abc,
        "cinder": own["cinder"] + shared_ac + shared_bc + shared_abc,
    }

    plans = {
        "alpine": _CommunityPlan("alpine", pool_ab, excl["alpine"], author_pools["alpine"]),
        "breeze": _CommunityPlan("breeze", pool_ab, excl["breeze"], author_pools["breeze"]),
        "cinder": _CommunityPlan("cinder", pool_c, excl["cinder"], author_pools["cinder"]),
    }

    def n_of(base):
        return max(8, int(round(base * scale)))

    n_background = n_of(24000)
    n_affect = n_of(1200)
    n_planted = n_of(250)

    comments = []  # (community, token list)
    for name in COMMUNITIES:
        plan = plans[name]
        sprinkle = pos_seeds + neg_seeds
        affect_words = pos_pool + neg_pool
        for _ in range(n_background):
            comments.append(
                (name, _background_comment(rng, global_pool, plan.topic_pool,
                                           plan.exclusive_pool, sprinkle,
                                           affect_words))
            )
        for _ in range(n_affect):
            comments.append((name, _affect_comment(rng, pos_seeds, pos_pool, global_pool)))
        for _ in range(n_affect):
            comments.append((name, _affect_comment(rng, neg_seeds, neg_pool, global_pool)))
        for _ in range(n_planted):
            comments.append((name, _seed_comment(rng, PLANTED_POSITIVE, pos_seeds)))
        for _ in range(n_planted):
            comments.append((name, _seed_comment(rng, PLANTED_NEGATIVE, neg_seeds)))
    for _ in range(n_planted):
        comments.append(("alpine", _seed_comment(rng, PLANTED_FLIP, pos_seeds)))
    for _ in range(n_planted):
        comments.append(("breeze", _seed_comment(rng, PLANTED_FLIP, neg_seeds)))

    order = rng.permutation(len(comments))
    lines = []
    n_tokens = 0
    for k, idx in enumerate(order):
        community, tokens = comments[idx]
        n_tokens += len(tokens)
        if rng.random() < 0.01:
            author = DELETED_AUTHOR
        else:
            pool = plans[community].authors
            author = pool[int(rng.integers(0, len(pool)))]
        record = {
            "body": _decorate(rng, tokens),
            "author": author,
            "subreddit": community,
            "created_utc": _MAY_2016 + k,
        }
        lines.append(json.dumps(record, sort_keys=True))

    # a few broken lines, exercising the malformed-line tally
    bad = [
        '{"body": "truncated record", "author": "x',
        '["not", "an", "object"]',
        '{"author": "nobody", "subreddit": "alpine", "created_utc": 1462060800}',
        '{"body": "", "author": "empty", "subreddit": "breeze"}',
        '{"body": 42, "author": "intbody", "subreddit": "cinder"}',
    ]
    for line in bad:
        lines.insert(int(rng.integers(0, len(lines) + 1)), line)

    corpus_path = out_dir / "corpus.jsonl"
    with open(corpus_path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")

    config_path = out_dir / "config.yaml"
    config = f"""\
# Synthetic 3-community corpus (scale={scale}, seed={seed}).
input:
  path: {corpus_path.name}
selection:
  top_n: 3
text:
  df_bounds: [0, 3]
  dims: 3
users:
  df_bounds: [1, 3]
  dims: 3
embed:
  window: 4
  smoothing_c: 0.75
  dims: 100
  min_count: 1
  top_words: 3000
propagation:
  beta: 0.9
  knn: 25
  runs: 50
  seed_sample: 7
  tol: 1.0e-6
  max_iter: 5000
analysis:
  clusters: 2
  linkage: average
  outlier_low: 0.2
  outlier_high: 0.8
rng_seed: 0
"""
    config_path.write_text(config, encoding="utf-8")

    return {
        "corpus": str(corpus_path),
        "config": str(config_path),
        "communities": list(COMMUNITIES),
        "n_comments": len(comments),
        "n_tokens": n_tokens,
        "n_malformed": len(bad),
        "planted": {
            "positive": PLANTED_POSITIVE,
            "negative": PLANTED_NEGATIVE,
            "flip": PLANTED_FLIP,
        },
        "scale": scale,
        "seed": seed,
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description="generate the synthetic test corpus")
    ap.add_argument("--out", required=True, help="output directory")
    ap.add_argument("--scale", type=float, default=1.0,
                    help="corpus size multiplier (1.0 = ~1M tokens)")
    ap.add_argument("--seed", type=int, default=DEFAULT_SEED)
    args = ap.parse_args(argv)
    meta = generate(args.out, scale=args.scale, seed=args.seed)
    print(json.dumps(meta, indent=2))


if __name__ == "__main__":
    main()
