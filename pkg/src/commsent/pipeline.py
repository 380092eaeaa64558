"""Staged pipeline: config resolution, on-disk caches, run manifest.

Stages communicate only through cache directories under the output root,
keyed by a hash of the resolved config, so the expensive embed/induce
stages can be reused across reruns. Report-facing floats are serialized
with 6 significant digits to keep golden files stable.
"""

from __future__ import annotations

import hashlib
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import yaml
from scipy import sparse

from . import __version__, analysis, community_vectors, embeddings, ingest, sentiment

log = logging.getLogger(__name__)

STAGES = ("ingest", "vectors", "embed", "induce", "compare", "cluster", "misalign", "report")
STAGE_DEPS = {
    "ingest": (),
    "vectors": ("ingest",),
    "embed": ("ingest",),
    "induce": ("embed",),
    "compare": ("vectors", "induce"),
    "cluster": ("compare",),
    "misalign": ("compare",),
    "report": ("induce", "compare", "cluster", "misalign"),
}

KIND_PAIRS = (("text", "user"), ("text", "sentiment"), ("user", "sentiment"))

CONVENTIONS = {
    "log_base": "natural (both tf-idf factors and PMI)",
    "svd_sign": "largest-magnitude entry of each right singular vector positive",
    "normalization": "community vectors unit-normalized after reduction, not before",
    "z2_order": "rank rows ascending (diagonal excluded), z-score columns then rows",
    "bootstrap": "seeds resampled per run; graph and embeddings fixed",
    "dummy_tokens": "excluded from vocabularies, counts, and co-occurrence",
    "variance_table": "absent words skipped, not imputed as neutral",
}


class ConfigError(ValueError):
    """Config validation failure carrying one message per offending field."""

    def __init__(self, errors):
        super().__init__("; ".join(errors))
        self.errors = list(errors)


class PrerequisiteError(RuntimeError):
    """A required stage cache is missing or stale."""


class StageError(RuntimeError):
    """A stage failed against the current data."""


def sig6(x):
    """Round to 6 significant digits (report serialization contract)."""
    return float(f"{float(x):.6g}")


def _round_floats(obj):
    if isinstance(obj, float):
        return sig6(obj)
    if isinstance(obj, dict):
        return {k: _round_floats(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round_floats(v) for v in obj]
    if isinstance(obj, (np.floating,)):
        return sig6(float(obj))
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return _round_floats(obj.tolist())
    return obj


def _write_json(path, obj, rounded=True):
    if rounded:
        obj = _round_floats(obj)
    Path(path).write_text(
        json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def _read_json(path):
    return json.loads(Path(path).read_text(encoding="utf-8"))


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _utcnow():
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


# ---------------------------------------------------------------------------
# configuration


@dataclass
class PipelineConfig:
    input_path: str
    out_dir: str
    fields: ingest.FieldMap = field(default_factory=ingest.FieldMap)
    date_start: int | None = None
    date_end: int | None = None
    selection: ingest.CommunitySelection = field(
        default_factory=ingest.CommunitySelection
    )
    stopwords: tuple = ()
    text_df_bounds: tuple | None = None
    user_df_bounds: tuple | None = None
    text_dims: int = 100
    user_dims: int = 100
    embed: embeddings.EmbedParams = field(default_factory=embeddings.EmbedParams)
    prop: sentiment.PropParams = field(default_factory=sentiment.PropParams)
    seeds: sentiment.SeedSet = field(default_factory=sentiment.SeedSet)
    seed_file: str | None = None
    clusters: int = 20
    linkage: str = "average"
    outlier_low: float = 0.2
    outlier_high: float = 0.8
    top_table: int = 10
    rng_seed: int = 0
    export_neighbors: bool = False
    workers: int = 1

    def semantic_dict(self):
        """Everything that affects computed results (not out_dir/workers)."""
        return {
            "input": {
                "path": str(Path(self.input_path).resolve()),
                "fields": asdict(self.fields),
                "date_start": self.date_start,
                "date_end": self.date_end,
            },
            "selection": {
                "include": sorted(self.selection.include),
                "exclude": sorted(self.selection.exclude),
                "top_n": self.selection.top_n,
                "min_subscribers": self.selection.min_subscribers,
            },
            "text": {
                "df_bounds": list(self.text_df_bounds) if self.text_df_bounds else None,
                "dims": self.text_dims,
                "stopwords": sorted(self.stopwords),
            },
            "users": {
                "df_bounds": list(self.user_df_bounds) if self.user_df_bounds else None,
                "dims": self.user_dims,
            },
            "embed": asdict(self.embed),
            "propagation": asdict(self.prop),
            "seeds": {"positive": list(self.seeds.positive),
                      "negative": list(self.seeds.negative)},
            "analysis": {
                "clusters": self.clusters,
                "linkage": self.linkage,
                "outlier_low": self.outlier_low,
                "outlier_high": self.outlier_high,
                "top_table": self.top_table,
            },
            "rng_seed": self.rng_seed,
            "export_neighbors": self.export_neighbors,
        }

    def config_hash(self):
        blob = json.dumps(self.semantic_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


_KNOWN_KEYS = {
    "input": {"path", "body_field", "author_field", "community_field", "created_field",
              "date_start", "date_end"},
    "selection": {"include", "exclude", "top_n", "min_subscribers"},
    "text": {"df_bounds", "dims", "stopwords"},
    "users": {"df_bounds", "dims"},
    "embed": {"window", "smoothing_c", "dims", "min_count", "top_words",
              "svd_weight_exponent"},
    "propagation": {"beta", "knn", "runs", "seed_sample", "tol", "max_iter"},
    "analysis": {"clusters", "linkage", "outlier_low", "outlier_high", "top_table"},
}
_KNOWN_TOP = set(_KNOWN_KEYS) | {"seeds", "rng_seed"}


def _apply_overrides(tree, overrides):
    for dotted, value in (overrides or {}).items():
        if value is None:
            continue
        node = tree
        parts = dotted.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
        node[parts[-1]] = value
    return tree


def _get(tree, section, key, default=None):
    sec = tree.get(section) or {}
    return sec.get(key, default)


def _check_df_bounds(raw, key, errors):
    if raw is None:
        return None
    ok = (
        isinstance(raw, (list, tuple))
        and len(raw) == 2
        and all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in raw)
    )
    if not ok:
        errors.append(f"{key}: expected [lower, upper]")
        return None
    lo, hi = int(raw[0]), int(raw[1])
    if not (0 <= lo < hi):
        errors.append(f"{key}: must satisfy 0 <= lower < upper (got {raw})")
        return None
    return (lo, hi)


def validate_config(path=None, overrides=None, out_dir="out", workers=1,
                    export_neighbors=False):
    """Resolve a config file plus overrides into a validated PipelineConfig.

    Defaults follow the reference settings (window=4, smoothing 0.75,
    dims=100, beta=0.9, K=25, 50 runs, top 5000 words, 20 clusters).
    Raises ConfigError carrying one message per violated field.
    """
    errors = []
    tree = {}
    base_dir = Path.cwd()
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError([f"config: file not found: {path}"])
        base_dir = p.parent
        loaded = yaml.safe_load(p.read_text(encoding="utf-8"))
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            raise ConfigError([f"config: expected a key-value tree at top level: {path}"])
        tree = loaded

    tree = _apply_overrides(tree, overrides)

    for key in tree:
        if key not in _KNOWN_TOP:
            errors.append(f"config: unknown key {key!r}")
    for section, known in _KNOWN_KEYS.items():
        sec = tree.get(section)
        if sec is None:
            continue
        if not isinstance(sec, dict):
            errors.append(f"{section}: expected a key-value table")
            tree[section] = {}
            continue
        for key in sec:
            if key not in known:
                errors.append(f"{section}: unknown key {key!r}")

    input_path = _get(tree, "input", "path")
    if input_path in (None, ""):
        errors.append("input.path: required")
        resolved_input = ""
    else:
        resolved_input = str((base_dir / str(input_path)).resolve())
        if not Path(resolved_input).is_file():
            errors.append(f"input.path: file not found: {resolved_input}")

    fields = ingest.FieldMap(
        body=str(_get(tree, "input", "body_field", "body")),
        author=str(_get(tree, "input", "author_field", "author")),
        community=str(_get(tree, "input", "community_field", "subreddit")),
        created=str(_get(tree, "input", "created_field", "created_utc")),
    )

    date_start = _get(tree, "input", "date_start")
    date_end = _get(tree, "input", "date_end")
    if date_start is not None and date_end is not None and date_end < date_start:
        errors.append("input.date_end: must be >= input.date_start")

    top_n = _get(tree, "selection", "top_n", 400)
    try:
        selection = ingest.CommunitySelection(
            include=set(_get(tree, "selection", "include", ()) or ()),
            exclude=set(_get(tree, "selection", "exclude", ()) or ()),
            top_n=int(top_n),
            min_subscribers=_get(tree, "selection", "min_subscribers"),
        )
    except (ValueError, TypeError) as exc:
        errors.append(f"selection.top_n: {exc}")
        selection = ingest.CommunitySelection()

    text_bounds = _check_df_bounds(_get(tree, "text", "df_bounds"), "text.df_bounds", errors)
    user_bounds = _check_df_bounds(_get(tree, "users", "df_bounds"), "users.df_bounds", errors)

    text_dims = int(_get(tree, "text", "dims", 100))
    user_dims = int(_get(tree, "users", "dims", 100))
    if text_dims < 1:
        errors.append("text.dims: must be >= 1")
    if user_dims < 1:
        errors.append("users.dims: must be >= 1")
    stopwords = tuple(_get(tree, "text", "stopwords", ()) or ())

    rng_seed = tree.get("rng_seed", 0)
    if not isinstance(rng_seed, int) or isinstance(rng_seed, bool):
        errors.append("rng_seed: must be an integer")
        rng_seed = 0

    embed_params = embeddings.EmbedParams(
        window=int(_get(tree, "embed", "window", 4)),
        smoothing_c=float(_get(tree, "embed", "smoothing_c", 0.75)),
        dims=int(_get(tree, "embed", "dims", 100)),
        min_count=int(_get(tree, "embed", "min_count", 1)),
        top_words=int(_get(tree, "embed", "top_words", 5000)),
        svd_weight_exponent=float(_get(tree, "embed", "svd_weight_exponent", 1.0)),
        rng_seed=rng_seed,
    )
    errors.extend(embed_params.validate())

    prop_params = sentiment.PropParams(
        beta=float(_get(tree, "propagation", "beta", 0.9)),
        knn=int(_get(tree, "propagation", "knn", 25)),
        runs=int(_get(tree, "propagation", "runs", 50)),
        tol=float(_get(tree, "propagation", "tol", 1e-6)),
        max_iter=int(_get(tree, "propagation", "max_iter", 5000)),
        rng_seed=rng_seed,
        seed_sample=int(_get(tree, "propagation", "seed_sample", 7)),
    )
    errors.extend(prop_params.validate())

    seed_file = tree.get("seeds")
    seeds = sentiment.SeedSet()
    if seed_file is not None:
        seed_path = (base_dir / str(seed_file)).resolve()
        if not seed_path.is_file():
            errors.append(f"seeds: file not found: {seed_path}")
            seed_file = None
        else:
            try:
                seeds = sentiment.load_seed_file(seed_path)
                seed_file = str(seed_path)
            except ValueError as exc:
                errors.append(f"seeds: {exc}")
                seed_file = None

    n_seeds = len(seeds.positive) + len(seeds.negative)
    if embed_params.top_words < n_seeds:
        errors.append(
            f"embed.top_words: must be >= total seed count ({n_seeds})"
        )

    clusters = int(_get(tree, "analysis", "clusters", 20))
    if clusters < 1:
        errors.append("analysis.clusters: must be >= 1")
    linkage = str(_get(tree, "analysis", "linkage", "average"))
    if linkage not in analysis.LINKAGES:
        errors.append(f"analysis.linkage: must be one of {analysis.LINKAGES}")
    outlier_low = float(_get(tree, "analysis", "outlier_low", 0.2))
    outlier_high = float(_get(tree, "analysis", "outlier_high", 0.8))
    if not (0.0 <= outlier_low < outlier_high <= 1.0):
        errors.append(
            "analysis.outlier_low/outlier_high: must satisfy 0 <= low < high <= 1"
        )
    top_table = int(_get(tree, "analysis", "top_table", 10))
    if top_table < 0:
        errors.append("analysis.top_table: must be >= 0")

    if errors:
        raise ConfigError(sorted(errors))

    return PipelineConfig(
        input_path=resolved_input,
        out_dir=str(out_dir),
        fields=fields,
        date_start=date_start,
        date_end=date_end,
        selection=selection,
        stopwords=stopwords,
        text_df_bounds=text_bounds,
        user_df_bounds=user_bounds,
        text_dims=text_dims,
        user_dims=user_dims,
        embed=embed_params,
        prop=prop_params,
        seeds=seeds,
        seed_file=seed_file,
        clusters=clusters,
        linkage=linkage,
        outlier_low=outlier_low,
        outlier_high=outlier_high,
        top_table=top_table,
        rng_seed=rng_seed,
        export_neighbors=bool(export_neighbors),
        workers=int(workers),
    )


# ---------------------------------------------------------------------------
# cache + manifest machinery


def _stage_dir(cfg, stage):
    return Path(cfg.out_dir) / stage


def _marker_path(cfg, stage):
    return _stage_dir(cfg, stage) / ".complete"


def cache_state(cfg, stage):
    """'valid' | 'stale' (built under another config) | 'missing'."""
    marker = _marker_path(cfg, stage)
    if not marker.is_file():
        return "missing"
    try:
        info = _read_json(marker)
    except (OSError, json.JSONDecodeError):
        return "missing"
    if info.get("config_hash") != cfg.config_hash():
        return "stale"
    base = _stage_dir(cfg, stage)
    for rel in info.get("outputs", {}):
        if not (base / rel).is_file():
            return "missing"
    return "valid"


def _check_prereqs(cfg, stage):
    for dep in STAGE_DEPS[stage]:
        state = cache_state(cfg, dep)
        if state == "valid":
            continue
        detail = (
            "was built under a different config" if state == "stale" else "is missing"
        )
        raise PrerequisiteError(
            f"stage {stage!r} needs the {dep!r} cache, which {detail}; "
            f"run stage '{dep}' first"
        )


def _manifest_path(cfg):
    return Path(cfg.out_dir) / "manifest.json"


def _load_manifest(cfg):
    path = _manifest_path(cfg)
    if path.is_file():
        try:
            m = _read_json(path)
            if m.get("config_hash") == cfg.config_hash():
                return m
        except (OSError, json.JSONDecodeError):
            pass
    return {
        "tool_version": __version__,
        "config_hash": cfg.config_hash(),
        "config": cfg.semantic_dict(),
        "conventions": dict(CONVENTIONS),
        "stages": {},
    }


def _save_manifest(cfg, manifest):
    Path(cfg.out_dir).mkdir(parents=True, exist_ok=True)
    _write_json(_manifest_path(cfg), manifest, rounded=False)


def _finish_stage(cfg, stage, outputs, started):
    base = _stage_dir(cfg, stage)
    digests = {str(Path(p).relative_to(base)): _sha256(p) for p in sorted(outputs)}
    info = {
        "stage": stage,
        "config_hash": cfg.config_hash(),
        "finished_at": _utcnow(),
        "outputs": digests,
    }
    _write_json(_marker_path(cfg, stage), info, rounded=False)
    return {
        "status": "computed",
        "started_at": started,
        "finished_at": info["finished_at"],
        "outputs": digests,
    }


def run_stage(stage, cfg, force=False):
    """Run one stage against its caches; returns the manifest record."""
    if stage not in STAGES:
        raise ValueError(f"unknown stage {stage!r}; expected one of {STAGES}")
    manifest = _load_manifest(cfg)
    if not force and cache_state(cfg, stage) == "valid":
        record = {"status": "cache_hit", "checked_at": _utcnow()}
        prev = manifest["stages"].get(stage, {})
        if "outputs" in prev:
            record["outputs"] = prev["outputs"]
        manifest["stages"][stage] = record
        _save_manifest(cfg, manifest)
        log.info("stage %s: cache hit", stage)
        return record

    _check_prereqs(cfg, stage)
    stage_dir = _stage_dir(cfg, stage)
    stage_dir.mkdir(parents=True, exist_ok=True)
    started = _utcnow()
    t0 = time.perf_counter()
    outputs = _STAGE_FNS[stage](cfg, stage_dir)
    record = _finish_stage(cfg, stage, outputs, started)
    record["duration_s"] = round(time.perf_counter() - t0, 3)
    manifest["stages"][stage] = record
    _save_manifest(cfg, manifest)
    log.info("stage %s: computed in %.1fs", stage, record["duration_s"])
    return record


def run_all(cfg, force=False):
    """All stages in order; returns the manifest records by stage."""
    return {stage: run_stage(stage, cfg, force=force) for stage in STAGES}


# ---------------------------------------------------------------------------
# stage: ingest


def _stream_paths(cfg, community):
    base = _stage_dir(cfg, "ingest") / "streams"
    return base / f"{community}.tokens.txt", base / f"{community}.boundaries.json"


def _save_stream(stream, tokens_path, sidecar_path):
    tokens_path.parent.mkdir(parents=True, exist_ok=True)
    with open(tokens_path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(stream.tokens))
        if stream.tokens:
            fh.write("\n")
    _write_json(
        sidecar_path,
        {
            "community": stream.community,
            "n_dummy": stream.n_dummy,
            "n_tokens": len(stream.tokens),
            "comment_boundaries": stream.comment_boundaries,
        },
        rounded=False,
    )


def _load_stream(cfg, community):
    tokens_path, sidecar_path = _stream_paths(cfg, community)
    meta = _read_json(sidecar_path)
    with open(tokens_path, encoding="utf-8") as fh:
        tokens = fh.read().splitlines()
    return ingest.TokenStream(
        community=meta["community"],
        tokens=tokens,
        comment_boundaries=meta["comment_boundaries"],
        n_dummy=meta["n_dummy"],
    )


def _run_ingest(cfg, stage_dir):
    diag = ingest.ParseDiagnostics()
    n_dummy = max(5, cfg.embed.window)
    with open(cfg.input_path, encoding="utf-8") as fh:
        records = ingest.parse_comment_stream(fh, cfg.fields, diag)
        records = ingest.filter_by_date(records, cfg.date_start, cfg.date_end, diag)
        grouped = ingest.filter_communities(records, cfg.selection)

    outputs = []
    comment_counts, token_counts, user_counts = {}, {}, {}
    for community, recs in grouped.items():
        comments = [ingest.tokenize(r.body) for r in recs]
        stream = ingest.concat_with_dummies(
            comments, community, n_dummy=n_dummy, window=cfg.embed.window
        )
        tokens_path, sidecar_path = _stream_paths(cfg, community)
        _save_stream(stream, tokens_path, sidecar_path)
        outputs += [tokens_path, sidecar_path]
        comment_counts[community] = len(recs)
        token_counts[community] = len(stream.tokens) - n_dummy * max(
            0, len(stream.comment_boundaries) - 1
        )
        user_counts[community] = ingest.user_comment_counts(recs)

    communities_path = stage_dir / "communities.json"
    _write_json(
        communities_path,
        {
            "communities": sorted(grouped),
            "comment_counts": comment_counts,
            "token_counts": token_counts,
            "n_dummy": n_dummy,
        },
        rounded=False,
    )
    diag_path = stage_dir / "diagnostics.json"
    _write_json(diag_path, diag.as_dict(), rounded=False)
    users_path = stage_dir / "user_counts.json"
    _write_json(users_path, user_counts, rounded=False)
    return outputs + [communities_path, diag_path, users_path]


def _ingest_communities(cfg):
    return _read_json(_stage_dir(cfg, "ingest") / "communities.json")["communities"]


# ---------------------------------------------------------------------------
# stage: vectors


def _save_sparse(path, m: community_vectors.TfIdfMatrix):
    np.savez_compressed(
        path,
        data=m.matrix.data,
        indices=m.matrix.indices,
        indptr=m.matrix.indptr,
        shape=np.asarray(m.matrix.shape),
        communities=np.asarray(m.communities),
        features=np.asarray(m.features),
        df=m.df,
    )


def _write_vector_tsv(path, vectors):
    with open(path, "w", encoding="utf-8") as fh:
        for v in sorted(vectors, key=lambda v: v.community):
            vals = "\t".join(f"{x:.6g}" for x in v.values)
            fh.write(f"{v.community}\t{v.kind}\t{vals}\n")


def _run_vectors(cfg, stage_dir):
    communities = _ingest_communities(cfg)
    if len(communities) < 2:
        raise StageError(
            f"need at least 2 communities, ingest produced {len(communities)}"
        )
    corpora = {c: _load_stream(cfg, c) for c in communities}
    text_m = community_vectors.build_text_matrix(
        corpora, df_bounds=cfg.text_df_bounds, stopwords=cfg.stopwords
    )
    user_counts = _read_json(_stage_dir(cfg, "ingest") / "user_counts.json")
    user_m = community_vectors.build_user_matrix(
        user_counts, df_bounds=cfg.user_df_bounds
    )
    text_vecs = community_vectors.reduce_and_normalize(
        text_m, dims=cfg.text_dims, rng_seed=cfg.rng_seed, kind="text"
    )
    user_vecs = community_vectors.reduce_and_normalize(
        user_m, dims=cfg.user_dims, rng_seed=cfg.rng_seed, kind="user"
    )

    text_npz = stage_dir / "text_tfidf.npz"
    user_npz = stage_dir / "user_tfidf.npz"
    _save_sparse(text_npz, text_m)
    _save_sparse(user_npz, user_m)
    vec_npz = stage_dir / "vectors.npz"
    np.savez_compressed(
        vec_npz,
        communities=np.asarray(text_m.communities),
        text=np.vstack([v.values for v in text_vecs]),
        user=np.vstack([v.values for v in user_vecs]),
    )
    text_tsv = stage_dir / "text_vectors.tsv"
    user_tsv = stage_dir / "user_vectors.tsv"
    _write_vector_tsv(text_tsv, text_vecs)
    _write_vector_tsv(user_tsv, user_vecs)
    return [text_npz, user_npz, vec_npz, text_tsv, user_tsv]


def _load_reduced_vectors(cfg):
    data = np.load(_stage_dir(cfg, "vectors") / "vectors.npz", allow_pickle=False)
    communities = [str(c) for c in data["communities"]]
    out = {}
    for kind in ("text", "user"):
        out[kind] = [
            community_vectors.CommunityVector(community=c, kind=kind, values=row)
            for c, row in zip(communities, data[kind])
        ]
    return out


# ---------------------------------------------------------------------------
# stage: embed


def _embed_paths(cfg, community):
    base = _stage_dir(cfg, "embed")
    return base / f"{community}.npy", base / f"{community}.vocab.txt"


def _embed_worker(task):
    """One community's embedding; module-level so worker pools can pickle it."""
    (cfg, community) = task
    stream = _load_stream(cfg, community)
    counts = embeddings.count_cooccurrences(stream, cfg.embed.window)
    counts = embeddings.filter_min_count(counts, cfg.embed.min_count)
    pp = embeddings.ppmi(counts, cfg.embed.smoothing_c)
    seed_words = list(cfg.seeds.positive) + list(cfg.seeds.negative)
    emb = embeddings.embed_svd(pp, counts, cfg.embed, seed_words, community)
    npy_path, vocab_path = _embed_paths(cfg, community)
    np.save(npy_path, emb.vectors)
    vocab_path.write_text("\n".join(emb.words) + "\n", encoding="utf-8")
    written = [npy_path, vocab_path]
    if cfg.export_neighbors:
        nn_path = _stage_dir(cfg, "embed") / "neighbors" / f"{community}.tsv"
        nn_path.parent.mkdir(parents=True, exist_ok=True)
        with open(nn_path, "w", encoding="utf-8") as fh:
            for word, pairs in sorted(embeddings.nearest_neighbors(emb).items()):
                row = "\t".join(f"{w}:{s:.6g}" for w, s in pairs)
                fh.write(f"{word}\t{row}\n")
        written.append(nn_path)
    info = {
        "community": community,
        "vocab_size": len(emb.words),
        "dims": emb.dims,
        "cooccurrence_total": counts.total,
    }
    return written, info


def _run_parallel(cfg, tasks, worker):
    if cfg.workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=min(cfg.workers, len(tasks))) as pool:
            return list(pool.map(worker, tasks))
    return [worker(t) for t in tasks]


def _run_embed(cfg, stage_dir):
    communities = _ingest_communities(cfg)
    results = _run_parallel(cfg, [(cfg, c) for c in communities], _embed_worker)
    outputs, infos = [], []
    for written, info in results:
        outputs += written
        infos.append(info)
    meta_path = stage_dir / "meta.json"
    _write_json(meta_path, {
        "params": asdict(cfg.embed),
        "communities": infos,
    })
    return outputs + [meta_path]


def _load_embedding(cfg, community):
    npy_path, vocab_path = _embed_paths(cfg, community)
    words = vocab_path.read_text(encoding="utf-8").splitlines()
    vectors = np.load(npy_path, allow_pickle=False)
    return embeddings.EmbeddingMatrix(
        words=words, vectors=vectors, dims=vectors.shape[1], community=community
    )


# ---------------------------------------------------------------------------
# stage: induce


def _lexicon_paths(cfg, community):
    base = _stage_dir(cfg, "induce")
    return base / f"{community}.lexicon.tsv", base / f"{community}.lexicon.npz"


def _induce_worker(task):
    (cfg, community) = task
    emb = _load_embedding(cfg, community)
    lex = sentiment.bootstrap_lexicon(emb, cfg.seeds, cfg.prop, community=community)
    tsv_path, npz_path = _lexicon_paths(cfg, community)
    order = np.argsort(np.asarray(lex.words, dtype=object))
    with open(tsv_path, "w", encoding="utf-8") as fh:
        fh.write("word\tmean\tstd\n")
        for i in order:
            fh.write(f"{lex.words[i]}\t{lex.mean[i]:.6g}\t{lex.std[i]:.6g}\n")
    np.savez_compressed(
        npz_path, words=np.asarray(lex.words), mean=lex.mean, std=lex.std
    )
    missing = sorted(
        (set(cfg.seeds.positive) | set(cfg.seeds.negative)) - set(lex.words)
    )
    info = {
        "community": community,
        "vocab_size": len(lex.words),
        "missing_seeds": missing,
    }
    return [tsv_path, npz_path], info


def _load_lexicon(cfg, community):
    _, npz_path = _lexicon_paths(cfg, community)
    data = np.load(npz_path, allow_pickle=False)
    return sentiment.SentimentLexicon(
        community=community,
        words=[str(w) for w in data["words"]],
        mean=data["mean"],
        std=data["std"],
    )


def _run_induce(cfg, stage_dir):
    communities = _ingest_communities(cfg)
    results = _run_parallel(cfg, [(cfg, c) for c in communities], _induce_worker)
    outputs, infos = [], []
    for written, info in results:
        outputs += written
        infos.append(info)

    lexicons = {c: _load_lexicon(cfg, c) for c in communities}
    vectors = sentiment.assemble_sentiment_vectors(lexicons)
    union = sorted(set().union(*(lex.words for lex in lexicons.values())))
    sent_npz = stage_dir / "sentiment_vectors.npz"
    np.savez_compressed(
        sent_npz,
        communities=np.asarray([v.community for v in vectors]),
        words=np.asarray(union),
        values=np.vstack([v.values for v in vectors]),
    )
    meta_path = stage_dir / "induce_meta.json"
    _write_json(meta_path, {
        "params": asdict(cfg.prop),
        "seeds": {"positive": list(cfg.seeds.positive),
                  "negative": list(cfg.seeds.negative)},
        "communities": infos,
    })
    return outputs + [sent_npz, meta_path]


def _load_sentiment_vectors(cfg):
    data = np.load(_stage_dir(cfg, "induce") / "sentiment_vectors.npz",
                   allow_pickle=False)
    return [
        community_vectors.CommunityVector(
            community=str(c), kind="sentiment", values=row
        )
        for c, row in zip(data["communities"], data["values"])
    ]


# ---------------------------------------------------------------------------
# stage: compare


def _pair_key(a, b):
    return f"{a}_{b}"


def _run_compare(cfg, stage_dir):
    vectors = _load_reduced_vectors(cfg)
    vectors["sentiment"] = _load_sentiment_vectors(cfg)
    sims = {kind: analysis.cosine_similarity_matrix(v) for kind, v in vectors.items()}

    outputs = []
    sim_json = {}
    for kind, sim in sims.items():
        npz = stage_dir / f"similarity_{kind}.npz"
        np.savez_compressed(npz, communities=np.asarray(sim.communities),
                            values=sim.values)
        outputs.append(npz)
        sim_json[kind] = {
            "communities": sim.communities,
            "values": sim.values.tolist(),
        }
    sims_path = stage_dir / "similarities.json"
    _write_json(sims_path, sim_json)

    correlations = {}
    outliers = {}
    for a, b in KIND_PAIRS:
        correlations[_pair_key(a, b)] = analysis.similarity_rank_correlation(
            sims[a], sims[b]
        )
        outliers[_pair_key(a, b)] = analysis.misalignment_outliers(
            sims[a], sims[b], low=cfg.outlier_low, high=cfg.outlier_high
        )
    corr_path = stage_dir / "correlations.json"
    _write_json(corr_path, correlations)
    outlier_path = stage_dir / "outliers.json"
    _write_json(outlier_path, outliers)

    scatter_path = stage_dir / "scatter_text_user.tsv"
    pairs, v_text = analysis.upper_triangle_values(sims["text"])
    _, v_user = analysis.upper_triangle_values(sims["user"])
    flagged_pairs = {tuple(o["pair"]) for o in outliers["text_user"]}
    with open(scatter_path, "w", encoding="utf-8") as fh:
        fh.write("pair\tsim_text\tsim_user\tflagged\n")
        for (ca, cb), x, y in zip(pairs, v_text, v_user):
            flag = int((ca, cb) in flagged_pairs)
            fh.write(f"{ca}|{cb}\t{x:.6g}\t{y:.6g}\t{flag}\n")

    return outputs + [sims_path, corr_path, outlier_path, scatter_path]


def _load_similarity(cfg, kind):
    data = np.load(_stage_dir(cfg, "compare") / f"similarity_{kind}.npz",
                   allow_pickle=False)
    return analysis.SimilarityMatrix(
        communities=[str(c) for c in data["communities"]],
        kind=kind,
        values=data["values"],
    )


# ---------------------------------------------------------------------------
# stage: cluster


def _run_cluster(cfg, stage_dir):
    sims = {kind: _load_similarity(cfg, kind) for kind in ("text", "user", "sentiment")}
    n = len(next(iter(sims.values())).communities)
    if cfg.clusters > n:
        raise StageError(
            f"analysis.clusters={cfg.clusters} exceeds the {n} ingested communities"
        )
    assignments = {
        kind: analysis.cluster_similarity(sim, cfg.clusters, cfg.linkage)
        for kind, sim in sims.items()
    }
    labels = {
        kind: dict(zip(a.communities, (int(x) for x in a.labels)))
        for kind, a in assignments.items()
    }
    ami = {
        _pair_key(a, b): analysis.adjusted_mutual_information(
            assignments[a], assignments[b]
        )
        for a, b in KIND_PAIRS
    }
    clusters_path = stage_dir / "clusters.json"
    _write_json(clusters_path, {
        "k": cfg.clusters,
        "linkage": cfg.linkage,
        "labels": labels,
    })
    ami_path = stage_dir / "ami.json"
    _write_json(ami_path, ami)
    return [clusters_path, ami_path]


# ---------------------------------------------------------------------------
# stage: misalign


def _run_misalign(cfg, stage_dir):
    sims = {kind: _load_similarity(cfg, kind) for kind in ("text", "user", "sentiment")}
    result = {}
    outputs = []
    for a, b in KIND_PAIRS:
        mis = analysis.z2_misalignment(sims[a], sims[b])
        key = _pair_key(a, b)
        result[key] = {
            "communities": mis.communities,
            "z2": mis.z2.tolist(),
            "rank_shift": mis.rank_shift.tolist(),
            "top_pairs": analysis.top_misaligned_pairs(mis, cfg.top_table),
        }
        tsv = stage_dir / f"z2_{key}.tsv"
        with open(tsv, "w", encoding="utf-8") as fh:
            fh.write("community\t" + "\t".join(mis.communities) + "\n")
            for i, c in enumerate(mis.communities):
                row = "\t".join(f"{v:.6g}" for v in mis.z2[i])
                fh.write(f"{c}\t{row}\n")
        outputs.append(tsv)
    mis_path = stage_dir / "misalign.json"
    _write_json(mis_path, result)
    return outputs + [mis_path]


# ---------------------------------------------------------------------------
# stage: report


def _fmt_table(rows, headers):
    """Aligned plain-text table: left-justified text, right-justified numbers."""
    cells = [[str(h) for h in headers]]
    numeric = [True] * len(headers)
    for row in rows:
        rendered = []
        for j, value in enumerate(row):
            if isinstance(value, float):
                rendered.append(f"{value:.6g}")
            else:
                rendered.append(str(value))
                if not isinstance(value, (int, float)):
                    numeric[j] = False
        cells.append(rendered)
    widths = [max(len(r[j]) for r in cells) for j in range(len(headers))]
    lines = []
    for i, row in enumerate(cells):
        parts = [
            row[j].rjust(widths[j]) if numeric[j] and i > 0 else row[j].ljust(widths[j])
            for j in range(len(row))
        ]
        lines.append("  ".join(parts).rstrip())
        if i == 0:
            lines.append("  ".join("-" * w for w in widths))
    return lines


def _run_report(cfg, stage_dir):
    communities = _ingest_communities(cfg)
    diagnostics = _read_json(_stage_dir(cfg, "ingest") / "diagnostics.json")
    correlations = _read_json(_stage_dir(cfg, "compare") / "correlations.json")
    outliers = _read_json(_stage_dir(cfg, "compare") / "outliers.json")
    clusters = _read_json(_stage_dir(cfg, "cluster") / "clusters.json")
    ami = _read_json(_stage_dir(cfg, "cluster") / "ami.json")
    misalign = _read_json(_stage_dir(cfg, "misalign") / "misalign.json")
    lexicons = {c: _load_lexicon(cfg, c) for c in communities}

    variance = analysis.word_variance_ranking(lexicons, top_n=max(cfg.top_table, 25))
    polar = {
        c: analysis.top_polar_words(lexicons[c], cfg.seeds, cfg.top_table)
        for c in communities
    }

    report = {
        "communities": communities,
        "diagnostics": diagnostics,
        "correlations": correlations,
        "clustering": {"k": clusters["k"], "linkage": clusters["linkage"],
                       "labels": clusters["labels"], "ami": ami},
        "misalignment": {
            "z2_top_pairs": {k: v["top_pairs"] for k, v in misalign.items()},
            "outliers": outliers,
        },
        "word_variance": variance,
        "top_polar_words": polar,
        "conventions": dict(CONVENTIONS),
    }
    json_path = stage_dir / "report.json"
    _write_json(json_path, report)

    lines = []
    lines.append("COMMUNITY REPRESENTATION REPORT")
    lines.append("=" * 31)
    lines.append("")
    lines.append(f"communities ({len(communities)}): " + ", ".join(communities))
    lines.append(
        "ingest: {parsed} parsed, {malformed} malformed, {dropped_by_date} "
        "dropped by date".format(**diagnostics)
    )
    lines.append("")

    lines.append("similarity rank correlations")
    rows = [
        (key.replace("_", " vs "), corr["rho"], corr["p"], corr["n_pairs"])
        for key, corr in sorted(correlations.items())
    ]
    lines += _fmt_table(rows, ("views", "spearman", "p", "pairs"))
    lines.append("")

    lines.append(
        f"clustering (k={clusters['k']}, {clusters['linkage']} linkage)"
    )
    rows = [
        (c, *(clusters["labels"][kind][c] for kind in ("text", "user", "sentiment")))
        for c in communities
    ]
    lines += _fmt_table(rows, ("community", "text", "user", "sentiment"))
    rows = [(key.replace("_", " vs "), value) for key, value in sorted(ami.items())]
    lines += [""] + _fmt_table(rows, ("views", "ami"))
    lines.append("")

    lines.append("top z2-misaligned community pairs")
    for key in sorted(misalign):
        lines.append(f"  [{key.replace('_', ' vs ')}]")
        rows = [
            (p["community"], p["against"], p["z2"], p["rank_shift"])
            for p in misalign[key]["top_pairs"]
        ]
        lines += ["  " + row for row in
                  _fmt_table(rows, ("community", "against", "z2", "shift"))]
    lines.append("")

    lines.append(
        f"raw-similarity outliers (< {cfg.outlier_low:.6g} vs > {cfg.outlier_high:.6g})"
    )
    any_outlier = False
    for key, rows_ in sorted(outliers.items()):
        for o in rows_:
            any_outlier = True
            a, b = o["pair"]
            parts = ", ".join(
                f"{k}={o[k]:.6g}" for k in sorted(o) if k not in ("pair", "gap")
            )
            lines.append(f"  {a}|{b} [{key.replace('_', ' vs ')}]: {parts}")
    if not any_outlier:
        lines.append("  none")
    lines.append("")

    lines.append("greatest sentiment variance across communities")
    rows = [
        (r["word"], r["variance"], r["most_positive"], r["most_negative"],
         r["n_communities"])
        for r in variance[: max(cfg.top_table, 10)]
    ]
    lines += _fmt_table(
        rows, ("word", "variance", "most positive in", "most negative in", "n")
    )
    lines.append("")

    lines.append("top polar non-seed words per community")
    for c in communities:
        lines.append(f"  [{c}]")
        rows = [
            (p["word"], p["mean"], n["word"], n["mean"])
            for p, n in zip(polar[c]["positive"], polar[c]["negative"])
        ]
        lines += ["  " + row for row in
                  _fmt_table(rows, ("positive", "mean", "negative", "mean"))]
    lines.append("")

    txt_path = stage_dir / "report.txt"
    txt_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return [json_path, txt_path]


_STAGE_FNS = {
    "ingest": _run_ingest,
    "vectors": _run_vectors,
    "embed": _run_embed,
    "induce": _run_induce,
    "compare": _run_compare,
    "cluster": _run_cluster,
    "misalign": _run_misalign,
    "report": _run_report,
}
