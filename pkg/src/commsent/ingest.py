"""Comment-dump ingestion: parsing, community selection, tokenization.

Input is line-delimited JSON, one comment per line. Output is one token
stream per surviving community, with comment boundaries kept so that
downstream windowed counting never crosses a comment.
"""

from __future__ import annotations

import json
import logging
import re
from collections import defaultdict
from dataclasses import dataclass, field

log = logging.getLogger(__name__)

DELETED_AUTHOR = "[deleted]"

# Reserved separator. Contains characters the tokenizer strips, so it can
# never collide with a real token.
DUMMY_TOKEN = "<dummy>"

# Everything that is not a word character or whitespace is stripped in
# place (no split): "don't" -> "dont", "&lt;3" -> "lt3". Underscore is
# punctuation for our purposes even though \w keeps it.
_STRIP_RE = re.compile(r"[^\w\s]|_")


@dataclass
class CommentRecord:
    """One authored comment. ``author`` may be the deleted-author sentinel."""

    community: str
    author: str
    body: str
    created_at: int | None = None


@dataclass
class FieldMap:
    """Names of the JSON fields holding each record attribute."""

    body: str = "body"
    author: str = "author"
    community: str = "subreddit"
    created: str = "created_utc"


@dataclass
class ParseDiagnostics:
    total_lines: int = 0
    parsed: int = 0
    malformed: int = 0
    dropped_by_date: int = 0
    bad_line_samples: list = field(default_factory=list)

    def note_malformed(self, lineno):
        self.malformed += 1
        if len(self.bad_line_samples) < 10:
            self.bad_line_samples.append(lineno)

    def as_dict(self):
        return {
            "total_lines": self.total_lines,
            "parsed": self.parsed,
            "malformed": self.malformed,
            "dropped_by_date": self.dropped_by_date,
            "bad_line_samples": list(self.bad_line_samples),
        }


@dataclass
class CommunitySelection:
    """Which communities survive ingestion.

    Empty ``include`` means "everything not excluded". ``top_n`` keeps the
    largest communities by comment count. ``min_subscribers`` only applies
    when a subscriber-count map is supplied alongside the dump.
    """

    include: set = field(default_factory=set)
    exclude: set = field(default_factory=set)
    top_n: int = 400
    min_subscribers: int | None = None
    subscriber_counts: dict | None = None

    def __post_init__(self):
        self.include = set(self.include)
        self.exclude = set(self.exclude)
        if self.top_n < 1:
            raise ValueError("top_n must be >= 1")

    def admits(self, community: str) -> bool:
        if community in self.exclude:
            return False
        if self.include and community not in self.include:
            return False
        if self.min_subscribers is not None and self.subscriber_counts is not None:
            if self.subscriber_counts.get(community, 0) < self.min_subscribers:
                return False
        return True


@dataclass
class TokenStream:
    """One community's comments, concatenated with dummy separation.

    ``comment_boundaries[k]`` is the index of the first token of the k-th
    non-empty comment. ``n_dummy`` records the separation actually used so
    consumers can verify their window fits inside it.
    """

    community: str
    tokens: list
    comment_boundaries: list
    n_dummy: int = 5

    def __len__(self):
        return len(self.tokens)


def _coerce_created(value):
    if value is None:
        return None
    try:
        return int(float(value))
    except (TypeError, ValueError):
        return None


def parse_comment_stream(lines, fields: FieldMap | None = None, diagnostics=None):
    """Yield a CommentRecord per well-formed input line, in input order.

    Malformed lines (bad JSON, missing/empty body, author, or community)
    are skipped and tallied in ``diagnostics``.
    """
    fields = fields or FieldMap()
    diag = diagnostics if diagnostics is not None else ParseDiagnostics()
    for lineno, line in enumerate(lines, start=1):
        diag.total_lines += 1
        line = line.strip()
        if not line:
            diag.note_malformed(lineno)
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError:
            diag.note_malformed(lineno)
            continue
        if not isinstance(obj, dict):
            diag.note_malformed(lineno)
            continue
        body = obj.get(fields.body)
        author = obj.get(fields.author)
        community = obj.get(fields.community)
        if not isinstance(body, str) or not body:
            diag.note_malformed(lineno)
            continue
        if not isinstance(community, str) or not community:
            diag.note_malformed(lineno)
            continue
        if not isinstance(author, str) or not author:
            diag.note_malformed(lineno)
            continue
        diag.parsed += 1
        yield CommentRecord(
            community=community,
            author=author,
            body=body,
            created_at=_coerce_created(obj.get(fields.created)),
        )


def filter_by_date(records, start=None, end=None, diagnostics=None):
    """Optional created_at window; pass-through when no bound is set.

    Records without a timestamp are dropped (and tallied) only when a
    bound is active.
    """
    if start is None and end is None:
        yield from records
        return
    for rec in records:
        t = rec.created_at
        if t is None or (start is not None and t < start) or (end is not None and t > end):
            if diagnostics is not None:
                diagnostics.dropped_by_date += 1
            continue
        yield rec


def filter_communities(records, selection: CommunitySelection):
    """Group records by community, apply the selection, keep the top_n largest.

    Ties in comment count break by community name so the result is
    deterministic. An empty result is a warning, not an error.
    """
    grouped = defaultdict(list)
    for rec in records:
        if selection.admits(rec.community):
            grouped[rec.community].append(rec)
    if not grouped:
        log.warning("community selection matched no records")
        return {}
    keep = sorted(grouped, key=lambda c: (-len(grouped[c]), c))[: selection.top_n]
    return {c: grouped[c] for c in sorted(keep)}


def tokenize(body: str):
    """Lowercase, strip punctuation in place, split on whitespace.

    HTML entities are not decoded: the ampersand and semicolon are
    stripped like any punctuation and the inner letters survive
    ("&lt;3" -> "lt3", ":D" -> "d").
    """
    return _STRIP_RE.sub("", body.lower()).split()


def concat_with_dummies(comments, community="", n_dummy=5, window=None):
    """Join per-comment token lists with ``n_dummy`` separator tokens.

    Empty comment token lists are dropped before joining. When ``window``
    is given, n_dummy must be at least that large or boundary isolation
    would fail.
    """
    if window is not None and n_dummy < window:
        raise ValueError(
            f"n_dummy={n_dummy} is smaller than the context window {window}; "
            "adjacent comments would share contexts"
        )
    tokens = []
    boundaries = []
    for comment in comments:
        if not comment:
            continue
        if tokens:
            tokens.extend([DUMMY_TOKEN] * n_dummy)
        boundaries.append(len(tokens))
        tokens.extend(comment)
    return TokenStream(
        community=community, tokens=tokens, comment_boundaries=boundaries, n_dummy=n_dummy
    )


def user_comment_counts(records, deleted_author=DELETED_AUTHOR):
    """Comment counts per author, excluding the deleted-author sentinel.

    Deleted comments still feed text corpora; they just never count as a
    user observation.
    """
    counts = defaultdict(int)
    for rec in records:
        if rec.author == deleted_author:
            continue
        counts[rec.author] += 1
    return dict(counts)
