"""Tweet record ingestion, hashtag normalisation and bipartite graph builders.

Records are newline-delimited JSON objects::

    {"tweet_id": "1", "user_id": "u1", "verified": false,
     "timestamp": "2020-03-23T10:00:00Z", "text": "...",
     "hashtags": ["covid19"], "retweeted_user_id": "u7",
     "retweeted_user_verified": true, "retweeted_hashtags": ["iorestoacasa"]}

Only ``tweet_id``, ``user_id`` and ``timestamp`` are required; unknown fields
are ignored.
"""
from __future__ import annotations

import csv
import json
import logging
from collections import Counter
from dataclasses import dataclass, field, replace
from datetime import date, datetime, timezone
from typing import Iterable, Mapping, Sequence

import numpy as np

from .graphs import BipartiteGraph, UndirectedGraph, _csv

log = logging.getLogger(__name__)

DEFAULT_KEYWORDS = (
    "coronavirus", "coronaviruses", "ncov", "ncov2020", "ncov2019", "covid2019",
    "covid-19", "SARS-CoV2", "#coronavirus", "#WuhanCoronavirus", "#coronaviruschina",
    "#CoronavirusOutbreak", "#coronaviruswuhan", "#ChinaCoronaVirus", "#nCoV",
    "#coronaviruses", "#ChinaWuHan", "#nCoV2020", "#nCoV2019", "#covid2019", "#covid-19",
    "#SARS_CoV_2", "#SARSCoV2", "#COVID19",
)
DEFAULT_THRESHOLD = 0.82


def normalize_hashtag(tag: str) -> str:
    """Case-fold and drop a leading '#'; accents are kept."""
    return tag.strip().lstrip("#").casefold()


@dataclass(frozen=True)
class TweetRecord:
    tweet_id: str
    user_id: str
    verified: bool
    timestamp: datetime
    text: str = ""
    hashtags: tuple[str, ...] = ()
    retweeted_user_id: str | None = None
    retweeted_hashtags: tuple[str, ...] | None = None
    retweeted_user_verified: bool | None = None

    @property
    def day(self) -> date:
        return self.timestamp.astimezone(timezone.utc).date()

    @property
    def all_hashtags(self) -> tuple[str, ...]:
        """Own hashtags plus those of the retweeted original, without repeats."""
        tags = list(self.hashtags)
        for t in self.retweeted_hashtags or ():
            if t not in tags:
                tags.append(t)
        return tuple(tags)

    def to_json(self) -> dict:
        out = {
            "tweet_id": self.tweet_id,
            "user_id": self.user_id,
            "verified": self.verified,
            "timestamp": self.timestamp.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ"),
            "text": self.text,
            "hashtags": list(self.hashtags),
        }
        if self.retweeted_user_id is not None:
            out["retweeted_user_id"] = self.retweeted_user_id
            out["retweeted_hashtags"] = list(self.retweeted_hashtags or ())
            if self.retweeted_user_verified is not None:
                out["retweeted_user_verified"] = self.retweeted_user_verified
        return out


def parse_timestamp(value) -> datetime:
    if isinstance(value, (int, float)):
        return datetime.fromtimestamp(value, tz=timezone.utc)
    s = str(value).strip()
    if s.endswith("Z"):
        s = s[:-1] + "+00:00"
    ts = datetime.fromisoformat(s)
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def record_from_json(obj: Mapping) -> TweetRecord:
    rt = obj.get("retweeted_user_id")
    rth = obj.get("retweeted_hashtags")
    rtv = obj.get("retweeted_user_verified")
    return TweetRecord(
        tweet_id=str(obj["tweet_id"]),
        user_id=str(obj["user_id"]),
        verified=bool(obj.get("verified", False)),
        timestamp=parse_timestamp(obj["timestamp"]),
        text=str(obj.get("text") or ""),
        hashtags=_clean_tags(obj.get("hashtags") or ()),
        retweeted_user_id=None if rt in (None, "") else str(rt),
        retweeted_hashtags=None if rth is None else _clean_tags(rth),
        retweeted_user_verified=None if rtv is None else bool(rtv),
    )


def _clean_tags(tags: Iterable[str]) -> tuple[str, ...]:
    out = []
    for t in tags:
        n = normalize_hashtag(str(t))
        if n and n not in out:
            out.append(n)
    return tuple(out)


class ParsedRecords(list):
    """List of retained records with counters for everything dropped."""

    def __init__(self, records=(), *, malformed=0, no_keyword=0, no_hashtag=0, out_of_window=0):
        super().__init__(records)
        self.malformed = malformed
        self.no_keyword = no_keyword
        self.no_hashtag = no_hashtag
        self.out_of_window = out_of_window

    def report(self) -> dict:
        return {"retained": len(self), "malformed": self.malformed,
                "dropped_no_keyword": self.no_keyword, "dropped_no_hashtag": self.no_hashtag,
                "dropped_out_of_window": self.out_of_window}


def load_keywords(path) -> tuple[str, ...]:
    with open(path, encoding="utf-8") as fh:
        return tuple(line.strip() for line in fh if line.strip() and not line.startswith("#"))


def matches_keywords(rec: TweetRecord, keywords: Sequence[str]) -> bool:
    text = rec.text.casefold()
    tags = set(rec.all_hashtags)
    for kw in keywords:
        term = normalize_hashtag(kw)
        if term in tags or term in text:
            return True
    return False


def parse_records(path, keyword_filter: bool = True, keywords: Sequence[str] = DEFAULT_KEYWORDS,
                  window: tuple[date, date] | None = None) -> ParsedRecords:
    """Read NDJSON records, keeping those that pass the filters.

    A record is dropped when the keyword filter is on and it matches none of
    ``keywords``, when it carries no hashtag (own or retweeted), or when it
    falls outside ``window`` (inclusive UTC dates). Malformed lines are
    skipped with a warning.
    """
    out = ParsedRecords()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = record_from_json(json.loads(line))
            except (ValueError, KeyError, TypeError) as exc:
                log.warning("%s:%d: skipping malformed record (%s)", path, lineno, exc)
                out.malformed += 1
                continue
            if window is not None and not (window[0] <= rec.day <= window[1]):
                out.out_of_window += 1
                continue
            if keyword_filter and not matches_keywords(rec, keywords):
                out.no_keyword += 1
                continue
            if not rec.all_hashtags:
                out.no_hashtag += 1
                continue
            out.append(rec)
    return out


def write_records(records: Iterable[TweetRecord], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for r in records:
            fh.write(json.dumps(r.to_json(), ensure_ascii=False, sort_keys=True) + "\n")


# --------------------------------------------------------------------------
# Levenshtein normalisation


def levenshtein_distance(a: str, b: str, limit: int | None = None) -> int:
    """Unit-cost edit distance. With ``limit`` set, any value above it may be
    reported as ``limit + 1``."""
    if len(a) < len(b):
        a, b = b, a
    if limit is not None and len(a) - len(b) > limit:
        return limit + 1
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        if limit is not None and min(cur) > limit:
            return limit + 1
        prev = cur
    return prev[-1]


def levenshtein_similarity(a: str, b: str, norm: str = "max") -> float:
    """1 - d(a, b) / max(|a|, |b|)  (or / (|a| + |b|) with ``norm="sum"``)."""
    if not a and not b:
        raise ValueError("similarity of two empty strings is undefined")
    denom = _denominator(a, b, norm)
    return 1.0 - levenshtein_distance(a, b) / denom


def _denominator(a, b, norm):
    if norm == "max":
        return max(len(a), len(b))
    if norm == "sum":
        return len(a) + len(b)
    raise ValueError(f"unknown normalisation {norm!r}")


def similar(a: str, b: str, threshold: float, norm: str = "max") -> bool:
    """levenshtein_similarity(a, b) >= threshold, with early exits."""
    denom = _denominator(a, b, norm)
    # largest distance d with 1 - d / denom >= threshold
    limit = int(np.floor((1.0 - threshold) * denom + 1e-9))
    if abs(len(a) - len(b)) > limit:
        return False
    d = levenshtein_distance(a, b, limit)
    return d <= limit and 1.0 - d / denom >= threshold


@dataclass
class HashtagLexicon:
    canonical: dict[str, str]
    counts: dict[str, int]
    raw_counts: dict[str, int] = field(default_factory=dict)

    def __getitem__(self, tag: str) -> str:
        return self.canonical.get(tag, tag)

    @property
    def reduction(self) -> float:
        """Fraction of distinct raw hashtags removed by merging."""
        if not self.canonical:
            return 0.0
        return 1.0 - len(self.counts) / len(self.canonical)

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("raw,canonical,count\n")
            for raw in sorted(self.canonical):
                fh.write(f"{_csv(raw)},{_csv(self.canonical[raw])},{self.raw_counts.get(raw, 0)}\n")

    @classmethod
    def read_csv(cls, path) -> "HashtagLexicon":
        canonical, raw_counts, counts = {}, {}, Counter()
        with open(path, encoding="utf-8", newline="") as fh:
            for row in csv.DictReader(fh):
                canonical[row["raw"]] = row["canonical"]
                raw_counts[row["raw"]] = int(row["count"])
                counts[row["canonical"]] += int(row["count"])
        return cls(canonical, dict(counts), raw_counts)


def hashtag_frequencies(records: Iterable[TweetRecord]) -> Counter:
    """Occurrences of each hashtag across records (once per record)."""
    c: Counter = Counter()
    for r in records:
        c.update(r.all_hashtags)
    return c


def dedup_hashtags(hashtags: Mapping[str, int], threshold: float = DEFAULT_THRESHOLD,
                   norm: str = "max") -> HashtagLexicon:
    """Greedy frequency-ordered merge of near-duplicate hashtags.

    Hashtags are visited by decreasing frequency (ties alphabetical); each
    one joins the first existing canonical form it is similar enough to, or
    becomes a new canonical form itself.
    """
    if not hashtags:
        raise ValueError("no hashtags to normalise")
    order = sorted(hashtags, key=lambda t: (-hashtags[t], t))
    heads: list[str] = []
    canonical: dict[str, str] = {}
    counts: dict[str, int] = {}
    for tag in order:
        target = None
        for head in heads:
            if similar(tag, head, threshold, norm):
                target = head
                break
        if target is None:
            heads.append(tag)
            target = tag
            counts[tag] = 0
        canonical[tag] = target
        counts[target] += int(hashtags[tag])
    return HashtagLexicon(canonical, counts, {t: int(c) for t, c in hashtags.items()})


def apply_lexicon(records: Iterable[TweetRecord], lexicon: HashtagLexicon) -> list[TweetRecord]:
    """Records with every hashtag replaced by its canonical form."""
    out = []
    for r in records:
        tags = _dedup(lexicon[t] for t in r.hashtags)
        rth = None if r.retweeted_hashtags is None else _dedup(
            lexicon[t] for t in r.retweeted_hashtags)
        out.append(replace(r, hashtags=tags, retweeted_hashtags=rth))
    return out


def _dedup(tags):
    out = []
    for t in tags:
        if t not in out:
            out.append(t)
    return tuple(out)


# --------------------------------------------------------------------------
# graph builders


def build_user_hashtag_graph(records: Iterable[TweetRecord],
                             lexicon: HashtagLexicon | None = None) -> BipartiteGraph:
    """Users (top) x canonical hashtags (bottom); one edge per used pair."""
    pairs = set()
    for r in records:
        for t in r.all_hashtags:
            pairs.add((r.user_id, lexicon[t] if lexicon is not None else t))
    users = sorted({u for u, _ in pairs})
    tags = sorted({t for _, t in pairs})
    return BipartiteGraph.from_pairs(sorted(pairs), users, tags)


def verified_users(records: Iterable[TweetRecord]) -> set[str]:
    out = set()
    for r in records:
        if r.verified:
            out.add(r.user_id)
        if r.retweeted_user_id is not None and r.retweeted_user_verified:
            out.add(r.retweeted_user_id)
    return out


def build_verified_retweet_graph(records: Sequence[TweetRecord],
                                 directions: str = "both") -> BipartiteGraph:
    """Verified (top) x non-verified (bottom) users linked by retweets.

    With ``directions="both"`` a retweet in either direction creates the
    edge; ``"to-verified"`` keeps only non-verified users retweeting verified
    ones.
    """
    if directions not in ("both", "to-verified"):
        raise ValueError(f"unknown direction mode {directions!r}")
    records = list(records)
    ver = verified_users(records)
    pairs = set()
    for r in records:
        src, dst = r.user_id, r.retweeted_user_id
        if dst is None or src == dst:
            continue
        if dst in ver and src not in ver:
            pairs.add((dst, src))
        elif src in ver and dst not in ver and directions == "both":
            pairs.add((src, dst))
    top = sorted({a for a, _ in pairs})
    bottom = sorted({b for _, b in pairs})
    return BipartiteGraph.from_pairs(sorted(pairs), top, bottom)


def build_retweet_network(records: Iterable[TweetRecord]) -> UndirectedGraph:
    """Undirected, unweighted retweet network over all users."""
    pairs = set()
    for r in records:
        if r.retweeted_user_id is not None and r.retweeted_user_id != r.user_id:
            a, b = sorted((r.user_id, r.retweeted_user_id))
            pairs.add((a, b))
    nodes = sorted({x for p in pairs for x in p})
    return UndirectedGraph.from_pairs(sorted(pairs), nodes)
