"""Synthetic generators with planted ground truth, used by tests, scripts and benches."""
from __future__ import annotations

import json
import string
from dataclasses import dataclass
from datetime import date, datetime, timedelta, timezone

import numpy as np

from .graphs import BipartiteGraph

_ALPHABET = np.array(list(string.ascii_lowercase))


def random_bipartite(n_top: int, n_bottom: int, density: float, rng_seed=0) -> BipartiteGraph:
    """Erdos-Renyi bipartite graph with independent links of probability ``density``."""
    rng = np.random.default_rng(rng_seed)
    return BipartiteGraph.from_biadjacency(rng.random((n_top, n_bottom)) < density)


def heterogeneous_bipartite(n_top: int, n_bottom: int, density: float, rng_seed=0,
                            spread: float = 1.0) -> BipartiteGraph:
    """Bipartite graph with log-normal node fitnesses, mean density ``density``."""
    rng = np.random.default_rng(rng_seed)
    a = rng.lognormal(0.0, spread, n_top)
    b = rng.lognormal(0.0, spread, n_bottom)
    p = np.outer(a, b)
    p *= density / p.mean()
    return BipartiteGraph.from_biadjacency(rng.random(p.shape) < np.minimum(p, 1.0))


@dataclass
class PlantedBlock:
    graph: BipartiteGraph
    block_top: np.ndarray
    block_bottom: np.ndarray

    def planted_pairs(self) -> set[tuple[str, str]]:
        ids = [self.graph.top_nodes[i] for i in sorted(self.block_top)]
        return {(a, b) for k, a in enumerate(ids) for b in ids[k + 1:]}


def planted_block(n_top: int = 100, n_bottom: int = 300, block_top: int = 20,
                  block_bottom: int = 30, background: float = 0.02, rng_seed=0) -> PlantedBlock:
    """Sparse background plus a complete block of ``block_top`` x ``block_bottom`` nodes."""
    rng = np.random.default_rng(rng_seed)
    m = rng.random((n_top, n_bottom)) < background
    bt = rng.choice(n_top, block_top, replace=False)
    bb = rng.choice(n_bottom, block_bottom, replace=False)
    m[np.ix_(bt, bb)] = True
    return PlantedBlock(BipartiteGraph.from_biadjacency(m), bt, bb)


def _word(rng, lo: int, hi: int) -> str:
    return "".join(rng.choice(_ALPHABET, int(rng.integers(lo, hi + 1))))


def _typo(rng, w: str) -> str:
    k = int(rng.integers(len(w)))
    op = int(rng.integers(3))
    c = str(rng.choice(_ALPHABET))
    if op == 0:
        return w[:k] + c + w[k + 1:]
    if op == 1:
        return w[:k] + c + w[k:]
    return w[:k] + w[k + 1:]


@dataclass
class TypoCorpus:
    frequencies: dict[str, int]
    truth: dict[str, str]           # raw -> planted canonical

    @property
    def planted_reduction(self) -> float:
        return 1.0 - len(set(self.truth.values())) / len(self.truth)


def planted_typo_corpus(n_hashtags: int = 1000, variant_fraction: float = 0.3,
                        rng_seed=0, length=(10, 16)) -> TypoCorpus:
    """Hashtag frequency table where ``variant_fraction`` of the entries are
    single-edit variants of a base hashtag and rarer than it.

    Base words are random strings, far apart in edit distance; one edit on a
    word of length >= 10 keeps similarity >= 0.9.
    """
    rng = np.random.default_rng(rng_seed)
    n_var = int(round(variant_fraction * n_hashtags))
    n_base = n_hashtags - n_var
    bases: list[str] = []
    seen: set[str] = set()
    while len(bases) < n_base:
        w = _word(rng, *length)
        if w not in seen:
            seen.add(w)
            bases.append(w)
    freq = {w: int(rng.integers(50, 1000)) for w in bases}
    truth = {w: w for w in bases}
    while len(truth) < n_hashtags:
        b = bases[int(rng.integers(n_base))]
        v = _typo(rng, b)
        if v in seen:
            continue
        seen.add(v)
        freq[v] = int(rng.integers(1, 50))
        truth[v] = b
    return TypoCorpus(freq, truth)


# --------------------------------------------------------------------------
# tweet-record fixture


_CAMP_TAGS = (
    ("governo", "conte", "decreto", "dpcm", "fase2", "mes", "eurobond", "lavoro"),
    ("salvini", "lega", "chiudiamotutto", "italiasovrana", "prima", "sicurezza", "confini",
     "tasse"),
    ("ospedali", "medici", "vaccino", "tampone", "terapia", "oms", "ricerca", "contagi"),
)
_SHARED_TAGS = ("coronavirus", "covid19", "iorestoacasa", "italia")
_TYPOS = {"coronavirus": "coronaviruss", "iorestoacasa": "iorestaacasa", "covid19": "covid_19"}


def synthetic_records(n_users: int = 200, n_camps: int = 3, verified_per_camp: int = 8,
                      n_tweets: int = 2400, rng_seed: int = 0,
                      start: date = date(2020, 3, 23), days: int = 32) -> list[dict]:
    """NDJSON-ready dicts of a toy debate with ``n_camps`` planted camps.

    Verified accounts post camp hashtags; non-verified users mostly retweet
    verified accounts of their own camp. A handful of records are off-topic,
    hashtag-free or outside the window so every filter is exercised.
    """
    rng = np.random.default_rng(rng_seed)
    tags = [list(_CAMP_TAGS[c % len(_CAMP_TAGS)]) for c in range(n_camps)]
    if n_camps > len(_CAMP_TAGS):
        tags = [[f"{t}{c}" for t in tags[c]] for c in range(n_camps)]
    verified = [f"v{c}_{k}" for c in range(n_camps) for k in range(verified_per_camp)]
    vcamp = {u: c for c in range(n_camps) for u in verified[c * verified_per_camp:
                                                           (c + 1) * verified_per_camp]}
    others = [f"u{k:03d}" for k in range(n_users - len(verified))]
    ocamp = {u: int(rng.integers(n_camps)) for u in others}
    by_camp = {c: [u for u in verified if vcamp[u] == c] for c in range(n_camps)}
    # each non-verified user follows a few accounts, mostly in-camp
    follows = {}
    for u in others:
        own = by_camp[ocamp[u]]
        k = int(rng.integers(3, len(own) + 1))
        f = list(rng.choice(own, k, replace=False))
        if rng.random() < 0.3:
            f.append(str(rng.choice(verified)))
        follows[u] = f

    def when():
        d = int(rng.integers(days))
        s = int(rng.integers(86400))
        return datetime(start.year, start.month, start.day, tzinfo=timezone.utc) + \
            timedelta(days=d, seconds=s)

    def pick_tags(c):
        own = tags[c]
        n = int(rng.integers(1, 4))
        out = list(rng.choice(own, n, replace=False))
        if rng.random() < 0.5:
            t = str(rng.choice(_SHARED_TAGS))
            if rng.random() < 0.1 and t in _TYPOS:
                t = _TYPOS[t]
            out.append(t)
        return [str(t) for t in out]

    def text(tg):
        kw = "coronavirus" if rng.random() < 0.7 else "covid-19"
        return f"{kw} " + " ".join("#" + t for t in tg)

    out = []
    originals: list[tuple[str, list[str]]] = []
    tid = 0
    for _ in range(n_tweets // 4):
        u = str(rng.choice(verified))
        tg = pick_tags(vcamp[u])
        tid += 1
        out.append({"tweet_id": str(tid), "user_id": u, "verified": True,
                    "timestamp": when().strftime("%Y-%m-%dT%H:%M:%SZ"),
                    "text": text(tg), "hashtags": tg})
        originals.append((u, tg))
    for _ in range(n_tweets - n_tweets // 4):
        u = str(rng.choice(others))
        tid += 1
        if rng.random() < 0.8:
            src = str(rng.choice(follows[u]))
            cand = [tg for a, tg in originals if a == src]
            tg = cand[int(rng.integers(len(cand)))] if cand else pick_tags(vcamp[src])
            out.append({"tweet_id": str(tid), "user_id": u, "verified": False,
                        "timestamp": when().strftime("%Y-%m-%dT%H:%M:%SZ"),
                        "text": "RT " + text(tg), "hashtags": [],
                        "retweeted_user_id": src, "retweeted_user_verified": True,
                        "retweeted_hashtags": tg})
        else:
            tg = pick_tags(ocamp[u])
            out.append({"tweet_id": str(tid), "user_id": u, "verified": False,
                        "timestamp": when().strftime("%Y-%m-%dT%H:%M:%SZ"),
                        "text": text(tg), "hashtags": tg})
    # records the filters must drop
    out.append({"tweet_id": "x1", "user_id": others[0], "verified": False,
                "timestamp": "2020-04-01T10:00:00Z", "text": "nothing relevant",
                "hashtags": ["pizza"]})
    out.append({"tweet_id": "x2", "user_id": others[1], "verified": False,
                "timestamp": "2020-04-01T10:00:00Z", "text": "coronavirus news",
                "hashtags": []})
    out.append({"tweet_id": "x3", "user_id": others[2], "verified": False,
                "timestamp": "2020-05-01T10:00:00Z", "text": "coronavirus",
                "hashtags": ["coronavirus"]})
    return out


def write_fixture(records: list[dict], path, malformed: int = 2) -> None:
    """Write records as NDJSON, followed by ``malformed`` unparseable lines."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for r in records:
            fh.write(json.dumps(r, sort_keys=True) + "\n")
        for k in range(malformed):
            fh.write('{"tweet_id": "broken%d", \n' % k)


def synthetic_bot_scores(records: list[dict], rng_seed: int = 0,
                         unscored_fraction: float = 0.05) -> dict[str, float]:
    rng = np.random.default_rng(rng_seed)
    users = sorted({r["user_id"] for r in records})
    return {u: round(float(rng.beta(2, 5)), 4) for u in users
            if rng.random() >= unscored_fraction}
