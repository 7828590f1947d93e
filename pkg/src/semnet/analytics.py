"""Downstream measures: polarisation, betweenness, activity series, cross-tabs, bot filtering."""
from __future__ import annotations

import csv
import math
from collections import Counter, defaultdict, deque
from dataclasses import dataclass
from datetime import date, timedelta
from typing import Hashable, Iterable, Mapping, Sequence

import numpy as np

from .graphs import BipartiteGraph, UndirectedGraph, _csv, induced_subgraph
from .ingest import TweetRecord

# --------------------------------------------------------------------------
# polarisation


def interaction_fractions(counts: Mapping[Hashable, float], total: float) -> dict:
    """I_c = counts[c] / total for each tracked community c."""
    if total <= 0:
        raise ValueError("total interactions must be positive")
    return {c: v / total for c, v in counts.items()}


@dataclass
class PolarizationReport:
    fractions: dict[str, dict[Hashable, float]]
    rho: dict[str, float]
    top_community: dict[str, Hashable | None]
    communities: list
    excluded: int
    bin_edges: np.ndarray
    histogram: np.ndarray

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("user_id,rho,top_community\n")
            for u in sorted(self.rho):
                top = self.top_community[u]
                fh.write(f"{_csv(u)},{float(self.rho[u])!r},{'' if top is None else _csv(str(top))}\n")

    def write_histogram(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("bin_lo,bin_hi,count\n")
            for lo, hi, c in zip(self.bin_edges[:-1], self.bin_edges[1:], self.histogram):
                fh.write(f"{lo:.6g},{hi:.6g},{int(c)}\n")


def polarization(bipartite: BipartiteGraph, community_of_verified: Mapping[str, Hashable],
                 bin_width: float = 0.05) -> PolarizationReport:
    """Polarisation index of every non-verified (bottom) user.

    N_a is the set of verified neighbours of user a; I_{a,c} is the share of
    N_a in tracked community c and rho_a = max_c I_{a,c}. Interactions are
    counted once per verified account. Users without neighbours are left out.
    """
    comms = sorted(set(community_of_verified.values()), key=str)
    top_comm = [community_of_verified.get(t) for t in bipartite.top_nodes]
    nbrs: dict[int, list[int]] = defaultdict(list)
    for i, a in bipartite.edges.tolist():
        nbrs[a].append(i)
    fractions, rho, best = {}, {}, {}
    excluded = 0
    for a, user in enumerate(bipartite.bottom_nodes):
        ns = nbrs.get(a, [])
        if not ns:
            excluded += 1
            continue
        counts = Counter(top_comm[i] for i in ns if top_comm[i] is not None)
        fr = interaction_fractions({c: counts.get(c, 0) for c in comms}, len(ns))
        fractions[user] = fr
        r = max(fr.values()) if fr else 0.0
        rho[user] = r
        best[user] = next((c for c in comms if fr[c] == r), None) if r > 0 else None
    n_bins = max(1, int(round(1.0 / bin_width)))
    edges = np.linspace(0.0, 1.0, n_bins + 1)
    hist, _ = np.histogram(np.fromiter(rho.values(), float, len(rho)), bins=edges)
    return PolarizationReport(fractions, rho, best, comms, excluded, edges, hist)


# --------------------------------------------------------------------------
# betweenness


def betweenness(g: UndirectedGraph, nodes: Iterable[str] | None = None) -> dict[str, float]:
    """Shortest-path betweenness, unnormalised, each unordered pair once.

    With ``nodes`` the computation runs on the subgraph they induce.
    """
    if nodes is not None:
        g = induced_subgraph(g, nodes)
    n = g.n_nodes
    adj = [list(d) for d in g.neighbor_lists()]
    bc = np.zeros(n)
    for s in range(n):
        stack = []
        preds: list[list[int]] = [[] for _ in range(n)]
        sigma = np.zeros(n)
        sigma[s] = 1.0
        dist = np.full(n, -1)
        dist[s] = 0
        q = deque([s])
        while q:
            v = q.popleft()
            stack.append(v)
            for w in adj[v]:
                if dist[w] < 0:
                    dist[w] = dist[v] + 1
                    q.append(w)
                if dist[w] == dist[v] + 1:
                    sigma[w] += sigma[v]
                    preds[w].append(v)
        delta = np.zeros(n)
        while stack:
            w = stack.pop()
            for v in preds[w]:
                delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w])
            if w != s:
                bc[w] += delta[w]
    return {node: float(bc[i] / 2.0) for i, node in enumerate(g.nodes)}


# --------------------------------------------------------------------------
# activity series


@dataclass
class ActivitySeries:
    days: list[date]
    groups: list
    counts: np.ndarray                 # shape (days, groups)
    normalization: str = "none"

    @property
    def normalized(self) -> np.ndarray | None:
        if self.normalization == "none":
            return None
        c = self.counts.astype(float)
        if self.normalization == "per-group":
            tot = c.sum(axis=0)
            return np.divide(c, tot, out=np.zeros_like(c), where=tot > 0)
        tot = c.sum()
        return c / tot if tot > 0 else np.zeros_like(c)

    def series(self, group) -> np.ndarray:
        return self.counts[:, self.groups.index(group)]

    def write_csv(self, path) -> None:
        norm = self.normalized
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("date,group,count" + (",normalized" if norm is not None else "") + "\n")
            for d, day in enumerate(self.days):
                for k, grp in enumerate(self.groups):
                    line = f"{day.isoformat()},{_csv(str(grp))},{int(self.counts[d, k])}"
                    if norm is not None:
                        line += f",{float(norm[d, k])!r}"
                    fh.write(line + "\n")


def temporal_series(records: Sequence[TweetRecord], group_of: Mapping[str, Hashable],
                    normalization: str = "none", item: str = "hashtag",
                    window: tuple[date, date] | None = None) -> ActivitySeries:
    """Daily (UTC) event counts per group.

    ``item="hashtag"`` counts each tracked hashtag of a record once;
    ``item="user"`` counts a record once when its author is tracked.
    ``normalization`` is ``"none"``, ``"per-group"`` (divide by the group's
    total over the window) or ``"global"`` (divide by the overall total).
    """
    if normalization not in ("none", "per-group", "global"):
        raise ValueError(f"unknown normalization {normalization!r}")
    if item not in ("hashtag", "user"):
        raise ValueError(f"unknown item kind {item!r}")
    records = [r for r in records if window is None or window[0] <= r.day <= window[1]]
    if not records:
        raise ValueError("no records inside the window")
    start, end = window if window is not None else (min(r.day for r in records),
                                                     max(r.day for r in records))
    days = [start + timedelta(days=k) for k in range((end - start).days + 1)]
    groups = sorted(set(group_of.values()), key=str)
    gi = {g: k for k, g in enumerate(groups)}
    counts = np.zeros((len(days), len(groups)), dtype=np.int64)
    for r in records:
        d = (r.day - start).days
        if item == "user":
            if r.user_id in group_of:
                counts[d, gi[group_of[r.user_id]]] += 1
        else:
            for t in r.all_hashtags:
                if t in group_of:
                    counts[d, gi[group_of[t]]] += 1
    return ActivitySeries(days, groups, counts, normalization)


# --------------------------------------------------------------------------
# cross tabulation


@dataclass
class CrossTab:
    rows: list
    cols: list
    matrix: np.ndarray
    untracked: int
    total_events: int

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("community," + ",".join(_csv(str(c)) for c in self.cols) + "\n")
            for r, row in zip(self.rows, self.matrix):
                fh.write(_csv(str(r)) + "," + ",".join(str(int(v)) for v in row) + "\n")


def crosstab(records: Iterable[TweetRecord], user_community: Mapping[str, Hashable],
             hashtag_community: Mapping[str, Hashable], verified_only: bool = False,
             verified: set[str] | None = None) -> CrossTab:
    """Hashtag-use events by (user community, hashtag community).

    One event per (record, distinct hashtag). Events whose user or hashtag is
    untracked are tallied in ``untracked``.
    """
    rows = sorted(set(user_community.values()), key=str)
    cols = sorted(set(hashtag_community.values()), key=str)
    ri = {c: k for k, c in enumerate(rows)}
    ci = {c: k for k, c in enumerate(cols)}
    mat = np.zeros((len(rows), len(cols)), dtype=np.int64)
    untracked = total = 0
    for r in records:
        if verified_only and not (r.verified or (verified is not None and r.user_id in verified)):
            continue
        uc = user_community.get(r.user_id)
        for t in r.all_hashtags:
            total += 1
            hc = hashtag_community.get(t)
            if uc is None or hc is None:
                untracked += 1
            else:
                mat[ri[uc], ci[hc]] += 1
    return CrossTab(rows, cols, mat, untracked, total)


# --------------------------------------------------------------------------
# bot scores


def read_scores(path) -> dict[str, float]:
    """Read a ``user_id,score`` CSV. Raises ValueError on malformed rows."""
    scores = {}
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"user_id", "score"} <= set(reader.fieldnames):
            raise ValueError(f"{path}: expected columns user_id,score")
        for lineno, row in enumerate(reader, 2):
            try:
                s = float(row["score"])
            except (TypeError, ValueError):
                raise ValueError(f"{path}:{lineno}: bad score {row['score']!r}") from None
            if not math.isfinite(s) or not row["user_id"]:
                raise ValueError(f"{path}:{lineno}: bad row")
            scores[row["user_id"]] = s
    return scores


def filter_by_bot_score(records: Iterable[TweetRecord], scores: Mapping[str, float],
                        threshold: float = 0.5) -> tuple[list[TweetRecord], dict]:
    """Records whose author scores at least ``threshold``, plus a summary."""
    kept, below, unscored = [], 0, 0
    unscored_users = set()
    for r in records:
        s = scores.get(r.user_id)
        if s is None:
            unscored += 1
            unscored_users.add(r.user_id)
        elif s >= threshold:
            kept.append(r)
        else:
            below += 1
    summary = {"threshold": threshold, "kept_records": len(kept), "below_threshold": below,
               "unscored_records": unscored, "unscored_users": len(unscored_users),
               "bot_users": len({r.user_id for r in kept})}
    return kept, summary
