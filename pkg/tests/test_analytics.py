import itertools
from datetime import date, datetime, timedelta, timezone

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import betweenness_bruteforce
from semnet.analytics import (betweenness, crosstab, filter_by_bot_score,
                              interaction_fractions, polarization, read_scores, temporal_series)
from semnet.graphs import BipartiteGraph, UndirectedGraph
from semnet.ingest import TweetRecord

DAY0 = datetime(2020, 3, 23, 12, tzinfo=timezone.utc)


def rec(tid, user, tags=(), day=0, verified=False, rt=None, rt_tags=None):
    return TweetRecord(str(tid), user, verified, DAY0 + timedelta(days=day), "covid",
                       tuple(tags), rt, None if rt_tags is None else tuple(rt_tags))


# ---------------------------------------------------------------- polarisation

def polar_fixture():
    comm = {}
    pairs = []
    for c in "ABCDEF":
        for k in range(3):
            comm[f"{c}{k}"] = c
    pairs += [("A0", "only_a"), ("A1", "only_a")]
    pairs += [(f"{c}0", "even") for c in "ABCDEF"]
    pairs += [("A0", "mixed"), ("A1", "mixed"), ("A2", "mixed"), ("B0", "mixed")]
    g = BipartiteGraph.from_pairs(pairs, sorted(comm), ["only_a", "even", "mixed", "lonely"])
    return g, comm


def test_polarization_examples():
    g, comm = polar_fixture()
    rep = polarization(g, comm)
    assert rep.rho["only_a"] == 1.0
    assert rep.rho["even"] == 1 / 6
    assert rep.rho["mixed"] == 0.75
    assert rep.fractions["mixed"]["A"] == 0.75 and rep.fractions["mixed"]["B"] == 0.25
    assert rep.top_community["mixed"] == "A"
    assert "lonely" not in rep.rho and rep.excluded == 1
    assert rep.histogram.sum() == 3


def test_polarization_untracked_neighbours_share_denominator():
    g = BipartiteGraph.from_pairs([("A0", "u"), ("X", "u")], ["A0", "X"], ["u"])
    rep = polarization(g, {"A0": "A"})
    assert rep.rho["u"] == 0.5
    assert sum(rep.fractions["u"].values()) <= 1.0


def test_polarization_outputs(tmp_path):
    g, comm = polar_fixture()
    rep = polarization(g, comm, bin_width=0.25)
    rep.write_csv(tmp_path / "p.csv")
    rep.write_histogram(tmp_path / "h.csv")
    lines = (tmp_path / "p.csv").read_text().splitlines()
    assert lines[0] == "user_id,rho,top_community"
    assert "mixed,0.75,A" in lines
    hist = (tmp_path / "h.csv").read_text().splitlines()
    assert hist[0] == "bin_lo,bin_hi,count" and len(hist) == 5


@given(st.dictionaries(st.sampled_from("ABCDEF"), st.integers(1, 1000), min_size=1),
       st.integers(1, 10_000))
def test_fractions_scale_invariant(counts, scale):
    total = sum(counts.values())
    a = interaction_fractions(counts, total)
    b = interaction_fractions({c: v * scale for c, v in counts.items()}, total * scale)
    assert a == b
    assert max(a, key=lambda c: (a[c], c)) == max(b, key=lambda c: (b[c], c))


@given(st.integers(0, 2 ** 32 - 1))
def test_polarization_bounds(seed):
    rng = np.random.default_rng(seed)
    n_top, n_bot = 12, 20
    m = rng.random((n_top, n_bot)) < 0.3
    g = BipartiteGraph.from_biadjacency(m)
    ncomm = int(rng.integers(1, 5))
    tracked = {t: int(rng.integers(ncomm)) for t in g.top_nodes if rng.random() < 0.8}
    rep = polarization(g, tracked)
    for u, r in rep.rho.items():
        assert 0.0 <= r <= 1.0
        assert sum(rep.fractions[u].values()) <= 1.0 + 1e-12
        a = g.bottom_nodes.index(u)
        if all(g.top_nodes[i] in tracked for i in np.flatnonzero(m[:, a])):
            assert r >= 1.0 / len(rep.communities) - 1e-12
    assert rep.excluded == int((m.sum(axis=0) == 0).sum())


# ---------------------------------------------------------------- betweenness

def test_betweenness_examples():
    path = betweenness(UndirectedGraph.from_pairs([("a", "b"), ("b", "c")]))
    assert path == {"a": 0.0, "b": 1.0, "c": 0.0}
    star = betweenness(UndirectedGraph.from_pairs([("c", x) for x in "xyz"]))
    assert star == {"c": 3.0, "x": 0.0, "y": 0.0, "z": 0.0}
    k4 = UndirectedGraph.from_pairs(list(itertools.combinations("abcd", 2)))
    assert set(betweenness(k4).values()) == {0.0}


def test_betweenness_subset_is_induced():
    g = UndirectedGraph.from_pairs([("a", "b"), ("b", "c"), ("a", "d"), ("d", "c")])
    assert betweenness(g, ["a", "b", "c"]) == {"a": 0.0, "b": 1.0, "c": 0.0}


@given(st.integers(1, 12).flatmap(lambda n: st.tuples(
    st.just(n), st.sets(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1))
                        .filter(lambda e: e[0] < e[1])))))
def test_betweenness_matches_enumeration(ne):
    n, edges = ne
    g = UndirectedGraph(tuple(f"v{i}" for i in range(n)),
                        np.array(sorted(edges), dtype=np.int64).reshape(-1, 2))
    got = betweenness(g)
    ref = betweenness_bruteforce(n, edges)
    for i in range(n):
        assert got[f"v{i}"] == pytest.approx(float(ref[i]), rel=1e-12, abs=1e-12)


# ---------------------------------------------------------------- series

def test_series_examples():
    one = temporal_series([rec(1, "u", ["h"])], {"h": "X"})
    assert one.counts.tolist() == [[1]]
    two = temporal_series([rec(1, "u", ["h"]), rec(2, "v", ["k"])], {"h": "X", "k": "Y"})
    assert two.counts.tolist() == [[1, 1]]
    with pytest.raises(ValueError):
        temporal_series([rec(1, "u", ["h"], day=40)], {"h": "X"},
                        window=(date(2020, 3, 23), date(2020, 4, 23)))


def random_records(rng, n=200):
    out = []
    for i in range(n):
        tags = list(rng.choice(list("abcdefgh"), size=int(rng.integers(1, 4)), replace=False))
        out.append(rec(i, f"u{int(rng.integers(15))}", tags, day=int(rng.integers(0, 10)),
                       verified=bool(rng.random() < 0.2)))
    return out


@pytest.mark.parametrize("seed", range(5))
def test_series_conservation_and_normalisation(seed):
    rng = np.random.default_rng(seed)
    rs = random_records(rng)
    group = {t: t in "abc" and "X" or "Y" for t in "abcdef"}
    s = temporal_series(rs, group, "per-group")
    for k, grp in enumerate(s.groups):
        events = sum(1 for r in rs for t in r.all_hashtags if group.get(t) == grp)
        assert s.counts[:, k].sum() == events
        assert s.normalized[:, k].sum() == pytest.approx(1.0, abs=1e-12)
    assert np.all(s.counts >= 0)
    glob = temporal_series(rs, group, "global")
    assert glob.normalized.sum() == pytest.approx(1.0, abs=1e-12)
    users = temporal_series(rs, {f"u{i}": i % 3 for i in range(15)}, item="user")
    assert users.counts.sum() == len(rs)


def test_series_window_fills_zero_days(tmp_path):
    s = temporal_series([rec(1, "u", ["h"], day=2)], {"h": "X"},
                        window=(date(2020, 3, 23), date(2020, 3, 27)))
    assert s.counts[:, 0].tolist() == [0, 0, 1, 0, 0]
    s.write_csv(tmp_path / "s.csv")
    assert (tmp_path / "s.csv").read_text().splitlines()[:2] == [
        "date,group,count", "2020-03-23,X,0"]


# ---------------------------------------------------------------- cross-tab

def test_crosstab_examples():
    rs = [rec(1, "u", ["h"]), rec(2, "u", ["h"])]
    empty = crosstab(rs, {}, {"h": "S"})
    assert empty.matrix.sum() == 0 and empty.untracked == 2
    ct = crosstab(rs, {"u": "A"}, {"h": "S"})
    assert ct.matrix.tolist() == [[2]]
    mixed = [rec(1, "u", ["h"], verified=True), rec(2, "w", ["h"])]
    vo = crosstab(mixed, {"u": "A", "w": "B"}, {"h": "S"}, verified_only=True)
    assert vo.matrix.tolist() == [[1], [0]]


@pytest.mark.parametrize("seed", range(5))
def test_crosstab_conservation(seed):
    rng = np.random.default_rng(seed)
    rs = random_records(rng)
    users = {f"u{i}": f"D{i % 3}" for i in range(10)}
    tags = {t: f"S{k % 2}" for k, t in enumerate("abcde")}
    ct = crosstab(rs, users, tags)
    events = sum(len(r.all_hashtags) for r in rs)
    assert ct.matrix.sum() + ct.untracked == ct.total_events == events
    assert np.all(ct.matrix >= 0)
    for k, row in enumerate(ct.rows):
        expect = sum(1 for r in rs if users.get(r.user_id) == row
                     for t in r.all_hashtags if t in tags)
        assert ct.matrix[k].sum() == expect


# ---------------------------------------------------------------- bots

def test_bot_filter_examples():
    rs = [rec(1, "u1"), rec(2, "u2"), rec(3, "u1")]
    kept, _ = filter_by_bot_score(rs, {"u1": 0.9, "u2": 0.1}, 0.0)
    assert kept == rs
    kept, _ = filter_by_bot_score(rs, {"u1": 0.9, "u2": 0.1}, 0.95)
    assert kept == []
    kept, summary = filter_by_bot_score(rs, {"u1": 0.9, "u2": 0.1}, 0.5)
    assert [r.tweet_id for r in kept] == ["1", "3"]
    assert summary["bot_users"] == 1 and summary["below_threshold"] == 1
    _, summary = filter_by_bot_score(rs, {"u1": 0.9}, 0.5)
    assert summary["unscored_users"] == 1 and summary["unscored_records"] == 1


def test_read_scores(tmp_path):
    good = tmp_path / "s.csv"
    good.write_text("user_id,score\nu1,0.9\nu2,0.1\n")
    assert read_scores(good) == {"u1": 0.9, "u2": 0.1}
    for body in ("user,score\nu1,0.9\n", "user_id,score\nu1,high\n", "user_id,score\nu1,nan\n",
                 ""):
        bad = tmp_path / "bad.csv"
        bad.write_text(body)
        with pytest.raises(ValueError):
            read_scores(bad)
