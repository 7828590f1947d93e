"""Modularity, Louvain with a pluggable null model, and seeded label propagation.

The null-model term of the modularity,

    Q = 1/(2m) sum_ij (A_ij - P_ij) delta(C_i, C_j),

is written as P_ij = u_i^T K u_j for per-node profile vectors u and a small
kernel K. Chung-Lu uses u_i = k_i and K = 1/(2m); the exact UCM uses one-hot
degree classes and K = the class-pair probability matrix. Community sums of
P then reduce to sums of profiles, which stay cheap under aggregation.
"""
from __future__ import annotations

import logging
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .graphs import NodeLabeling, Partition, UndirectedGraph, induced_subgraph
from .maxent import UcmFit, solve_ucm

log = logging.getLogger(__name__)

NULL_MODELS = ("ucm", "chung-lu")
_GAIN_EPS = 1e-12


@dataclass
class ModularityContext:
    """Graph plus null model used to score partitions.

    ``self_pairs`` controls whether the i = j terms of the null model enter
    the sum; by default they do for Chung-Lu (the textbook modularity) and do
    not for the UCM, which has no self-loops.
    """

    graph: UndirectedGraph
    null_model: str = "ucm"
    fit: UcmFit | None = None
    self_pairs: bool | None = None
    profiles: np.ndarray = field(init=False, repr=False)
    kernel: np.ndarray = field(init=False, repr=False)
    self_null: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        g = self.graph
        if self.null_model not in NULL_MODELS:
            raise ValueError(f"null model must be one of {NULL_MODELS}")
        m = g.total_weight
        if self.null_model == "chung-lu":
            k = g.strengths()
            self.profiles = k[:, None].astype(float)
            self.kernel = np.array([[1.0 / (2 * m)]]) if m > 0 else np.zeros((1, 1))
            if self.self_pairs is None:
                self.self_pairs = True
        else:
            if g.weights is not None and not np.allclose(g.weights, 1.0):
                raise ValueError("the UCM null model needs an unweighted graph")
            if self.fit is None:
                self.fit = solve_ucm(g)
            if self.fit.n_nodes != g.n_nodes:
                raise ValueError("UCM fit does not match the graph")
            n_cls = len(self.fit.class_degrees)
            self.profiles = np.zeros((g.n_nodes, n_cls))
            self.profiles[np.arange(g.n_nodes), self.fit.node_class] = 1.0
            self.kernel = self.fit.class_probabilities()
            if self.self_pairs is None:
                self.self_pairs = False
        self.self_null = np.einsum("ia,ab,ib->i", self.profiles, self.kernel, self.profiles)

    @property
    def two_m(self) -> float:
        return 2.0 * self.graph.total_weight

    def null_probability(self, i: int, j: int) -> float:
        if i == j and not self.self_pairs:
            return 0.0
        return float(self.profiles[i] @ self.kernel @ self.profiles[j])

    def null_matrix(self) -> np.ndarray:
        p = self.profiles @ self.kernel @ self.profiles.T
        if not self.self_pairs:
            np.fill_diagonal(p, 0.0)
        return p


def modularity(ctx: ModularityContext, partition: Partition) -> float:
    """Q of ``partition``, summed community by community."""
    g = ctx.graph
    if ctx.two_m == 0:
        raise ValueError("modularity is undefined for a graph without edges")
    labels = partition.labels_for(g.nodes)
    n_comm = int(labels.max()) + 1 if len(labels) else 0
    w = g.edge_weights
    same = labels[g.edges[:, 0]] == labels[g.edges[:, 1]]
    internal = np.bincount(labels[g.edges[same, 0]], weights=2 * w[same], minlength=n_comm)
    prof = np.zeros((n_comm, ctx.profiles.shape[1]))
    np.add.at(prof, labels, ctx.profiles)
    null = np.einsum("ca,ab,cb->c", prof, ctx.kernel, prof)
    if not ctx.self_pairs:
        null -= np.bincount(labels, weights=ctx.self_null, minlength=n_comm)
    return float((internal - null).sum() / ctx.two_m)


@dataclass
class LouvainResult:
    partition: Partition
    modularity: float
    passes: int
    trace: list[float]


class _Level:
    """Aggregated graph: super-nodes with summed profiles and self-loop weights."""

    def __init__(self, nbrs, loops, profiles, self_null):
        self.nbrs = nbrs          # list of dict: neighbour -> weight (no self entries)
        self.loops = loops        # ordered-pair internal adjacency sum per super-node
        self.profiles = profiles
        self.self_null = self_null

    @property
    def size(self):
        return len(self.nbrs)


def _local_moves(level: _Level, kernel, two_m, order):
    """Greedy relocation until no move improves Q. Returns community labels."""
    n = level.size
    comm = np.arange(n)
    comm_prof = level.profiles.copy()
    kprof = level.profiles @ kernel  # row i: K u_i (kernel is symmetric)
    moved_any = False
    improved = True
    while improved:
        improved = False
        for s in order:
            cur = comm[s]
            links: dict[int, float] = {}
            for t, w in level.nbrs[s].items():
                links[comm[t]] = links.get(comm[t], 0.0) + w
            comm_prof[cur] -= level.profiles[s]
            v = kprof[s]
            stay = 2.0 * links.get(cur, 0.0) - 2.0 * float(v @ comm_prof[cur])
            best, best_gain = cur, stay
            for c, w in links.items():
                if c == cur:
                    continue
                gain = 2.0 * w - 2.0 * float(v @ comm_prof[c])
                if gain > best_gain + _GAIN_EPS * two_m:
                    best, best_gain = c, gain
            if best_gain < -_GAIN_EPS * two_m:
                # isolating the node beats every available community
                empty = _empty_community(comm, comm_prof, s)
                if empty is not None:
                    best = empty
            comm_prof[best] += level.profiles[s]
            if best != cur:
                comm[s] = best
                improved = True
                moved_any = True
    return comm, moved_any


def _empty_community(comm, comm_prof, s):
    used = np.zeros(len(comm), dtype=bool)
    used[comm] = True
    used[comm[s]] = True
    free = np.flatnonzero(~used)
    if len(free) == 0:
        return None
    c = int(free[0])
    comm_prof[c] = 0.0
    return c


def _aggregate(level: _Level, comm):
    _, dense = np.unique(comm, return_inverse=True)
    dense = dense.ravel()
    k = int(dense.max()) + 1
    nbrs: list[dict[int, float]] = [dict() for _ in range(k)]
    loops = np.bincount(dense, weights=level.loops, minlength=k).astype(float)
    for s in range(level.size):
        cs = dense[s]
        for t, w in level.nbrs[s].items():
            ct = dense[t]
            if cs == ct:
                loops[cs] += w
            else:
                nbrs[cs][ct] = nbrs[cs].get(ct, 0.0) + w
    prof = np.zeros((k, level.profiles.shape[1]))
    np.add.at(prof, dense, level.profiles)
    self_null = np.bincount(dense, weights=level.self_null, minlength=k)
    return _Level(nbrs, loops, prof, self_null), dense


def louvain(ctx: ModularityContext, rng_seed: int = 0, max_passes: int = 100) -> LouvainResult:
    """Two-phase Louvain optimisation of ``modularity(ctx, .)``.

    Each pass shuffles the super-nodes once with a generator seeded from
    ``rng_seed``, relocates them greedily, then aggregates communities.
    """
    g = ctx.graph
    rng = np.random.default_rng(rng_seed)
    nbrs = g.neighbor_lists()
    loops = np.zeros(g.n_nodes)
    for i in range(g.n_nodes):
        if i in nbrs[i]:
            loops[i] = 2.0 * nbrs[i].pop(i)
    level = _Level(nbrs, loops, ctx.profiles.astype(float), ctx.self_null.copy())
    membership = np.arange(g.n_nodes)
    if ctx.two_m == 0:
        part = Partition.from_labels(g.nodes, membership.tolist())
        return LouvainResult(part, 0.0, 0, [0.0])
    trace = [modularity(ctx, Partition.from_labels(g.nodes, membership.tolist()))]
    passes = 0
    while passes < max_passes:
        order = rng.permutation(level.size)
        comm, moved = _local_moves(level, ctx.kernel, ctx.two_m, order)
        if not moved:
            break
        passes += 1
        level, dense = _aggregate(level, comm)
        membership = dense[membership]
        trace.append(modularity(ctx, Partition.from_labels(g.nodes, membership.tolist())))
    part = Partition.from_labels(g.nodes, membership.tolist())
    return LouvainResult(part, modularity(ctx, part), passes, trace)


def refine_partition(ctx: ModularityContext, partition: Partition, min_size: int,
                     rng_seed: int = 0) -> Partition:
    """Re-run Louvain inside every community with at least ``min_size`` nodes.

    Each community gets its own null model fitted on the induced subgraph.
    """
    out: dict[str, tuple[int, int]] = {}
    for c, members in enumerate(partition.communities()):
        sub = induced_subgraph(ctx.graph, members)
        if len(members) >= min_size and sub.n_edges > 0:
            sctx = ModularityContext(sub, ctx.null_model, self_pairs=ctx.self_pairs)
            res = louvain(sctx, rng_seed)
            for n in sub.nodes:
                out[n] = (c, res.partition[n])
        else:
            for n in members:
                out[n] = (c, 0)
    return Partition({n: out[n] for n in ctx.graph.nodes})


# --------------------------------------------------------------------------
# seeded label propagation


def _propagate_once(nbrs: list[dict[int, float]], seeds: dict[int, str], seed_seq,
                    max_sweeps: int) -> list[str | None]:
    rng = np.random.default_rng(seed_seq)
    n = len(nbrs)
    labels: list[str | None] = [None] * n
    for i, lab in seeds.items():
        labels[i] = lab
    free = np.array([i for i in range(n) if i not in seeds], dtype=np.int64)
    removed: set[tuple[int, int]] = set()

    def live(i):
        return [j for j in nbrs[i] if (min(i, j), max(i, j)) not in removed]

    for _ in range(max_sweeps):
        changed = False
        for i in rng.permutation(free).tolist():
            while True:
                tally: dict[str, float] = {}
                for j in live(i):
                    lab = labels[j]
                    if lab is not None:
                        tally[lab] = tally.get(lab, 0.0) + nbrs[i][j]
                if not tally:
                    new = labels[i]
                    break
                top = max(tally.values())
                winners = [lab for lab, w in tally.items() if w == top]
                if len(winners) == 1:
                    new = winners[0]
                    break
                # tie: drop one random incident edge of this node and look again
                cand = live(i)
                j = cand[int(rng.integers(len(cand)))]
                removed.add((min(i, j), max(i, j)))
            if new != labels[i]:
                labels[i] = new
                changed = True
        if not changed:
            break
    return labels


def _run_batch(args):
    nbrs, seeds, seed_seqs, max_sweeps = args
    return [_propagate_once(nbrs, seeds, s, max_sweeps) for s in seed_seqs]


def seeded_label_propagation(g: UndirectedGraph, seeds: Mapping[str, str], runs: int = 500,
                             rng_seed: int = 0, workers: int = 1,
                             max_sweeps: int = 1000) -> NodeLabeling:
    """Label propagation with immutable seed labels, repeated ``runs`` times.

    Every non-seed node takes the label with the largest (weighted) support
    among its labelled neighbours; on a tie one random incident edge is
    removed from that run's working graph and the node is re-evaluated.
    Each run uses its own child seed, so results do not depend on
    ``workers``. The final label of a node is its most frequent one, ties
    going to the lexicographically smallest label.
    """
    if not seeds:
        raise ValueError("at least one seed is required")
    if runs < 1:
        raise ValueError("runs must be positive")
    idx = g.index()
    seed_idx = {}
    for node, lab in seeds.items():
        if node not in idx:
            raise KeyError(f"seed {node!r} is not in the graph")
        seed_idx[idx[node]] = str(lab)
    nbrs = g.neighbor_lists()
    for i in range(g.n_nodes):
        nbrs[i].pop(i, None)
    children = np.random.SeedSequence(rng_seed).spawn(runs)
    if workers > 1:
        chunks = [children[k::workers] for k in range(workers)]
        with ProcessPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(_run_batch, [(nbrs, seed_idx, c, max_sweeps) for c in chunks]))
        results = [None] * runs
        for k, part in enumerate(parts):
            results[k::workers] = part
    else:
        results = [_propagate_once(nbrs, seed_idx, s, max_sweeps) for s in children]

    freqs: dict[str, dict[str | None, int]] = {}
    final: dict[str, str | None] = {}
    for i, node in enumerate(g.nodes):
        cnt = Counter(r[i] for r in results)
        freqs[node] = dict(sorted(cnt.items(), key=lambda kv: (kv[0] is None, kv[0] or "")))
        real = [(c, lab) for lab, c in cnt.items() if lab is not None]
        if real:
            best = max(c for c, _ in real)
            final[node] = min(lab for c, lab in real if c == best)
        else:
            final[node] = None
    return NodeLabeling(final, freqs, frozenset(seeds), runs)


def write_labeling(lab: NodeLabeling, path) -> None:
    from .graphs import _csv
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("node,final_label,label,count\n")
        for node, counts in lab.frequencies.items():
            fin = lab.labels[node] or ""
            for label, c in counts.items():
                fh.write(f"{_csv(node)},{_csv(fin)},{_csv(label or '')},{c}\n")


def read_seeds(path) -> dict[str, str]:
    import csv
    with open(path, encoding="utf-8", newline="") as fh:
        return {row["node"]: row["label"] for row in csv.DictReader(fh)}


def read_labeling(path) -> dict[str, str]:
    """Final labels from a ``write_labeling`` CSV; unlabeled nodes are omitted."""
    import csv
    with open(path, encoding="utf-8", newline="") as fh:
        return {row["node"]: row["final_label"] for row in csv.DictReader(fh)
                if row["final_label"]}
