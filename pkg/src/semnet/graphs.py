"""Graph containers shared by the null models, projections and community code.

Node identifiers are opaque strings mapped once to dense integer indices;
every numeric kernel works on the indices.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Hashable, Iterable, Mapping, Sequence

import numpy as np
from scipy import sparse

TOP = "top"
BOTTOM = "bottom"


def _check_layer(layer: str) -> str:
    if layer not in (TOP, BOTTOM):
        raise ValueError(f"layer must be {TOP!r} or {BOTTOM!r}, got {layer!r}")
    return layer


def _index(nodes: Sequence[str]) -> dict[str, int]:
    idx = {n: i for i, n in enumerate(nodes)}
    if len(idx) != len(nodes):
        raise ValueError("duplicate node identifiers")
    return idx


@dataclass(frozen=True, eq=False)
class BipartiteGraph:
    """Binary bipartite graph over a top and a bottom layer.

    ``edges`` is an (E, 2) integer array of (top index, bottom index) pairs,
    sorted and free of duplicates.
    """

    top_nodes: tuple[str, ...]
    bottom_nodes: tuple[str, ...]
    edges: np.ndarray
    top_degrees: np.ndarray = field(init=False, repr=False)
    bottom_degrees: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        top = tuple(self.top_nodes)
        bottom = tuple(self.bottom_nodes)
        _index(top)
        _index(bottom)
        e = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        if len(e):
            if e.min() < 0 or e[:, 0].max() >= len(top) or e[:, 1].max() >= len(bottom):
                raise ValueError("edge index out of range")
            e = np.unique(e, axis=0)
        e.setflags(write=False)
        kt = np.bincount(e[:, 0], minlength=len(top)).astype(np.int64)
        kb = np.bincount(e[:, 1], minlength=len(bottom)).astype(np.int64)
        kt.setflags(write=False)
        kb.setflags(write=False)
        object.__setattr__(self, "top_nodes", top)
        object.__setattr__(self, "bottom_nodes", bottom)
        object.__setattr__(self, "edges", e)
        object.__setattr__(self, "top_degrees", kt)
        object.__setattr__(self, "bottom_degrees", kb)

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[str, str]],
                   top_nodes: Sequence[str] | None = None,
                   bottom_nodes: Sequence[str] | None = None) -> "BipartiteGraph":
        """Build from (top id, bottom id) pairs; repeated pairs collapse.

        Layers default to the order of first appearance; explicit node lists
        may add isolated nodes.
        """
        top = list(top_nodes) if top_nodes is not None else []
        bottom = list(bottom_nodes) if bottom_nodes is not None else []
        ti, bi = _index(top), _index(bottom)
        rows = []
        for t, b in pairs:
            if t not in ti:
                if top_nodes is not None:
                    raise KeyError(f"unknown top node {t!r}")
                ti[t] = len(top)
                top.append(t)
            if b not in bi:
                if bottom_nodes is not None:
                    raise KeyError(f"unknown bottom node {b!r}")
                bi[b] = len(bottom)
                bottom.append(b)
            rows.append((ti[t], bi[b]))
        return cls(tuple(top), tuple(bottom), np.array(rows, dtype=np.int64).reshape(-1, 2))

    @classmethod
    def from_biadjacency(cls, m, top_nodes=None, bottom_nodes=None) -> "BipartiteGraph":
        m = np.asarray(m)
        n_top, n_bot = m.shape
        top = tuple(top_nodes) if top_nodes is not None else tuple(f"t{i}" for i in range(n_top))
        bottom = tuple(bottom_nodes) if bottom_nodes is not None else tuple(f"b{a}" for a in range(n_bot))
        return cls(top, bottom, np.argwhere(m != 0))

    @property
    def n_top(self) -> int:
        return len(self.top_nodes)

    @property
    def n_bottom(self) -> int:
        return len(self.bottom_nodes)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def layer_nodes(self, layer: str) -> tuple[str, ...]:
        return self.top_nodes if _check_layer(layer) == TOP else self.bottom_nodes

    def biadjacency(self) -> sparse.csr_matrix:
        data = np.ones(len(self.edges), dtype=np.int64)
        return sparse.csr_matrix((data, (self.edges[:, 0], self.edges[:, 1])),
                                 shape=(self.n_top, self.n_bottom))

    def dense(self) -> np.ndarray:
        m = np.zeros((self.n_top, self.n_bottom), dtype=np.int8)
        m[self.edges[:, 0], self.edges[:, 1]] = 1
        return m

    def transpose(self) -> "BipartiteGraph":
        """Swap the two layers."""
        return BipartiteGraph(self.bottom_nodes, self.top_nodes, self.edges[:, ::-1])

    def neighbors(self, layer: str, i: int) -> np.ndarray:
        col = 0 if _check_layer(layer) == TOP else 1
        return self.edges[self.edges[:, col] == i, 1 - col]

    def edge_set(self) -> set[tuple[str, str]]:
        return {(self.top_nodes[i], self.bottom_nodes[a]) for i, a in self.edges}


def degree_sequence(g: BipartiteGraph, layer: str) -> list[int]:
    """Degrees of one layer in node order."""
    d = g.top_degrees if _check_layer(layer) == TOP else g.bottom_degrees
    return [int(x) for x in d]


@dataclass(frozen=True, eq=False)
class UndirectedGraph:
    """Simple undirected graph, optionally weighted.

    ``edges`` holds (i, j) index pairs with i <= j. Self-loops are rejected
    unless ``allow_self_loops`` is set.
    """

    nodes: tuple[str, ...]
    edges: np.ndarray
    weights: np.ndarray | None = None
    allow_self_loops: bool = False

    def __post_init__(self):
        nodes = tuple(self.nodes)
        _index(nodes)
        e = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        w = None if self.weights is None else np.asarray(self.weights, dtype=float).ravel()
        if w is not None and len(w) != len(e):
            raise ValueError("weights must align with edges")
        if len(e):
            if e.min() < 0 or e.max() >= len(nodes):
                raise ValueError("edge index out of range")
            if not self.allow_self_loops and np.any(e[:, 0] == e[:, 1]):
                raise ValueError("self-loops are not allowed")
            e = np.sort(e, axis=1)
            e, inv = np.unique(e, axis=0, return_inverse=True)
            if w is not None:
                if np.any(w < 0):
                    raise ValueError("edge weights must be non-negative")
                w = np.bincount(inv.ravel(), weights=w, minlength=len(e))
        elif w is not None:
            w = w[:0]
        e.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "edges", e)
        object.__setattr__(self, "weights", w)

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple], nodes: Sequence[str] | None = None,
                   weighted: bool = False) -> "UndirectedGraph":
        """Build from (a, b) or (a, b, w) tuples. Weights of repeated pairs add up."""
        order = list(nodes) if nodes is not None else []
        idx = _index(order)
        rows, ws = [], []
        for p in pairs:
            a, b = p[0], p[1]
            for x in (a, b):
                if x not in idx:
                    if nodes is not None:
                        raise KeyError(f"unknown node {x!r}")
                    idx[x] = len(order)
                    order.append(x)
            rows.append((idx[a], idx[b]))
            ws.append(float(p[2]) if len(p) > 2 else 1.0)
        return cls(tuple(order), np.array(rows, dtype=np.int64).reshape(-1, 2),
                   np.array(ws) if weighted else None)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def edge_weights(self) -> np.ndarray:
        return np.ones(len(self.edges)) if self.weights is None else self.weights

    @property
    def total_weight(self) -> float:
        """m: number of edges, or the weight sum for weighted graphs."""
        return float(self.edge_weights.sum())

    def index(self) -> dict[str, int]:
        return {n: i for i, n in enumerate(self.nodes)}

    def degrees(self) -> np.ndarray:
        """Unweighted degrees (a self-loop counts twice)."""
        return np.bincount(self.edges.ravel(), minlength=self.n_nodes).astype(np.int64)

    def strengths(self) -> np.ndarray:
        w = self.edge_weights
        return (np.bincount(self.edges[:, 0], weights=w, minlength=self.n_nodes)
                + np.bincount(self.edges[:, 1], weights=w, minlength=self.n_nodes))

    def adjacency(self, weighted: bool = True) -> sparse.csr_matrix:
        w = self.edge_weights if weighted else np.ones(len(self.edges))
        i, j = self.edges[:, 0], self.edges[:, 1]
        off = i != j
        rows = np.concatenate([i, j[off]])
        cols = np.concatenate([j, i[off]])
        # a self-loop contributes A_ii = 2w so that degree sums stay 2m
        data = np.concatenate([np.where(off, w, 2 * w), w[off]])
        return sparse.csr_matrix((data, (rows, cols)), shape=(self.n_nodes, self.n_nodes))

    def neighbor_lists(self) -> list[dict[int, float]]:
        nbrs: list[dict[int, float]] = [dict() for _ in range(self.n_nodes)]
        for (i, j), w in zip(self.edges.tolist(), self.edge_weights.tolist()):
            nbrs[i][j] = nbrs[i].get(j, 0.0) + w
            if i != j:
                nbrs[j][i] = nbrs[j].get(i, 0.0) + w
        return nbrs

    def edge_set(self) -> set[frozenset]:
        return {frozenset((self.nodes[i], self.nodes[j])) for i, j in self.edges}


def induced_subgraph(g: UndirectedGraph, nodes: Iterable[str]) -> UndirectedGraph:
    """Subgraph on ``nodes`` keeping exactly the edges with both ends inside."""
    idx = g.index()
    keep = []
    for n in nodes:
        if n not in idx:
            raise KeyError(f"unknown node {n!r}")
        keep.append(idx[n])
    keep_set = sorted(set(keep))
    remap = np.full(g.n_nodes, -1, dtype=np.int64)
    remap[keep_set] = np.arange(len(keep_set))
    e = remap[g.edges] if len(g.edges) else g.edges.reshape(-1, 2)
    mask = (e >= 0).all(axis=1) if len(e) else np.zeros(0, dtype=bool)
    w = None if g.weights is None else g.weights[mask]
    return UndirectedGraph(tuple(g.nodes[i] for i in keep_set), e[mask], w, g.allow_self_loops)


@dataclass(frozen=True)
class Partition:
    """Community assignment with dense ids 0..K-1, numbered by first appearance."""

    assignment: Mapping[str, int]

    def __post_init__(self):
        relabel: dict[Hashable, int] = {}
        dense = {}
        for node, c in self.assignment.items():
            if c not in relabel:
                relabel[c] = len(relabel)
            dense[node] = relabel[c]
        object.__setattr__(self, "assignment", dense)

    @classmethod
    def from_labels(cls, nodes: Sequence[str], labels: Sequence) -> "Partition":
        return cls(dict(zip(nodes, labels)))

    @property
    def community_count(self) -> int:
        return len(set(self.assignment.values()))

    def communities(self) -> list[list[str]]:
        out: list[list[str]] = [[] for _ in range(self.community_count)]
        for n, c in self.assignment.items():
            out[c].append(n)
        return out

    def labels_for(self, nodes: Sequence[str]) -> np.ndarray:
        return np.array([self.assignment[n] for n in nodes], dtype=np.int64)

    def __getitem__(self, node: str) -> int:
        return self.assignment[node]

    def __len__(self) -> int:
        return len(self.assignment)


@dataclass
class NodeLabeling:
    """Result of repeated seeded label propagation.

    ``frequencies[node]`` maps label -> number of runs in which the node
    ended with that label; ``None`` counts the runs that left it unlabeled.
    """

    labels: dict[str, str | None]
    frequencies: dict[str, dict[str | None, int]]
    seed_flags: frozenset[str]
    runs: int

    def coverage(self) -> float:
        if not self.labels:
            return 0.0
        return sum(v is not None for v in self.labels.values()) / len(self.labels)


# --------------------------------------------------------------------------
# edge-list text formats


def _data_lines(path):
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.rstrip("\n").rstrip("\r")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            yield lineno, line.split("\t")


def write_bipartite(g: BipartiteGraph, path) -> None:
    """``top<TAB>bottom`` per edge; isolated nodes as ``top<TAB>`` or ``<TAB>bottom``."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("# top\tbottom\n")
        for i, a in g.edges.tolist():
            fh.write(f"{g.top_nodes[i]}\t{g.bottom_nodes[a]}\n")
        for i in np.flatnonzero(g.top_degrees == 0):
            fh.write(f"{g.top_nodes[i]}\t\n")
        for a in np.flatnonzero(g.bottom_degrees == 0):
            fh.write(f"\t{g.bottom_nodes[a]}\n")


def read_bipartite(path) -> BipartiteGraph:
    top, bottom, pairs = [], [], []
    ti, bi = {}, {}
    for lineno, parts in _data_lines(path):
        if len(parts) != 2:
            raise ValueError(f"{path}:{lineno}: expected 2 tab-separated fields")
        t, b = parts
        if t and t not in ti:
            ti[t] = len(top)
            top.append(t)
        if b and b not in bi:
            bi[b] = len(bottom)
            bottom.append(b)
        if t and b:
            pairs.append((ti[t], bi[b]))
    return BipartiteGraph(tuple(top), tuple(bottom), np.array(pairs, dtype=np.int64).reshape(-1, 2))


def write_monopartite(g: UndirectedGraph, path) -> None:
    """``a<TAB>b[<TAB>w]`` per edge; isolated nodes as a single field."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("# a\tb" + ("\tweight" if g.weights is not None else "") + "\n")
        for k, (i, j) in enumerate(g.edges.tolist()):
            line = f"{g.nodes[i]}\t{g.nodes[j]}"
            if g.weights is not None:
                line += f"\t{float(g.weights[k])!r}"
            fh.write(line + "\n")
        deg = g.degrees()
        for i in np.flatnonzero(deg == 0):
            fh.write(f"{g.nodes[i]}\n")


def read_monopartite(path, allow_self_loops: bool = False) -> UndirectedGraph:
    nodes, idx, rows, ws = [], {}, [], []
    weighted = False
    for lineno, parts in _data_lines(path):
        if len(parts) not in (1, 2, 3):
            raise ValueError(f"{path}:{lineno}: expected 1-3 tab-separated fields")
        for x in parts[:2]:
            if x not in idx:
                idx[x] = len(nodes)
                nodes.append(x)
        if len(parts) >= 2:
            rows.append((idx[parts[0]], idx[parts[1]]))
            if len(parts) == 3:
                weighted = True
                ws.append(float(parts[2]))
            else:
                ws.append(1.0)
    return UndirectedGraph(tuple(nodes), np.array(rows, dtype=np.int64).reshape(-1, 2),
                           np.array(ws) if weighted else None, allow_self_loops)


def write_partition(p: Partition, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("node,community\n")
        for n, c in p.assignment.items():
            fh.write(f"{_csv(n)},{c}\n")


def read_partition(path) -> Partition:
    import csv
    with open(path, encoding="utf-8", newline="") as fh:
        return Partition({row["node"]: int(row["community"]) for row in csv.DictReader(fh)})


def _csv(s: str) -> str:
    if any(ch in s for ch in ',"\n'):
        return '"' + s.replace('"', '""') + '"'
    return s


def ensure_dir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p
