"""Statistically validated monopartite projection of a bipartite graph.

For two nodes i, j of the projected layer the co-occurrence count
V_ij = sum_a m_ia m_ja is, under the BiCM, a sum of independent Bernoulli
trials with success probabilities p_ia p_ja: a Poisson-Binomial variable.
Each observed pair gets the upper-tail p-value P(V_ij >= V*_ij); the pairs
surviving a Benjamini-Hochberg FDR correction become edges.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Hashable, Iterable, Sequence

import numpy as np
from scipy.special import comb, ndtr

from .graphs import BOTTOM, TOP, BipartiteGraph, UndirectedGraph, _check_layer, _csv
from .maxent import BicmFit, solve_bicm

UNDERFLOW = 1e-300
_CHUNK = 512


# --------------------------------------------------------------------------
# co-occurrences


@dataclass
class VMotifCounts:
    """Observed co-occurrences V*_ij > 0 for pairs i < j of one layer."""

    layer: str
    nodes: tuple[str, ...]
    i: np.ndarray
    j: np.ndarray
    counts: np.ndarray

    def __len__(self) -> int:
        return len(self.counts)

    def as_dict(self) -> dict[tuple[str, str], int]:
        return {(self.nodes[a], self.nodes[b]): int(v)
                for a, b, v in zip(self.i.tolist(), self.j.tolist(), self.counts.tolist())}

    def get(self, a: str, b: str) -> int:
        d = self.as_dict()
        return d.get((a, b), d.get((b, a), 0))


def count_vmotifs(g: BipartiteGraph, layer: str = TOP) -> VMotifCounts:
    """Count common neighbours for every pair of ``layer`` nodes that has any.

    Works through the sparse product M M^T, i.e. only over shared neighbours.
    """
    m = g.biadjacency()
    if _check_layer(layer) == BOTTOM:
        m = m.T.tocsr()
    co = (m @ m.T).tocoo()
    keep = co.row < co.col
    i, j, v = co.row[keep], co.col[keep], co.data[keep]
    order = np.lexsort((j, i))
    return VMotifCounts(layer, g.layer_nodes(layer), i[order].astype(np.int64),
                        j[order].astype(np.int64), v[order].astype(np.int64))


# --------------------------------------------------------------------------
# Poisson-Binomial


def poisson_binomial_pmf(probabilities: Sequence[float]) -> np.ndarray:
    """Exact PMF of a sum of independent Bernoulli trials (length N + 1)."""
    q = np.asarray(probabilities, dtype=float)
    pmf = np.zeros(len(q) + 1)
    pmf[0] = 1.0
    for t, p in enumerate(q, start=1):
        head = pmf[:t + 1].copy()
        pmf[:t + 1] = head * (1.0 - p)
        pmf[1:t + 1] += head[:t] * p
    return pmf


def _truncated_tails(q: np.ndarray, top: int) -> np.ndarray:
    """Row-wise P(V >= n) for n = 0..top.

    ``q`` has one row of trial probabilities per distribution. The DP keeps
    P(V = k) for k < top plus a bucket holding P(V >= top); all updates add
    non-negative terms, so small tails keep full relative precision. Large
    tails are reported as 1 - P(V < n); the entries below ``top`` and their
    running sum do not depend on ``top``, which keeps separate calls exactly
    monotone in n.
    """
    q = np.atleast_2d(np.asarray(q, dtype=float))
    rows = q.shape[0]
    s = np.zeros((rows, top + 1))
    s[:, 0] = 1.0
    if top == 0:
        return np.ones((rows, 1))
    for t in range(q.shape[1]):
        p = q[:, t:t + 1]
        moved = s[:, :-1] * p
        bucket = s[:, -1].copy()
        s *= 1.0 - p
        s[:, 1:] += moved
        s[:, -1] = bucket + moved[:, -1]
    upper = np.cumsum(s[:, ::-1], axis=1)[:, ::-1]
    cdf = np.zeros_like(upper)
    cdf[:, 1:] = np.cumsum(s[:, :-1], axis=1)
    # 1 - cdf >= 0.5 exactly when cdf <= 0.5, so capping the other branch keeps order
    return np.where(cdf <= 0.5, 1.0 - cdf, np.minimum(upper, 0.5))


def poisson_binomial_tail(probabilities: Sequence[float], n: int) -> tuple[float, bool]:
    """P(V >= n) and an underflow flag (set when the tail is below 1e-300)."""
    if n < 0:
        raise ValueError("n must be non-negative")
    if n == 0:
        return 1.0, False
    q = np.asarray(probabilities, dtype=float)
    if n > len(q):
        return 0.0, False
    value = float(_truncated_tails(q[None, :], n)[0, n])
    value = min(value, 1.0)
    if value < UNDERFLOW:
        return 0.0, value > 0.0 or _possible(q, n)
    return value, False


def _possible(q, n):
    return int(np.count_nonzero(q > 0)) >= n


def poisson_binomial_survival(probabilities: Sequence[float], n: int) -> float:
    """P(V >= n) for V a sum of independent Bernoulli(probabilities)."""
    return poisson_binomial_tail(probabilities, n)[0]


def normal_survival(probabilities: Sequence[float], n: int) -> float:
    """Refined normal approximation to P(V >= n) (skewness-corrected)."""
    if n <= 0:
        return 1.0
    q = np.asarray(probabilities, dtype=float)
    mu = q.sum()
    var = (q * (1 - q)).sum()
    if var == 0:
        return 1.0 if mu >= n else 0.0
    sd = math.sqrt(var)
    gamma = (q * (1 - q) * (1 - 2 * q)).sum() / sd ** 3
    x = (n - 1 + 0.5 - mu) / sd
    phi = math.exp(-0.5 * x * x) / math.sqrt(2 * math.pi)
    cdf = float(ndtr(x)) + gamma * (1 - x * x) * phi / 6.0
    return min(max(1.0 - cdf, 0.0), 1.0)


def _trial_probabilities(fit: BicmFit, i: int, j: int, layer: str) -> np.ndarray:
    if _check_layer(layer) == TOP:
        p = fit.probabilities(rows=np.array([i, j]))
    else:
        p = fit.probabilities().T[[i, j]]
    return p[0] * p[1]


def pair_pvalue(fit: BicmFit, i: int, j: int, observed: int, layer: str = TOP) -> float:
    """Upper-tail p-value of ``observed`` co-occurrences between i and j."""
    n_opp = fit.n_bottom if _check_layer(layer) == TOP else fit.n_top
    if observed > n_opp:
        raise ValueError(f"observed count {observed} exceeds the {n_opp} opposite-layer nodes")
    if i == j:
        raise ValueError("pair must consist of two distinct nodes")
    if observed == 0:
        return 1.0
    a, b = (i, j) if i < j else (j, i)
    return poisson_binomial_survival(_trial_probabilities(fit, a, b, layer), observed)


# --------------------------------------------------------------------------
# FDR


def fdr_cutoff(pvalues: Sequence[float], alpha: float,
               n_hypotheses: int | None = None) -> tuple[int, float | None]:
    """Benjamini-Hochberg step-up: largest rank r with p_(r) <= r alpha / m.

    Returns (r, p_(r)); (0, None) when nothing is rejected. ``n_hypotheses``
    (m) defaults to the number of p-values and may exceed it when untested
    hypotheses are counted.
    """
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    p = np.sort(np.asarray(pvalues, dtype=float))
    m = len(p) if n_hypotheses is None else int(n_hypotheses)
    if m < len(p):
        raise ValueError("n_hypotheses smaller than the number of p-values")
    if len(p) == 0:
        return 0, None
    ranks = np.arange(1, len(p) + 1)
    ok = np.flatnonzero(p <= ranks * alpha / m)
    if len(ok) == 0:
        return 0, None
    r = int(ok[-1]) + 1
    return r, float(p[r - 1])


def fdr_select(pvalues: Iterable[tuple[Hashable, float]], alpha: float,
               n_hypotheses: int | None = None) -> set:
    """Pairs validated by the Benjamini-Hochberg procedure at level ``alpha``."""
    items = list(pvalues)
    if not items:
        raise ValueError("empty p-value list")
    _, cut = fdr_cutoff([p for _, p in items], alpha, n_hypotheses)
    if cut is None:
        return set()
    return {k for k, p in items if p <= cut}


# --------------------------------------------------------------------------
# projection


@dataclass
class PairTestResult:
    pair: tuple[str, str]
    observed: int
    p_value: float
    validated: bool
    underflow: bool = False


@dataclass
class ValidatedProjection:
    graph: UndirectedGraph
    results: list[PairTestResult]
    alpha: float
    n_hypotheses: int
    cutoff_rank: int
    cutoff_pvalue: float | None
    layer: str = TOP
    universe: str = "all-pairs"
    method: str = "exact"

    @property
    def validated(self) -> list[PairTestResult]:
        return [r for r in self.results if r.validated]

    def summary(self) -> dict:
        return {
            "layer": self.layer,
            "alpha": self.alpha,
            "fdr_universe": self.universe,
            "pvalue_method": self.method,
            "m_hyp": self.n_hypotheses,
            "tested_pairs": len(self.results),
            "cutoff_rank": self.cutoff_rank,
            "cutoff_pvalue": self.cutoff_pvalue,
            "validated_edges": len(self.validated),
            "underflow_pairs": sum(r.underflow for r in self.results),
            "nodes": self.graph.n_nodes,
        }

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("node_a,node_b,v_count,p_value,validated\n")
            for r in self.results:
                fh.write(f"{_csv(r.pair[0])},{_csv(r.pair[1])},{r.observed},{r.p_value!r},"
                         f"{int(r.validated)}\n")

    def write_summary(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.summary(), fh, indent=1, sort_keys=True)
            fh.write("\n")


def transpose_fit(fit: BicmFit) -> BicmFit:
    """The same fit seen with the layers swapped."""
    return BicmFit(fit.bottom_degrees, fit.top_degrees, fit.theta_classes, fit.eta_classes,
                   fit.bottom_peel, fit.top_peel, fit.residual, fit.iterations, fit.tolerance,
                   fit.trace, fit.bottom_nodes, fit.top_nodes)


def vmotif_pvalues(fit: BicmFit, counts: VMotifCounts, method: str = "exact"):
    """p-values (and underflow flags) for every observed pair in ``counts``.

    Pairs are grouped by the degree classes of their endpoints, since nodes
    with equal degree share their link probabilities.
    """
    f = fit if counts.layer == TOP else transpose_fit(fit)
    n = len(counts)
    if n == 0:
        return np.zeros(0), np.zeros(0, dtype=bool)
    ci, cj = f.top_class[counts.i], f.top_class[counts.j]
    lo, hi = np.minimum(ci, cj), np.maximum(ci, cj)
    keys, inv = np.unique(np.stack([lo, hi], axis=1), axis=0, return_inverse=True)
    inv = inv.ravel()
    cp = f.class_probabilities()
    # trials grouped by opposite-layer class, expanded by multiplicity
    q = cp[keys[:, 0]] * cp[keys[:, 1]]
    q = np.repeat(q, f.bottom_class_counts, axis=1)
    if method == "exact":
        top = int(counts.counts.max())
        tails = np.vstack([_truncated_tails(q[s:s + _CHUNK], top)
                           for s in range(0, len(q), _CHUNK)])
        pv = tails[inv, counts.counts]
    elif method == "normal":
        cache = {}
        pv = np.empty(n)
        for k in range(n):
            key = (inv[k], counts.counts[k])
            if key not in cache:
                cache[key] = normal_survival(q[inv[k]], int(counts.counts[k]))
            pv[k] = cache[key]
    else:
        raise ValueError(f"unknown p-value method {method!r}")
    pv = np.minimum(pv, 1.0)
    under = pv < UNDERFLOW
    pv = np.where(under, 0.0, pv)
    return pv, under


def project_validated(g: BipartiteGraph, layer: str = TOP, alpha: float = 0.05,
                      fit: BicmFit | None = None, universe: str = "all-pairs",
                      method: str = "exact", tolerance: float = 1e-8) -> ValidatedProjection:
    """Validated projection of ``g`` onto ``layer``.

    ``universe`` sets the number of hypotheses for the FDR correction:
    ``"all-pairs"`` counts every pair of the layer, ``"observed"`` only the
    pairs with at least one co-occurrence.
    """
    if universe not in ("all-pairs", "observed"):
        raise ValueError(f"unknown FDR universe {universe!r}")
    nodes = g.layer_nodes(layer)
    counts = count_vmotifs(g, layer)
    empty = UndirectedGraph(nodes, np.zeros((0, 2), dtype=np.int64))
    if len(counts) == 0:
        return ValidatedProjection(empty, [], alpha, 0 if universe == "observed" else
                                   int(comb(len(nodes), 2, exact=True)), 0, None, layer,
                                   universe, method)
    if fit is None:
        fit = solve_bicm(g, tolerance=tolerance)
    pv, under = vmotif_pvalues(fit, counts, method)
    m_hyp = len(counts) if universe == "observed" else int(comb(len(nodes), 2, exact=True))
    rank, cut = fdr_cutoff(pv, alpha, m_hyp)
    ok = pv <= cut if cut is not None else np.zeros(len(pv), dtype=bool)
    results = [PairTestResult((nodes[a], nodes[b]), int(v), float(p), bool(o), bool(u))
               for a, b, v, p, o, u in zip(counts.i.tolist(), counts.j.tolist(),
                                           counts.counts.tolist(), pv.tolist(), ok.tolist(),
                                           under.tolist())]
    edges = np.stack([counts.i[ok], counts.j[ok]], axis=1)
    graph = UndirectedGraph(nodes, edges)
    return ValidatedProjection(graph, results, alpha, m_hyp, rank, cut, layer, universe, method)
