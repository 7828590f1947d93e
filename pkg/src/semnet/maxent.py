"""Maximum-entropy configuration models: BiCM (bipartite) and UCM (monopartite).

Both models are solved by maximising the likelihood of the observed graph,
which is equivalent to matching every expected degree to its observed value.
Nodes sharing a degree get identical multipliers, so the unknowns are the
distinct degrees (``degree classes``) of each layer. Nodes whose degree is 0
or saturates the opposite layer have divergent multipliers; they are peeled
off beforehand and their link probabilities are pinned to 0 or 1.

Link probabilities read

    BiCM:  p_ia = exp(-eta_i - theta_a) / (1 + exp(-eta_i - theta_a))
    UCM:   P_ij = x_i x_j / (1 + x_i x_j),   x_i = exp(-theta_i)
"""
from __future__ import annotations

import json
import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .graphs import BipartiteGraph, UndirectedGraph

log = logging.getLogger(__name__)

DEFAULT_TOLERANCE = 1e-8
DEFAULT_MAX_ITERATIONS = 10_000


class ConvergenceError(RuntimeError):
    """Raised when a solver stops before reaching the requested tolerance."""

    def __init__(self, message: str, residual: float, iterations: int):
        super().__init__(f"{message} (residual {residual:.3e} after {iterations} iterations)")
        self.residual = residual
        self.iterations = iterations


class ProbabilityClampWarning(UserWarning):
    pass


def _softplus(z):
    return np.logaddexp(0.0, z)


def _degree_classes(degrees):
    values, inverse, counts = np.unique(np.asarray(degrees, dtype=np.int64),
                                        return_inverse=True, return_counts=True)
    return values, inverse.ravel(), counts


@dataclass
class _Peel:
    """Peeling state for one layer: round at which a class was pinned and to what."""

    rounds: np.ndarray
    values: np.ndarray

    @classmethod
    def empty(cls, n):
        return cls(np.full(n, np.inf), np.full(n, np.nan))

    @property
    def active(self):
        return np.isinf(self.rounds)


def _pinned_pairs(r1, v1, r2, v2):
    """Pinned probability for pairs of classes; NaN where both are free."""
    r1 = r1[:, None]
    r2 = r2[None, :]
    out = np.where(r1 <= r2, v1[:, None], v2[None, :])
    return np.where(np.isinf(r1) & np.isinf(r2), np.nan, out)


# --------------------------------------------------------------------------
# BiCM


@dataclass
class BicmFit:
    """Fitted BiCM.

    Multipliers are stored per degree class; ``eta`` and ``theta`` expand them
    to one value per node (``+inf`` / ``-inf`` mark nodes pinned to 0 / 1).
    """

    top_degrees: np.ndarray
    bottom_degrees: np.ndarray
    eta_classes: np.ndarray
    theta_classes: np.ndarray
    top_peel: _Peel
    bottom_peel: _Peel
    residual: float
    iterations: int
    tolerance: float
    trace: list[float] = field(default_factory=list, repr=False)
    top_nodes: tuple[str, ...] | None = None
    bottom_nodes: tuple[str, ...] | None = None

    def __post_init__(self):
        self.top_degrees = np.asarray(self.top_degrees, dtype=np.int64)
        self.bottom_degrees = np.asarray(self.bottom_degrees, dtype=np.int64)
        self.top_class_degrees, self.top_class, self.top_class_counts = _degree_classes(self.top_degrees)
        self.bottom_class_degrees, self.bottom_class, self.bottom_class_counts = _degree_classes(
            self.bottom_degrees)
        self._cls_p = None

    @property
    def n_top(self) -> int:
        return len(self.top_degrees)

    @property
    def n_bottom(self) -> int:
        return len(self.bottom_degrees)

    @property
    def eta(self) -> np.ndarray:
        return _expand(self.eta_classes, self.top_peel, self.top_class)

    @property
    def theta(self) -> np.ndarray:
        return _expand(self.theta_classes, self.bottom_peel, self.bottom_class)

    @property
    def degree_classes(self) -> tuple[np.ndarray, np.ndarray]:
        """Class index of every top node and of every bottom node."""
        return self.top_class, self.bottom_class

    def class_probabilities(self) -> np.ndarray:
        """Link probability between every (top class, bottom class)."""
        if self._cls_p is None:
            p = _pinned_pairs(self.top_peel.rounds, self.top_peel.values,
                              self.bottom_peel.rounds, self.bottom_peel.values)
            free = np.isnan(p)
            z = self.eta_classes[:, None] + self.theta_classes[None, :]
            p[free] = expit(-z[free])
            self._cls_p = p
        return self._cls_p

    def probability(self, i: int, a: int) -> float:
        return float(self.class_probabilities()[self.top_class[i], self.bottom_class[a]])

    def probabilities(self, rows=None) -> np.ndarray:
        """Dense matrix of p_ia, optionally restricted to some top rows."""
        tc = self.top_class if rows is None else self.top_class[rows]
        return self.class_probabilities()[np.ix_(tc, self.bottom_class)]

    def expected_degrees(self) -> tuple[np.ndarray, np.ndarray]:
        p = self.class_probabilities()
        kt = p @ self.bottom_class_counts
        kb = self.top_class_counts @ p
        return kt[self.top_class], kb[self.bottom_class]

    def max_residual(self) -> float:
        kt, kb = self.expected_degrees()
        r = 0.0
        if len(kt):
            r = max(r, float(np.max(np.abs(kt - self.top_degrees))))
        if len(kb):
            r = max(r, float(np.max(np.abs(kb - self.bottom_degrees))))
        return r

    def to_json(self) -> dict:
        return {
            "model": "BiCM",
            "n_top": self.n_top,
            "n_bottom": self.n_bottom,
            "top_nodes": list(self.top_nodes) if self.top_nodes is not None else None,
            "bottom_nodes": list(self.bottom_nodes) if self.bottom_nodes is not None else None,
            "top_degrees": self.top_degrees.tolist(),
            "bottom_degrees": self.bottom_degrees.tolist(),
            "top_classes": _classes_json(self.top_class_degrees, self.eta_classes, self.top_peel),
            "bottom_classes": _classes_json(self.bottom_class_degrees, self.theta_classes,
                                            self.bottom_peel),
            "residual": self.residual,
            "tolerance": self.tolerance,
            "iterations": self.iterations,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "BicmFit":
        if obj.get("model") != "BiCM":
            raise ValueError("not a BiCM fit")
        kt = np.asarray(obj["top_degrees"], dtype=np.int64)
        kb = np.asarray(obj["bottom_degrees"], dtype=np.int64)
        eta, tp = _classes_from_json(obj["top_classes"], kt)
        theta, bp = _classes_from_json(obj["bottom_classes"], kb)
        return cls(kt, kb, eta, theta, tp, bp, float(obj["residual"]), int(obj["iterations"]),
                   float(obj["tolerance"]),
                   top_nodes=tuple(obj["top_nodes"]) if obj.get("top_nodes") else None,
                   bottom_nodes=tuple(obj["bottom_nodes"]) if obj.get("bottom_nodes") else None)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, indent=1, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "BicmFit":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


def _expand(cls_values, peel, node_class):
    v = cls_values.copy()
    pinned = ~peel.active
    v[pinned] = np.where(peel.values[pinned] > 0.5, -np.inf, np.inf)
    return v[node_class]


def _classes_json(degrees, mult, peel):
    out = []
    for d, m, r, v in zip(degrees.tolist(), mult.tolist(), peel.rounds.tolist(), peel.values.tolist()):
        entry = {"degree": d}
        if math.isinf(r):
            entry["multiplier"] = m
        else:
            entry["pinned"] = int(v)
            entry["round"] = int(r)
        out.append(entry)
    return out


def _classes_from_json(entries, degrees):
    values = np.unique(degrees)
    by_degree = {e["degree"]: e for e in entries}
    mult = np.zeros(len(values))
    peel = _Peel.empty(len(values))
    for k, d in enumerate(values.tolist()):
        e = by_degree[d]
        if "pinned" in e:
            peel.rounds[k] = e["round"]
            peel.values[k] = e["pinned"]
        else:
            mult[k] = e["multiplier"]
    return mult, peel


def _peel_bipartite(kd, kc, hd, hc):
    """Iteratively pin empty and saturated classes on both layers.

    Returns the peeling state and the residual degrees of the free classes.
    """
    tp, bp = _Peel.empty(len(kd)), _Peel.empty(len(hd))
    kr, hr = kd.astype(float).copy(), hd.astype(float).copy()
    rnd = 0
    while True:
        ta, ba = tp.active, bp.active
        n_top = int(kc[ta].sum())
        n_bot = int(hc[ba].sum())
        zt = ta & (kr == 0)
        st = ta & (kr == n_bot) & (kr > 0)
        zb = ba & (hr == 0)
        sb = ba & (hr == n_top) & (hr > 0)
        if not (zt.any() or st.any() or zb.any() or sb.any()):
            break
        tp.rounds[zt | st] = rnd
        tp.values[zt] = 0.0
        tp.values[st] = 1.0
        bp.rounds[zb | sb] = rnd
        bp.values[zb] = 0.0
        bp.values[sb] = 1.0
        hr[bp.active] -= kc[st].sum()
        kr[tp.active] -= hc[sb].sum()
        if (kr[tp.active] < 0).any() or (hr[bp.active] < 0).any():
            raise ValueError("degree sequences are not graphical")
        rnd += 1
    return tp, bp, kr, hr


def solve_bicm(g: BipartiteGraph, tolerance: float = DEFAULT_TOLERANCE,
               max_iterations: int = DEFAULT_MAX_ITERATIONS, method: str = "newton") -> BicmFit:
    """Fit the BiCM to ``g`` so that expected degrees match observed ones.

    ``method`` is ``"newton"`` (default) or ``"fixed-point"``; both work on the
    reduced degree-class system and never let the log-likelihood decrease.
    Raises ConvergenceError when ``tolerance`` is not reached.
    """
    if g.n_top == 0 or g.n_bottom == 0:
        raise ValueError("both layers must be non-empty")
    kd, t_inv, kc = _degree_classes(g.top_degrees)
    hd, b_inv, hc = _degree_classes(g.bottom_degrees)
    tp, bp, kr, hr = _peel_bipartite(kd, kc, hd, hc)
    eta = np.zeros(len(kd))
    theta = np.zeros(len(hd))
    ta, ba = tp.active, bp.active
    trace: list[float] = []
    iterations = 0
    if ta.any() and ba.any():
        sys_ = _BicmSystem(kr[ta], kc[ta].astype(float), hr[ba], hc[ba].astype(float))
        if method == "newton":
            z, iterations, trace = _newton(sys_, sys_.initial(), tolerance, max_iterations)
        elif method == "fixed-point":
            z, iterations, trace = _fixed_point(sys_, sys_.initial(), tolerance, max_iterations)
        else:
            raise ValueError(f"unknown method {method!r}")
        eta[ta] = z[: ta.sum()]
        theta[ba] = z[ta.sum():]
    elif ta.any() or ba.any():
        raise ValueError("degree sequences are not graphical")
    fit = BicmFit(g.top_degrees.copy(), g.bottom_degrees.copy(), eta, theta, tp, bp,
                  residual=0.0, iterations=iterations, tolerance=tolerance, trace=trace,
                  top_nodes=g.top_nodes, bottom_nodes=g.bottom_nodes)
    fit.residual = fit.max_residual()
    if fit.residual > tolerance:
        raise ConvergenceError("BiCM solver did not converge", fit.residual, iterations)
    return fit


class _BicmSystem:
    """Reduced BiCM problem; minimises the negative log-likelihood F(eta, theta)."""

    def __init__(self, k, c, h, d):
        self.k, self.c, self.h, self.d = k, c, h, d
        self.nt = len(k)

    def initial(self):
        total = float(self.c @ self.k)
        x = self.k / math.sqrt(total)
        y = self.h / math.sqrt(total)
        return np.concatenate([-np.log(x), -np.log(y)])

    def split(self, z):
        return z[: self.nt], z[self.nt:]

    def objective(self, z):
        eta, theta = self.split(z)
        s = _softplus(-(eta[:, None] + theta[None, :]))
        return float(self.c @ (self.k * eta) + self.d @ (self.h * theta) + self.c @ s @ self.d)

    def probs(self, z):
        eta, theta = self.split(z)
        return expit(-(eta[:, None] + theta[None, :]))

    def residuals(self, p):
        return p @ self.d - self.k, self.c @ p - self.h

    def gradient(self, p):
        rk, rh = self.residuals(p)
        return np.concatenate([-self.c * rk, -self.d * rh])

    def hessian(self, p):
        w = p * (1.0 - p)
        n = self.nt + len(self.h)
        hmat = np.zeros((n, n))
        cross = self.c[:, None] * w * self.d[None, :]
        hmat[: self.nt, self.nt:] = cross
        hmat[self.nt:, : self.nt] = cross.T
        hmat[np.arange(self.nt), np.arange(self.nt)] = cross.sum(axis=1)
        idx = np.arange(self.nt, n)
        hmat[idx, idx] = cross.sum(axis=0)
        return hmat

    def max_residual(self, p):
        rk, rh = self.residuals(p)
        return max(np.max(np.abs(rk)), np.max(np.abs(rh)))

    def fixed_point_map(self, z):
        eta, theta = self.split(z)
        x, y = np.exp(-eta), np.exp(-theta)
        denom_x = (self.d[None, :] * y[None, :] / (1.0 + x[:, None] * y[None, :])).sum(axis=1)
        denom_y = (self.c[:, None] * x[:, None] / (1.0 + x[:, None] * y[None, :])).sum(axis=0)
        return np.concatenate([-np.log(self.k / denom_x), -np.log(self.h / denom_y)])


class _UcmSystem:
    """Reduced UCM problem over degree classes with multiplicities ``c``."""

    def __init__(self, k, c):
        self.k, self.c = k, c

    def initial(self):
        total = float(self.c @ self.k)
        return -np.log(self.k / math.sqrt(total))

    def objective(self, z):
        s = _softplus(-(z[:, None] + z[None, :]))
        return float(self.c @ (self.k * z) + 0.5 * (self.c @ s @ self.c - self.c @ np.diag(s)))

    def probs(self, z):
        return expit(-(z[:, None] + z[None, :]))

    def expected(self, p):
        return p @ self.c - np.diag(p)

    def gradient(self, p):
        return self.c * (self.k - self.expected(p))

    def hessian(self, p):
        w = p * (1.0 - p)
        hmat = self.c[:, None] * w * self.c[None, :]
        diag = self.c * (w @ self.c - np.diag(w)) + self.c * (self.c - 1.0) * np.diag(w)
        hmat[np.diag_indices_from(hmat)] = diag
        return hmat

    def max_residual(self, p):
        return float(np.max(np.abs(self.expected(p) - self.k)))

    def fixed_point_map(self, z):
        x = np.exp(-z)
        t = x[None, :] / (1.0 + x[:, None] * x[None, :])
        denom = t @ self.c - np.diag(t)
        return -np.log(self.k / denom)


def _newton(sys_, z, tol, max_iter):
    f = sys_.objective(z)
    trace = [-f]
    for it in range(1, max_iter + 1):
        p = sys_.probs(z)
        if sys_.max_residual(p) <= tol:
            return z, it - 1, trace
        g = sys_.gradient(p)
        h = sys_.hessian(p)
        # the BiCM is invariant under eta + c, theta - c; a tiny ridge fixes the gauge
        ridge = 1e-12 * max(float(np.max(np.diag(h))), 1e-300)
        try:
            step = -np.linalg.solve(h + ridge * np.eye(len(z)), g)
        except np.linalg.LinAlgError:
            step = -g / np.maximum(np.diag(h), 1e-300)
        if not np.all(np.isfinite(step)):
            step = -g / np.maximum(np.diag(h), 1e-300)
        slope = float(g @ step)
        if slope >= 0:
            step = -g
            slope = float(-(g @ g))
        # near the optimum the objective is flat to rounding; allow that much slack
        slack = 1e-12 * max(1.0, abs(f))
        t = 1.0
        while True:
            zn = z + t * step
            fn = sys_.objective(zn)
            if fn <= f + 1e-4 * t * slope + slack:
                break
            t *= 0.5
            if t < 1e-14:
                p = sys_.probs(z)
                raise ConvergenceError("line search failed", float(sys_.max_residual(p)), it)
        z, f = zn, fn
        trace.append(-f)
    p = sys_.probs(z)
    res = float(sys_.max_residual(p))
    if res <= tol:
        return z, max_iter, trace
    raise ConvergenceError("iteration limit reached", res, max_iter)


def _fixed_point(sys_, z, tol, max_iter, damping=0.5):
    """Damped fixed-point iteration in log-multiplier space.

    A step that would lower the likelihood is retried with halved damping.
    """
    f = sys_.objective(z)
    trace = [-f]
    for it in range(1, max_iter + 1):
        p = sys_.probs(z)
        if sys_.max_residual(p) <= tol:
            return z, it - 1, trace
        target = sys_.fixed_point_map(z)
        delta = damping
        slack = 1e-12 * max(1.0, abs(f))   # objective noise floor near the optimum
        while True:
            zn = (1.0 - delta) * z + delta * target
            fn = sys_.objective(zn)
            if fn <= f + slack or delta < 1e-8:
                break
            delta *= 0.5
        if fn > f + slack:
            break
        z, f = zn, fn
        trace.append(-f)
    p = sys_.probs(z)
    res = float(sys_.max_residual(p))
    if res <= tol:
        return z, max_iter, trace
    raise ConvergenceError("fixed-point iteration did not converge", res, max_iter)


def bicm_log_likelihood_at(eta: np.ndarray, theta: np.ndarray, g: BipartiteGraph) -> float:
    """Log-likelihood of ``g`` for per-node multipliers (finite values only)."""
    z = np.asarray(eta)[:, None] + np.asarray(theta)[None, :]
    m = g.dense().astype(float)
    return float(-(m * z).sum() - _softplus(-z).sum())


def bicm_gradient(eta: np.ndarray, theta: np.ndarray, g: BipartiteGraph):
    """Gradient of the log-likelihood: (<k_i> - k_i, <h_a> - h_a)."""
    p = expit(-(np.asarray(eta)[:, None] + np.asarray(theta)[None, :]))
    return p.sum(axis=1) - g.top_degrees, p.sum(axis=0) - g.bottom_degrees


def log_likelihood(fit: BicmFit, g: BipartiteGraph) -> float:
    """ln P(g) under the fitted ensemble, with 0 ln 0 := 0.

    Returns ``-inf`` (and warns) when ``g`` has a link where the fit pins
    p = 0, or misses one where it pins p = 1.
    """
    if (g.n_top, g.n_bottom) != (fit.n_top, fit.n_bottom):
        raise ValueError("graph layer sizes differ from the fit")
    p = fit.class_probabilities()
    tc, bc = fit.top_class, fit.bottom_class
    edges = np.zeros_like(p)
    np.add.at(edges, (tc[g.edges[:, 0]], bc[g.edges[:, 1]]), 1.0)
    pairs = np.outer(fit.top_class_counts, fit.bottom_class_counts).astype(float)
    non_edges = pairs - edges
    with np.errstate(divide="ignore"):
        lp = np.log(p)
        lq = np.log1p(-p)
    free = np.isnan(_pinned_pairs(fit.top_peel.rounds, fit.top_peel.values,
                                  fit.bottom_peel.rounds, fit.bottom_peel.values))
    if free.any():
        z = (fit.eta_classes[:, None] + fit.theta_classes[None, :])[free]
        lp[free] = -_softplus(z)
        lq[free] = -_softplus(-z)
    if np.any((edges > 0) & np.isneginf(lp)) or np.any((non_edges > 0) & np.isneginf(lq)):
        warnings.warn("graph has zero probability under the fit", RuntimeWarning, stacklevel=2)
        return -math.inf
    on, off = edges > 0, non_edges > 0
    return float((edges[on] * lp[on]).sum() + (non_edges[off] * lq[off]).sum())


def sample_ensemble(fit: BicmFit, count: int, rng_seed: int) -> list[BipartiteGraph]:
    """Draw ``count`` graphs with independent Bernoulli(p_ia) links."""
    rng = np.random.default_rng(rng_seed)
    top = fit.top_nodes or tuple(f"t{i}" for i in range(fit.n_top))
    bottom = fit.bottom_nodes or tuple(f"b{a}" for a in range(fit.n_bottom))
    p = fit.probabilities()
    out = []
    for _ in range(count):
        m = rng.random(p.shape) < p
        out.append(BipartiteGraph(top, bottom, np.argwhere(m)))
    return out


# --------------------------------------------------------------------------
# UCM


@dataclass
class UcmFit:
    degrees: np.ndarray
    theta_classes: np.ndarray
    peel: _Peel
    residual: float
    iterations: int
    tolerance: float
    trace: list[float] = field(default_factory=list, repr=False)
    nodes: tuple[str, ...] | None = None

    def __post_init__(self):
        self.degrees = np.asarray(self.degrees, dtype=np.int64)
        self.class_degrees, self.node_class, self.class_counts = _degree_classes(self.degrees)
        self._cls_p = None

    @property
    def n_nodes(self) -> int:
        return len(self.degrees)

    @property
    def x(self) -> np.ndarray:
        """Per-node multipliers x_i = exp(-theta_i); 0 / inf for pinned nodes."""
        return np.exp(-_expand(self.theta_classes, self.peel, self.node_class))

    def class_probabilities(self) -> np.ndarray:
        """P between two distinct nodes of the given classes."""
        if self._cls_p is None:
            r, v = self.peel.rounds, self.peel.values
            p = _pinned_pairs(r, v, r, v)
            free = np.isnan(p)
            z = self.theta_classes[:, None] + self.theta_classes[None, :]
            p[free] = expit(-z[free])
            self._cls_p = p
        return self._cls_p

    def probability(self, i: int, j: int) -> float:
        if i == j:
            return 0.0
        return float(self.class_probabilities()[self.node_class[i], self.node_class[j]])

    def probabilities(self) -> np.ndarray:
        """Dense P with a zero diagonal."""
        p = self.class_probabilities()[np.ix_(self.node_class, self.node_class)].copy()
        np.fill_diagonal(p, 0.0)
        return p

    def expected_degrees(self) -> np.ndarray:
        p = self.class_probabilities()
        k = p @ self.class_counts - np.diag(p)
        return k[self.node_class]

    def max_residual(self) -> float:
        if self.n_nodes == 0:
            return 0.0
        return float(np.max(np.abs(self.expected_degrees() - self.degrees)))

    def to_json(self) -> dict:
        return {
            "model": "UCM",
            "n_nodes": self.n_nodes,
            "nodes": list(self.nodes) if self.nodes is not None else None,
            "degrees": self.degrees.tolist(),
            "classes": _classes_json(self.class_degrees, self.theta_classes, self.peel),
            "residual": self.residual,
            "tolerance": self.tolerance,
            "iterations": self.iterations,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "UcmFit":
        if obj.get("model") != "UCM":
            raise ValueError("not a UCM fit")
        k = np.asarray(obj["degrees"], dtype=np.int64)
        theta, peel = _classes_from_json(obj["classes"], k)
        return cls(k, theta, peel, float(obj["residual"]), int(obj["iterations"]),
                   float(obj["tolerance"]), nodes=tuple(obj["nodes"]) if obj.get("nodes") else None)


def _peel_monopartite(kd, kc):
    peel = _Peel.empty(len(kd))
    kr = kd.astype(float).copy()
    rnd = 0
    while True:
        act = peel.active
        n = int(kc[act].sum())
        zero = act & (kr == 0)
        sat = act & (kr == n - 1) & (kr > 0)
        if not (zero.any() or sat.any()):
            break
        peel.rounds[zero | sat] = rnd
        peel.values[zero] = 0.0
        peel.values[sat] = 1.0
        kr[peel.active] -= kc[sat].sum()
        if (kr[peel.active] < 0).any():
            raise ValueError("degree sequence is not graphical")
        rnd += 1
    return peel, kr


def solve_ucm(g: UndirectedGraph, tolerance: float = DEFAULT_TOLERANCE,
              max_iterations: int = DEFAULT_MAX_ITERATIONS, method: str = "newton") -> UcmFit:
    """Fit the UCM to the binary structure of ``g``."""
    if g.n_edges and np.any(g.edges[:, 0] == g.edges[:, 1]):
        raise ValueError("UCM requires a graph without self-loops")
    k = g.degrees()
    kd, inv, kc = _degree_classes(k)
    peel, kr = _peel_monopartite(kd, kc)
    theta = np.zeros(len(kd))
    act = peel.active
    trace: list[float] = []
    iterations = 0
    if act.any():
        sys_ = _UcmSystem(kr[act], kc[act].astype(float))
        if method == "newton":
            z, iterations, trace = _newton(sys_, sys_.initial(), tolerance, max_iterations)
        elif method == "fixed-point":
            z, iterations, trace = _fixed_point(sys_, sys_.initial(), tolerance, max_iterations)
        else:
            raise ValueError(f"unknown method {method!r}")
        theta[act] = z
    fit = UcmFit(k, theta, peel, 0.0, iterations, tolerance, trace, nodes=g.nodes)
    fit.residual = fit.max_residual()
    if fit.residual > tolerance:
        raise ConvergenceError("UCM solver did not converge", fit.residual, iterations)
    return fit


def chung_lu_probability(g: UndirectedGraph, i: str | int, j: str | int) -> float:
    """k_i k_j / 2m, clamped to 1 (with a ProbabilityClampWarning) when larger."""
    m = g.total_weight
    if m <= 0:
        raise ValueError("graph has no edges")
    if not isinstance(i, (int, np.integer)) or not isinstance(j, (int, np.integer)):
        idx = g.index()
        i, j = idx[i], idx[j]
    k = g.strengths()
    p = k[i] * k[j] / (2.0 * m)
    if p > 1.0:
        warnings.warn(f"Chung-Lu value {p:.4g} clamped to 1", ProbabilityClampWarning, stacklevel=2)
        return 1.0
    return float(p)
