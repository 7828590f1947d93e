"""Ensemble checks of the validated projection: false-positive rate and planted-block power."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .graphs import BipartiteGraph
from .maxent import sample_ensemble, solve_bicm
from .projection import project_validated
from .synthetic import planted_block


@dataclass
class FprReport:
    alpha: float
    samples: int
    universe: str
    fractions: list[float]          # validated / tested pairs, per sample
    any_validated: int              # samples with at least one validated pair

    @property
    def mean(self) -> float:
        return float(np.mean(self.fractions))

    @property
    def standard_error(self) -> float:
        if self.samples < 2:
            return 0.0
        return float(np.std(self.fractions, ddof=1) / np.sqrt(self.samples))

    def to_json(self) -> dict:
        out = asdict(self)
        out.update(mean=self.mean, standard_error=self.standard_error,
                   family_wise_rate=self.any_validated / self.samples)
        return out


def fpr_bench(g: BipartiteGraph, alpha: float = 0.05, samples: int = 100, rng_seed: int = 0,
              layer: str = "top", universe: str = "all-pairs",
              tolerance: float = 1e-8) -> FprReport:
    """Project graphs drawn from the BiCM of ``g``; each sample is refitted first."""
    fit = solve_bicm(g, tolerance=tolerance)
    fractions, hits = [], 0
    for s in sample_ensemble(fit, samples, rng_seed):
        proj = project_validated(s, layer, alpha, universe=universe, tolerance=tolerance)
        n_val = len(proj.validated)
        fractions.append(n_val / len(proj.results) if proj.results else 0.0)
        hits += n_val > 0
    return FprReport(alpha, samples, universe, fractions, hits)


def planted_power(alpha: float = 0.01, rng_seed: int = 0, **kw) -> float:
    """Share of planted block pairs that the projection validates."""
    pb = planted_block(rng_seed=rng_seed, **kw)
    proj = project_validated(pb.graph, "top", alpha)
    got = {tuple(sorted(r.pair)) for r in proj.validated}
    truth = {tuple(sorted(p)) for p in pb.planted_pairs()}
    return len(got & truth) / len(truth)
