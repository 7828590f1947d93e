"""Pipeline configuration: dataclass, TOML loading, validation and seed derivation."""
from __future__ import annotations

import os
import sys
from dataclasses import asdict, dataclass, fields, replace
from datetime import date
from pathlib import Path
from typing import Any, Mapping

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

CONFIG_ENV = "SEMNET_CONFIG"

STAGES = (
    "ingest",
    "retweet-bicm",
    "verified-projection",
    "verified-louvain",
    "label-propagation",
    "hashtag-graph",
    "hashtag-bicm",
    "semantic-projection",
    "semantic-louvain",
    "analytics",
)


class ConfigError(ValueError):
    """Invalid or inconsistent configuration."""


@dataclass(frozen=True)
class PipelineConfig:
    records: str | None = None
    keywords_file: str | None = None
    seeds_file: str | None = None
    bot_scores: str | None = None
    output_dir: str = "semnet-out"

    window_start: date = date(2020, 3, 23)
    window_end: date = date(2020, 4, 23)
    keyword_filter: bool = True
    levenshtein_threshold: float = 0.82
    levenshtein_norm: str = "max"
    retweet_directions: str = "both"

    tolerance: float = 1e-8
    alpha: float = 0.05
    fdr_universe: str = "all-pairs"
    pvalue_method: str = "exact"

    null_model: str = "ucm"
    seed: int = 0
    refine_min_size: int | None = None

    lp_runs: int = 500
    tracked_communities: int = 6

    bot_threshold: float = 0.5
    hist_bin_width: float = 0.05
    series_normalization: str = "per-group"
    betweenness_top: int = 10
    threads: int = 1

    def validate(self) -> "PipelineConfig":
        def need(cond, msg):
            if not cond:
                raise ConfigError(msg)

        need(self.window_start <= self.window_end, "window_start must not be after window_end")
        need(0.0 < self.alpha < 1.0, f"alpha must lie in (0, 1), got {self.alpha}")
        need(0.0 <= self.levenshtein_threshold <= 1.0, "levenshtein_threshold must lie in [0, 1]")
        need(self.levenshtein_norm in ("max", "sum"), "levenshtein_norm must be 'max' or 'sum'")
        need(self.retweet_directions in ("both", "to-verified"),
             "retweet_directions must be 'both' or 'to-verified'")
        need(self.fdr_universe in ("all-pairs", "observed"),
             "fdr_universe must be 'all-pairs' or 'observed'")
        need(self.pvalue_method in ("exact", "normal"), "pvalue_method must be 'exact' or 'normal'")
        need(self.null_model in ("ucm", "chung-lu"), "null_model must be 'ucm' or 'chung-lu'")
        need(self.lp_runs >= 1, "lp_runs must be >= 1")
        need(self.tracked_communities >= 1, "tracked_communities must be >= 1")
        need(self.tolerance > 0, "tolerance must be positive")
        need(0.0 < self.hist_bin_width <= 1.0, "hist_bin_width must lie in (0, 1]")
        need(self.series_normalization in ("none", "per-group", "global"),
             "series_normalization must be 'none', 'per-group' or 'global'")
        need(self.threads >= 1, "threads must be >= 1")
        need(self.refine_min_size is None or self.refine_min_size >= 1,
             "refine_min_size must be >= 1")
        need(isinstance(self.seed, int) and self.seed >= 0, "seed must be a non-negative integer")
        return self

    def stage_seed(self, stage: str) -> int:
        """Sub-seed of a stage: SeedSequence(seed, spawn_key=(stage index,))."""
        return derive_seed(self.seed, stage)

    def to_dict(self) -> dict[str, Any]:
        out = {}
        for k, v in asdict(self).items():
            out[k] = v.isoformat() if isinstance(v, date) else v
        return out

    def with_overrides(self, **kw) -> "PipelineConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        return _coerce(replace(self, **kw)).validate()


# Where each default comes from; shown by ``--help``.
PROVENANCE = {
    "window_start": "study window start (source analysis)",
    "window_end": "study window end (source analysis)",
    "keyword_filter": "24-term coronavirus keyword list (source analysis)",
    "levenshtein_threshold": "merge threshold (source analysis)",
    "levenshtein_norm": "unstated in source; max-length normalisation chosen",
    "alpha": "unstated in source; conventional 5% FDR",
    "fdr_universe": "unstated in source; all same-layer pairs",
    "null_model": "exact configuration-model null (source analysis)",
    "lp_runs": "runs of label propagation (source analysis)",
    "tracked_communities": "largest discursive communities followed (source analysis)",
    "bot_threshold": "unstated in source; score midpoint",
    "hist_bin_width": "unstated in source",
    "series_normalization": "per-set totals (source analysis); 'global' optional",
    "retweet_directions": "unstated in source; both directions counted",
    "tolerance": "solver tolerance, implementation choice",
    "seed": "root seed for every stochastic stage",
}


def derive_seed(root: int, stage: str) -> int:
    idx = STAGES.index(stage) if stage in STAGES else sum(map(ord, stage)) + len(STAGES)
    return int(np.random.SeedSequence(root, spawn_key=(idx,)).generate_state(1)[0])


_FIELDS = {f.name: f for f in fields(PipelineConfig)}


def _coerce(cfg: PipelineConfig) -> PipelineConfig:
    upd = {}
    for name in ("window_start", "window_end"):
        v = getattr(cfg, name)
        if isinstance(v, str):
            try:
                upd[name] = date.fromisoformat(v)
            except ValueError:
                raise ConfigError(f"{name}: not an ISO date: {v!r}") from None
        elif not isinstance(v, date):
            raise ConfigError(f"{name}: expected a date")
    for name, typ in (("alpha", float), ("levenshtein_threshold", float), ("tolerance", float),
                      ("bot_threshold", float), ("hist_bin_width", float),
                      ("lp_runs", int), ("tracked_communities", int), ("seed", int),
                      ("threads", int), ("betweenness_top", int)):
        v = getattr(cfg, name)
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(f"{name}: expected a number, got {v!r}")
        if typ is int and v != int(v):
            raise ConfigError(f"{name}: expected an integer, got {v!r}")
        upd[name] = typ(v)
    return replace(cfg, **upd)


def flatten(data: Mapping[str, Any]) -> dict[str, Any]:
    """Merge TOML tables into one flat namespace (section names are cosmetic)."""
    flat: dict[str, Any] = {}
    for k, v in data.items():
        items = v.items() if isinstance(v, Mapping) else [(k, v)]
        for kk, vv in items:
            if isinstance(vv, Mapping):
                raise ConfigError(f"nested table {k}.{kk} not supported")
            key = kk.replace("-", "_")
            if key in flat:
                raise ConfigError(f"duplicate key {kk!r}")
            flat[key] = vv
    return flat


def from_mapping(data: Mapping[str, Any], base: Path | None = None) -> PipelineConfig:
    flat = flatten(data)
    unknown = sorted(set(flat) - set(_FIELDS))
    if unknown:
        raise ConfigError(f"unknown configuration keys: {', '.join(unknown)}")
    if base is not None:
        for k in ("records", "keywords_file", "seeds_file", "bot_scores", "output_dir"):
            if flat.get(k) is not None and not os.path.isabs(flat[k]):
                flat[k] = str(base / flat[k])
    return _coerce(PipelineConfig(**flat)).validate()


def load_config(path: str | os.PathLike | None = None) -> PipelineConfig:
    """Load a TOML config; ``None`` falls back to $SEMNET_CONFIG, then defaults.

    Relative paths inside the file resolve against the file's directory.
    """
    if path is None:
        path = os.environ.get(CONFIG_ENV) or None
    if path is None:
        return PipelineConfig().validate()
    p = Path(path)
    try:
        with open(p, "rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {p}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{p}: {exc}") from None
    return from_mapping(data, base=p.parent)
