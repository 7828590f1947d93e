"""End-to-end pipeline: records -> discursive communities -> semantic network -> analytics.

Every stage writes its artefacts under ``<output_dir>/<NN>_<stage>/``. The
manifest lists parameters, seeds and outputs and contains nothing that
changes between identical runs; wall-clock timings go to ``run_log.json``.
"""
from __future__ import annotations

import hashlib
import json
import logging
import platform
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np
import scipy

from . import __version__
from .analytics import (betweenness, crosstab, filter_by_bot_score, polarization, read_scores,
                        temporal_series)
from .community import (ModularityContext, louvain, read_labeling, read_seeds,
                        refine_partition, seeded_label_propagation, write_labeling)
from .config import STAGES, PipelineConfig
from .graphs import (BipartiteGraph, Partition, UndirectedGraph, _csv, ensure_dir,
                     read_bipartite, read_monopartite, read_partition, write_bipartite,
                     write_monopartite, write_partition)
from .ingest import (DEFAULT_KEYWORDS, apply_lexicon, build_retweet_network,
                     build_user_hashtag_graph, build_verified_retweet_graph, dedup_hashtags,
                     hashtag_frequencies, load_keywords, parse_records, verified_users,
                     write_records)
from .maxent import solve_bicm
from .projection import project_validated

log = logging.getLogger(__name__)


class StageError(RuntimeError):
    """A pipeline stage failed; ``cause`` holds the original exception."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


class DataError(ValueError):
    """Input data cannot support the requested analysis."""


@dataclass
class RunState:
    cfg: PipelineConfig
    root: Path
    data: dict[str, Any] = field(default_factory=dict)
    outputs: dict[str, list[str]] = field(default_factory=dict)

    def stage_dir(self, stage: str) -> Path:
        return ensure_dir(self.root / f"{STAGES.index(stage) + 1:02d}_{stage.replace('-', '_')}")

    def record(self, stage: str, path: Path) -> Path:
        self.outputs.setdefault(stage, []).append(path.relative_to(self.root).as_posix())
        return path


def _dump_json(obj, path: Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True, ensure_ascii=False)
        fh.write("\n")


def tracked_communities(partition: Partition, count: int, prefix: str) -> dict[str, str]:
    """Members of the ``count`` largest communities, labelled prefix0, prefix1, ...

    Size ties go to the community whose smallest member id sorts first.
    """
    comms = [c for c in partition.communities() if c]
    comms.sort(key=lambda c: (-len(c), min(c)))
    return {n: f"{prefix}{rank}" for rank, c in enumerate(comms[:count]) for n in c}


def _write_louvain(state: RunState, stage: str, ctx, res, part: Partition) -> None:
    d = state.stage_dir(stage)
    write_partition(part, state.record(stage, d / "partition.csv"))
    _dump_json({"null_model": ctx.null_model, "modularity": res.modularity,
                "passes": res.passes, "trace": res.trace,
                "communities": part.community_count,
                "sizes": sorted((len(c) for c in part.communities()), reverse=True)},
               state.record(stage, d / "louvain.json"))


def _communities(state: RunState, stage: str, graph: UndirectedGraph) -> Partition:
    cfg = state.cfg
    if graph.n_edges == 0:
        raise DataError("validated projection has no edges; nothing to partition")
    ctx = ModularityContext(graph, cfg.null_model)
    res = louvain(ctx, rng_seed=cfg.stage_seed(stage))
    part = res.partition
    if cfg.refine_min_size is not None:
        part = refine_partition(ctx, part, cfg.refine_min_size, cfg.stage_seed(stage))
    _write_louvain(state, stage, ctx, res, part)
    return part


# --------------------------------------------------------------------------
# stages


def stage_ingest(state: RunState) -> None:
    cfg, st = state.cfg, "ingest"
    if cfg.records is None:
        raise DataError("no input records configured")
    keywords = load_keywords(cfg.keywords_file) if cfg.keywords_file else DEFAULT_KEYWORDS
    recs = parse_records(cfg.records, cfg.keyword_filter, keywords,
                         (cfg.window_start, cfg.window_end))
    if not recs:
        raise DataError(f"{cfg.records}: no usable records")
    lexicon = dedup_hashtags(hashtag_frequencies(recs), cfg.levenshtein_threshold,
                             cfg.levenshtein_norm)
    norm = apply_lexicon(recs, lexicon)
    bip = build_verified_retweet_graph(norm, cfg.retweet_directions)
    net = build_retweet_network(norm)
    d = state.stage_dir(st)
    write_records(norm, state.record(st, d / "records.jsonl"))
    lexicon.write_csv(state.record(st, d / "lexicon.csv"))
    write_bipartite(bip, state.record(st, d / "retweet_bipartite.tsv"))
    write_monopartite(net, state.record(st, d / "retweet_network.tsv"))
    _dump_json({**recs.report(), "raw_hashtags": len(lexicon.canonical),
                "canonical_hashtags": len(lexicon.counts), "reduction": lexicon.reduction,
                "verified_users": bip.n_top, "non_verified_users": bip.n_bottom,
                "retweet_bipartite_edges": bip.n_edges},
               state.record(st, d / "ingest_report.json"))
    state.data.update(records=norm, lexicon=lexicon, retweet_bipartite=bip, retweet_network=net,
                      verified=verified_users(norm))


def stage_retweet_bicm(state: RunState) -> None:
    st, g = "retweet-bicm", state.data["retweet_bipartite"]
    if g.n_top == 0 or g.n_bottom == 0:
        raise DataError("retweet bipartite graph has an empty layer")
    fit = solve_bicm(g, tolerance=state.cfg.tolerance)
    fit.save(state.record(st, state.stage_dir(st) / "bicm.json"))
    state.data["retweet_fit"] = fit


def _project(state: RunState, st: str, g: BipartiteGraph, fit, layer: str):
    cfg = state.cfg
    proj = project_validated(g, layer, cfg.alpha, fit, cfg.fdr_universe, cfg.pvalue_method,
                             cfg.tolerance)
    d = state.stage_dir(st)
    proj.write_csv(state.record(st, d / "pair_tests.csv"))
    proj.write_summary(state.record(st, d / "summary.json"))
    write_monopartite(proj.graph, state.record(st, d / "validated.tsv"))
    return proj


def stage_verified_projection(state: RunState) -> None:
    st = "verified-projection"
    proj = _project(state, st, state.data["retweet_bipartite"], state.data["retweet_fit"], "top")
    state.data["verified_projection"] = proj.graph


def stage_verified_louvain(state: RunState) -> None:
    part = _communities(state, "verified-louvain", state.data["verified_projection"])
    state.data["verified_partition"] = part


def stage_label_propagation(state: RunState) -> None:
    cfg, st = state.cfg, "label-propagation"
    net: UndirectedGraph = state.data["retweet_network"]
    if cfg.seeds_file:
        seeds = read_seeds(cfg.seeds_file)
    else:
        seeds = tracked_communities(state.data["verified_partition"], cfg.tracked_communities, "D")
    present = set(net.nodes)
    seeds = {n: lab for n, lab in sorted(seeds.items()) if n in present}
    if not seeds:
        raise DataError("no label-propagation seed is present in the retweet network")
    lab = seeded_label_propagation(net, seeds, cfg.lp_runs, cfg.stage_seed(st), cfg.threads)
    d = state.stage_dir(st)
    with open(state.record(st, d / "seeds.csv"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write("node,label\n")
        for n, l in seeds.items():
            fh.write(f"{_csv(n)},{_csv(l)}\n")
    write_labeling(lab, state.record(st, d / "labels.csv"))
    _dump_json({"runs": lab.runs, "seeds": len(seeds), "nodes": len(lab.labels),
                "coverage": lab.coverage()}, state.record(st, d / "summary.json"))
    state.data["user_community"] = {n: l for n, l in lab.labels.items() if l is not None}
    state.data["verified_community"] = seeds


def stage_hashtag_graph(state: RunState) -> None:
    st = "hashtag-graph"
    g = build_user_hashtag_graph(state.data["records"])
    write_bipartite(g, state.record(st, state.stage_dir(st) / "user_hashtag.tsv"))
    state.data["user_hashtag"] = g


def stage_hashtag_bicm(state: RunState) -> None:
    st, g = "hashtag-bicm", state.data["user_hashtag"]
    if g.n_top == 0 or g.n_bottom == 0:
        raise DataError("user-hashtag graph has an empty layer")
    fit = solve_bicm(g, tolerance=state.cfg.tolerance)
    fit.save(state.record(st, state.stage_dir(st) / "bicm.json"))
    state.data["hashtag_fit"] = fit


def stage_semantic_projection(state: RunState) -> None:
    st = "semantic-projection"
    proj = _project(state, st, state.data["user_hashtag"], state.data["hashtag_fit"], "bottom")
    state.data["semantic_projection"] = proj.graph


def stage_semantic_louvain(state: RunState) -> None:
    part = _communities(state, "semantic-louvain", state.data["semantic_projection"])
    state.data["semantic_partition"] = part
    state.data["hashtag_community"] = tracked_communities(part, state.cfg.tracked_communities, "S")


def stage_analytics(state: RunState) -> None:
    cfg, st = state.cfg, "analytics"
    d = state.stage_dir(st)
    recs = state.data["records"]
    users, tags = state.data["user_community"], state.data["hashtag_community"]
    ver_comm = state.data["verified_community"]
    summary: dict[str, Any] = {}

    pol = polarization(state.data["retweet_bipartite"], ver_comm, cfg.hist_bin_width)
    pol.write_csv(state.record(st, d / "polarization.csv"))
    pol.write_histogram(state.record(st, d / "polarization_hist.csv"))
    summary["polarization"] = {"users": len(pol.rho), "excluded": pol.excluded}

    window = (cfg.window_start, cfg.window_end)
    temporal_series(recs, tags, cfg.series_normalization, "hashtag", window).write_csv(
        state.record(st, d / "semantic_series.csv"))
    temporal_series(recs, users, cfg.series_normalization, "user", window).write_csv(
        state.record(st, d / "discursive_series.csv"))

    ct = crosstab(recs, users, tags)
    ct.write_csv(state.record(st, d / "crosstab.csv"))
    ctv = crosstab(recs, users, tags, verified_only=True, verified=state.data["verified"])
    ctv.write_csv(state.record(st, d / "crosstab_verified.csv"))
    summary["crosstab"] = {"total_events": ct.total_events, "untracked": ct.untracked}
    summary["crosstab_verified"] = {"total_events": ctv.total_events, "untracked": ctv.untracked}

    sem = state.data["semantic_projection"]
    groups: dict[str, list[str]] = {}
    for n, c in tags.items():
        groups.setdefault(c, []).append(n)
    with open(state.record(st, d / "betweenness.csv"), "w", encoding="utf-8",
              newline="\n") as fh:
        fh.write("community,node,betweenness\n")
        for c in sorted(groups):
            bc = betweenness(sem, groups[c])
            for n, v in sorted(bc.items(), key=lambda kv: (-kv[1], kv[0])):
                fh.write(f"{_csv(c)},{_csv(n)},{v!r}\n")

    if cfg.bot_scores:
        bots, bsum = filter_by_bot_score(recs, read_scores(cfg.bot_scores), cfg.bot_threshold)
        summary["bots"] = bsum
        if bots:
            crosstab(bots, users, tags).write_csv(state.record(st, d / "crosstab_bots.csv"))
            temporal_series(bots, tags, cfg.series_normalization, "hashtag", window).write_csv(
                state.record(st, d / "semantic_series_bots.csv"))
    _dump_json(summary, state.record(st, d / "summary.json"))


STAGE_FUNCS: dict[str, Callable[[RunState], None]] = {
    "ingest": stage_ingest,
    "retweet-bicm": stage_retweet_bicm,
    "verified-projection": stage_verified_projection,
    "verified-louvain": stage_verified_louvain,
    "label-propagation": stage_label_propagation,
    "hashtag-graph": stage_hashtag_graph,
    "hashtag-bicm": stage_hashtag_bicm,
    "semantic-projection": stage_semantic_projection,
    "semantic-louvain": stage_semantic_louvain,
    "analytics": stage_analytics,
}


def load_for_analytics(state: RunState) -> None:
    """Populate ``state.data`` from the persisted outputs of stages 1 to 9."""
    def path(stage, name):
        p = state.root / f"{STAGES.index(stage) + 1:02d}_{stage.replace('-', '_')}" / name
        if not p.exists():
            raise DataError(f"missing stage output {p}")
        return p

    recs = parse_records(path("ingest", "records.jsonl"), keyword_filter=False)
    sem_part = read_partition(path("semantic-louvain", "partition.csv"))
    state.data.update(
        records=list(recs), verified=verified_users(recs),
        retweet_bipartite=read_bipartite(path("ingest", "retweet_bipartite.tsv")),
        verified_community=read_seeds(path("label-propagation", "seeds.csv")),
        user_community=read_labeling(path("label-propagation", "labels.csv")),
        semantic_projection=read_monopartite(path("semantic-projection", "validated.tsv")),
        hashtag_community=tracked_communities(sem_part, state.cfg.tracked_communities, "S"))


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def run_pipeline(cfg: PipelineConfig) -> Path:
    """Run every stage in order; returns the output directory."""
    cfg.validate()
    root = ensure_dir(cfg.output_dir)
    state = RunState(cfg, root)
    timings = {}
    for name in STAGES:
        t0 = time.perf_counter()
        log.info("stage %s", name)
        try:
            STAGE_FUNCS[name](state)
        except Exception as exc:
            raise StageError(name, exc) from exc
        timings[name] = time.perf_counter() - t0
    params = cfg.to_dict()
    params.pop("output_dir")
    manifest = {
        "semnet": __version__,
        "versions": {"python": platform.python_version(), "numpy": np.__version__,
                     "scipy": scipy.__version__},
        "params": params,
        "input_sha256": _sha256(cfg.records),
        "seeds": {"root": cfg.seed, **{s: cfg.stage_seed(s) for s in STAGES}},
        "stages": [{"name": s, "outputs": state.outputs.get(s, [])} for s in STAGES],
    }
    _dump_json(manifest, root / "manifest.json")
    _dump_json({"timings_s": timings, "total_s": sum(timings.values())}, root / "run_log.json")
    return root
