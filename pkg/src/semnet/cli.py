"""Command-line interface.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 numerical non-convergence.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .bench import fpr_bench
from .community import (ModularityContext, louvain, read_seeds, refine_partition,
                        seeded_label_propagation, write_labeling)
from .config import CONFIG_ENV, PROVENANCE, ConfigError, PipelineConfig, load_config
from .graphs import (ensure_dir, read_bipartite, read_monopartite, write_bipartite,
                     write_monopartite, write_partition)
from .ingest import (DEFAULT_KEYWORDS, apply_lexicon, build_retweet_network,
                     build_user_hashtag_graph, build_verified_retweet_graph, dedup_hashtags,
                     hashtag_frequencies, load_keywords, parse_records, write_records)
from .maxent import DEFAULT_MAX_ITERATIONS, BicmFit, ConvergenceError, sample_ensemble, solve_bicm, solve_ucm
from .pipeline import (DataError, RunState, StageError, load_for_analytics, run_pipeline,
                       stage_analytics)
from .projection import project_validated
from .synthetic import random_bipartite

log = logging.getLogger("semnet")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_CONVERGENCE = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


_DEFAULTS = PipelineConfig()


def _h(text: str, name: str) -> str:
    """Help text annotated with the config default and where it comes from."""
    note = f"default: {getattr(_DEFAULTS, name)}"
    if name in PROVENANCE:
        note += f"; {PROVENANCE[name]}"
    return f"{text} ({note})".replace("%", "%%")


# flag -> (config field, argparse kwargs)
_OVERRIDES = {
    "--records": ("records", dict(help="NDJSON tweet records")),
    "--keywords-file": ("keywords_file", dict(help="keyword list, one per line")),
    "--output-dir": ("output_dir", dict(help=_h("output directory", "output_dir"))),
    "--window-start": ("window_start", dict(help=_h("first UTC day kept", "window_start"))),
    "--window-end": ("window_end", dict(help=_h("last UTC day kept", "window_end"))),
    "--levenshtein-threshold": ("levenshtein_threshold", dict(
        type=float, help=_h("hashtag merge similarity", "levenshtein_threshold"))),
    "--levenshtein-norm": ("levenshtein_norm", dict(
        choices=["max", "sum"], help=_h("edit-distance normaliser", "levenshtein_norm"))),
    "--retweet-directions": ("retweet_directions", dict(
        choices=["both", "to-verified"], help=_h("retweet edge rule", "retweet_directions"))),
    "--alpha": ("alpha", dict(type=float, help=_h("FDR level", "alpha"))),
    "--fdr-universe": ("fdr_universe", dict(
        choices=["all-pairs", "observed"], help=_h("hypothesis count", "fdr_universe"))),
    "--pvalue-method": ("pvalue_method", dict(
        choices=["exact", "normal"], help=_h("co-occurrence test", "pvalue_method"))),
    "--null-model": ("null_model", dict(
        choices=["ucm", "chung-lu"], help=_h("modularity null model", "null_model"))),
    "--seed": ("seed", dict(type=int, help=_h("root seed", "seed"))),
    "--refine-min-size": ("refine_min_size", dict(
        type=int, help="re-run Louvain inside communities at least this large (default: off)")),
    "--runs": ("lp_runs", dict(type=int, help=_h("label-propagation runs", "lp_runs"))),
    "--tracked-communities": ("tracked_communities", dict(
        type=int, help=_h("communities followed downstream", "tracked_communities"))),
    "--seeds-file": ("seeds_file", dict(help="CSV node,label of propagation seeds")),
    "--bot-scores": ("bot_scores", dict(help="CSV user_id,score")),
    "--bot-threshold": ("bot_threshold", dict(
        type=float, help=_h("bot-score cutoff", "bot_threshold"))),
    "--hist-bin-width": ("hist_bin_width", dict(
        type=float, help=_h("polarisation histogram bin", "hist_bin_width"))),
    "--series-normalization": ("series_normalization", dict(
        choices=["none", "per-group", "global"],
        help=_h("activity series normalisation", "series_normalization"))),
    "--tolerance": ("tolerance", dict(type=float, help=_h("solver tolerance", "tolerance"))),
    "--threads": ("threads", dict(type=int, help=_h("worker processes", "threads"))),
}


def _add_overrides(p: argparse.ArgumentParser, flags) -> None:
    p.add_argument("--config", help=f"TOML config file (default: ${CONFIG_ENV})")
    for flag in flags:
        dest, kw = _OVERRIDES[flag]
        p.add_argument(flag, dest=dest, default=None, **kw)
    if "--records" in flags:
        p.add_argument("--no-keyword-filter", dest="keyword_filter", action="store_false",
                       default=None, help=_h("keep records without keywords", "keyword_filter"))


def _config(args) -> PipelineConfig:
    cfg = load_config(args.config)
    fields = {dest for dest, _ in _OVERRIDES.values()} | {"keyword_filter"}
    kw = {k: v for k, v in vars(args).items() if k in fields and v is not None}
    return cfg.with_overrides(**kw)


def _dump(obj, path=None):
    text = json.dumps(obj, indent=1, sort_keys=True)
    if path is None:
        print(text)
    else:
        Path(path).write_text(text + "\n", encoding="utf-8")


# --------------------------------------------------------------------------
# subcommands


def cmd_normalize(args) -> int:
    cfg = _config(args)
    if not cfg.records:
        raise ConfigError("--records is required")
    kws = load_keywords(cfg.keywords_file) if cfg.keywords_file else DEFAULT_KEYWORDS
    recs = parse_records(cfg.records, cfg.keyword_filter, kws, (cfg.window_start, cfg.window_end))
    if not recs:
        raise DataError(f"{cfg.records}: no usable records")
    lex = dedup_hashtags(hashtag_frequencies(recs), cfg.levenshtein_threshold,
                         cfg.levenshtein_norm)
    out = ensure_dir(cfg.output_dir)
    lex.write_csv(out / "lexicon.csv")
    write_records(apply_lexicon(recs, lex), out / "records.jsonl")
    report = {**recs.report(), "raw_hashtags": len(lex.canonical),
              "canonical_hashtags": len(lex.counts), "reduction": lex.reduction}
    _dump(report, out / "normalize_report.json")
    print(f"reduction {100 * lex.reduction:.1f}% ({len(lex.canonical)} -> {len(lex.counts)})")
    return EXIT_OK


def cmd_build_graphs(args) -> int:
    cfg = _config(args)
    if not cfg.records:
        raise ConfigError("--records is required")
    recs = parse_records(cfg.records, keyword_filter=False)
    if not recs:
        raise DataError(f"{cfg.records}: no usable records")
    out = ensure_dir(cfg.output_dir)
    write_bipartite(build_verified_retweet_graph(recs, cfg.retweet_directions),
                    out / "retweet_bipartite.tsv")
    write_monopartite(build_retweet_network(recs), out / "retweet_network.tsv")
    write_bipartite(build_user_hashtag_graph(recs), out / "user_hashtag.tsv")
    return EXIT_OK


def cmd_solve(args) -> int:
    if args.monopartite:
        fit = solve_ucm(read_monopartite(args.graph), args.tolerance, args.max_iterations,
                        method=args.method)
    else:
        fit = solve_bicm(read_bipartite(args.graph), args.tolerance, args.max_iterations,
                        method=args.method)
    _dump(fit.to_json(), args.out)
    log.info("residual %.3g after %d iterations", fit.residual, fit.iterations)
    return EXIT_OK


def cmd_project(args) -> int:
    cfg = _config(args)
    g = read_bipartite(args.graph)
    fit = BicmFit.load(args.fit) if args.fit else None
    proj = project_validated(g, args.layer, cfg.alpha, fit, cfg.fdr_universe, cfg.pvalue_method,
                             cfg.tolerance)
    out = ensure_dir(cfg.output_dir)
    proj.write_csv(out / "pair_tests.csv")
    proj.write_summary(out / "summary.json")
    write_monopartite(proj.graph, out / "validated.tsv")
    print(f"{len(proj.validated)} validated of {len(proj.results)} tested pairs")
    return EXIT_OK


def cmd_communities(args) -> int:
    cfg = _config(args)
    g = read_monopartite(args.graph)
    if g.n_edges == 0:
        raise DataError("graph has no edges")
    ctx = ModularityContext(g, cfg.null_model)
    res = louvain(ctx, rng_seed=cfg.stage_seed(args.stage))
    part = res.partition
    if cfg.refine_min_size is not None:
        part = refine_partition(ctx, part, cfg.refine_min_size, cfg.stage_seed(args.stage))
    out = ensure_dir(cfg.output_dir)
    write_partition(part, out / "partition.csv")
    _dump({"null_model": cfg.null_model, "modularity": res.modularity, "passes": res.passes,
           "trace": res.trace, "communities": part.community_count}, out / "louvain.json")
    print(f"Q = {res.modularity:.6f}, {part.community_count} communities")
    return EXIT_OK


def cmd_propagate(args) -> int:
    cfg = _config(args)
    g = read_monopartite(args.graph)
    if not (args.seeds or cfg.seeds_file):
        raise ConfigError("--seeds is required")
    seeds = read_seeds(args.seeds or cfg.seeds_file)
    lab = seeded_label_propagation(g, seeds, cfg.lp_runs, cfg.stage_seed("label-propagation"),
                                   cfg.threads)
    out = ensure_dir(cfg.output_dir)
    write_labeling(lab, out / "labels.csv")
    print(f"coverage {100 * lab.coverage():.1f}% over {cfg.lp_runs} runs")
    return EXIT_OK


def cmd_analyze(args) -> int:
    cfg = _config(args)
    state = RunState(cfg, Path(args.run_dir))
    load_for_analytics(state)
    stage_analytics(state)
    return EXIT_OK


def cmd_pipeline(args) -> int:
    cfg = _config(args)
    if not cfg.records:
        raise ConfigError("no records: pass --records or set records in the config")
    root = run_pipeline(cfg)
    print(f"outputs written to {root}")
    return EXIT_OK


def cmd_fpr_bench(args) -> int:
    cfg = _config(args)
    if args.graph:
        g = read_bipartite(args.graph)
    else:
        nt, nb, dens = args.random
        g = random_bipartite(int(nt), int(nb), float(dens), cfg.seed)
    rep = fpr_bench(g, cfg.alpha, args.samples, cfg.seed, args.layer, cfg.fdr_universe,
                    cfg.tolerance)
    report = rep.to_json()
    if not args.full:
        report.pop("fractions")
    _dump(report, args.out)
    return EXIT_OK


def cmd_sample(args) -> int:
    fit = BicmFit.load(args.fit)
    out = ensure_dir(args.out)
    for k, g in enumerate(sample_ensemble(fit, args.count, args.seed)):
        write_bipartite(g, out / f"sample_{k:04d}.tsv")
    return EXIT_OK


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="semnet", description="Validated projections, communities and analytics "
                 "for retweet and hashtag networks.")
    ap.add_argument("--version", action="version", version=f"semnet {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("normalize", help="parse records and merge near-duplicate hashtags")
    _add_overrides(p, ["--records", "--keywords-file", "--output-dir", "--window-start",
                       "--window-end", "--levenshtein-threshold", "--levenshtein-norm"])
    p.set_defaults(func=cmd_normalize)

    p = sub.add_parser("build-graphs", help="retweet and user-hashtag graphs from records")
    _add_overrides(p, ["--records", "--output-dir", "--retweet-directions"])
    p.set_defaults(func=cmd_build_graphs)

    p = sub.add_parser("solve", help="fit a BiCM (or UCM with --monopartite)")
    p.add_argument("graph")
    p.add_argument("--monopartite", action="store_true")
    p.add_argument("--tolerance", type=float, default=_DEFAULTS.tolerance)
    p.add_argument("--method", choices=["newton", "fixed-point"], default="newton")
    p.add_argument("--max-iterations", type=int, default=DEFAULT_MAX_ITERATIONS)
    p.add_argument("--out", help="output JSON (default: stdout)")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("project", help="statistically validated projection")
    p.add_argument("graph")
    p.add_argument("--layer", choices=["top", "bottom"], default="top")
    p.add_argument("--fit", help="precomputed BiCM JSON")
    _add_overrides(p, ["--output-dir", "--alpha", "--fdr-universe", "--pvalue-method",
                       "--tolerance"])
    p.set_defaults(func=cmd_project)

    p = sub.add_parser("communities", help="Louvain on a monopartite graph")
    p.add_argument("graph")
    p.add_argument("--stage", choices=["verified-louvain", "semantic-louvain"],
                   default="verified-louvain", help="stage whose sub-seed is used")
    _add_overrides(p, ["--output-dir", "--null-model", "--seed", "--refine-min-size"])
    p.set_defaults(func=cmd_communities)

    p = sub.add_parser("propagate", help="seeded label propagation")
    p.add_argument("graph")
    p.add_argument("--seeds", help="CSV node,label")
    _add_overrides(p, ["--output-dir", "--runs", "--seed", "--threads", "--seeds-file"])
    p.set_defaults(func=cmd_propagate)

    p = sub.add_parser("analyze", help="analytics over a pipeline output directory")
    p.add_argument("run_dir")
    _add_overrides(p, ["--bot-scores", "--bot-threshold", "--hist-bin-width",
                       "--series-normalization", "--tracked-communities", "--window-start",
                       "--window-end"])
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("pipeline", help="run every stage end to end")
    _add_overrides(p, list(_OVERRIDES))
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("fpr-bench", help="false-positive rate on the graph's own BiCM ensemble")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--graph")
    src.add_argument("--random", nargs=3, metavar=("N_TOP", "N_BOTTOM", "DENSITY"))
    p.add_argument("--samples", type=int, default=100)
    p.add_argument("--layer", choices=["top", "bottom"], default="top")
    p.add_argument("--full", action="store_true", help="include per-sample fractions")
    p.add_argument("--out")
    _add_overrides(p, ["--alpha", "--fdr-universe", "--seed", "--tolerance"])
    p.set_defaults(func=cmd_fpr_bench)

    p = sub.add_parser("sample", help="draw graphs from a fitted BiCM")
    p.add_argument("fit")
    p.add_argument("--count", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="samples")
    p.set_defaults(func=cmd_sample)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except StageError as exc:
        code = _code(exc.cause)
        if code is None:
            raise
        print(f"semnet: {exc}", file=sys.stderr)
        return code
    except Exception as exc:
        code = _code(exc)
        if code is None:
            raise
        print(f"semnet: {exc}", file=sys.stderr)
        return code


def _code(exc: BaseException) -> int | None:
    if isinstance(exc, ConvergenceError):
        return EXIT_CONVERGENCE
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    if isinstance(exc, (DataError, ValueError, KeyError, OSError)):
        return EXIT_DATA
    return None


if __name__ == "__main__":
    sys.exit(main())
