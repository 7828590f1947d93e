import json

import pytest

from semnet.cli import main
from semnet.graphs import (UndirectedGraph, read_bipartite, write_bipartite,
                           write_monopartite)
from semnet.synthetic import heterogeneous_bipartite


def run(argv):
    with pytest.raises(SystemExit) as exc:
        main(argv)
    return exc.value.code


def test_help_shows_provenance(capsys):
    assert run(["pipeline", "--help"]) == 0
    out = " ".join(capsys.readouterr().out.split())
    assert "0.82" in out and "merge threshold" in out
    assert "default: 500" in out


def test_usage_error_exit_code(capsys):
    assert run(["solve"]) == 1
    assert run(["no-such-command"]) == 1


def test_config_error_exit_code(tmp_path):
    assert main(["pipeline", "--records", str(tmp_path / "r.jsonl"), "--alpha", "0"]) == 1
    assert main(["pipeline"]) == 1


def test_data_error_exit_code(tmp_path):
    (tmp_path / "empty.jsonl").write_text("")
    assert main(["normalize", "--records", str(tmp_path / "empty.jsonl"),
                 "--output-dir", str(tmp_path / "o")]) == 2
    assert main(["solve", str(tmp_path / "missing.tsv")]) == 2


def test_convergence_exit_code(tmp_path):
    g = heterogeneous_bipartite(40, 80, 0.1, rng_seed=3)
    write_bipartite(g, tmp_path / "g.tsv")
    assert main(["solve", str(tmp_path / "g.tsv"), "--max-iterations", "1"]) == 3


def test_solve_project_sample_chain(tmp_path, capsys):
    g = heterogeneous_bipartite(30, 60, 0.15, rng_seed=1)
    write_bipartite(g, tmp_path / "g.tsv")
    assert main(["solve", str(tmp_path / "g.tsv"), "--out", str(tmp_path / "fit.json")]) == 0
    fit = json.loads((tmp_path / "fit.json").read_text())
    assert fit["residual"] <= 1e-8
    assert main(["project", str(tmp_path / "g.tsv"), "--fit", str(tmp_path / "fit.json"),
                 "--output-dir", str(tmp_path / "p"), "--alpha", "0.1"]) == 0
    assert (tmp_path / "p" / "validated.tsv").exists()
    assert main(["sample", str(tmp_path / "fit.json"), "--count", "3",
                 "--out", str(tmp_path / "s")]) == 0
    assert read_bipartite(tmp_path / "s" / "sample_0002.tsv").n_top <= 30


def test_solve_monopartite(tmp_path, capsys):
    g = UndirectedGraph.from_pairs([("a", "b"), ("b", "c"), ("c", "d"), ("d", "a")])
    write_monopartite(g, tmp_path / "g.tsv")
    assert main(["solve", "--monopartite", str(tmp_path / "g.tsv")]) == 0
    assert json.loads(capsys.readouterr().out)["residual"] <= 1e-8


def test_communities_and_propagate(tmp_path):
    pairs = [("a", "b"), ("b", "c"), ("a", "c"), ("x", "y"), ("y", "z"), ("x", "z"), ("c", "x")]
    write_monopartite(UndirectedGraph.from_pairs(pairs), tmp_path / "g.tsv")
    assert main(["communities", str(tmp_path / "g.tsv"), "--output-dir", str(tmp_path),
                 "--null-model", "chung-lu"]) == 0
    assert (tmp_path / "partition.csv").read_text().startswith("node,community")
    assert main(["propagate", str(tmp_path / "g.tsv"), "--output-dir", str(tmp_path)]) == 1
    (tmp_path / "seeds.csv").write_text("node,label\na,L\nz,R\n")
    assert main(["propagate", str(tmp_path / "g.tsv"), "--seeds", str(tmp_path / "seeds.csv"),
                 "--runs", "20", "--output-dir", str(tmp_path)]) == 0
    assert "a,L,L,20" in (tmp_path / "labels.csv").read_text()


def test_normalize_reduction(tmp_path):
    rows = [{"tweet_id": str(i), "user_id": "u", "timestamp": "2020-03-25T00:00:00Z",
             "text": "covid-19", "hashtags": [t]}
            for i, t in enumerate(["coronavirus"] * 5 + ["coronaviruses", "lockdown"])]
    (tmp_path / "r.jsonl").write_text("".join(json.dumps(r) + "\n" for r in rows))
    assert main(["normalize", "--records", str(tmp_path / "r.jsonl"),
                 "--output-dir", str(tmp_path / "o")]) == 0
    summary = json.loads((tmp_path / "o" / "normalize_report.json").read_text())
    assert summary["canonical_hashtags"] == 2 and summary["raw_hashtags"] == 3
    assert main(["normalize", "--records", str(tmp_path / "r.jsonl"), "--output-dir",
                 str(tmp_path / "o2"), "--levenshtein-threshold", "1.0"]) == 0
    assert json.loads((tmp_path / "o2" / "normalize_report.json").read_text())["reduction"] == 0.0


def test_fpr_bench_random(tmp_path):
    assert main(["fpr-bench", "--random", "20", "40", "0.2", "--samples", "4",
                 "--out", str(tmp_path / "f.json")]) == 0
    rep = json.loads((tmp_path / "f.json").read_text())
    assert rep["samples"] == 4 and 0.0 <= rep["mean"] <= 1.0
