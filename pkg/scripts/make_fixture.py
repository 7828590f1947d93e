"""Regenerate the shipped synthetic fixture under tests/data/."""
import argparse
from pathlib import Path

from semnet.synthetic import synthetic_bot_scores, synthetic_records, write_fixture


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default=str(Path(__file__).resolve().parents[1] / "tests" / "data"))
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    recs = synthetic_records(rng_seed=args.seed)
    write_fixture(recs, out / "fixture_records.jsonl")
    scores = synthetic_bot_scores(recs, rng_seed=args.seed)
    with open(out / "bot_scores.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("user_id,score\n")
        for u, s in scores.items():
            fh.write(f"{u},{s}\n")
    cfg = out / "fixture.toml"
    cfg.write_text(
        "[input]\n"
        'records = "fixture_records.jsonl"\n'
        'bot_scores = "bot_scores.csv"\n'
        "\n[projection]\nalpha = 0.05\n"
        "\n[communities]\nseed = 42\ntracked_communities = 3\n"
        "\n[propagation]\nlp_runs = 500\n",
        encoding="utf-8")
    print(f"wrote {len(recs)} records, {len(scores)} scores to {out}")


if __name__ == "__main__":
    main()
