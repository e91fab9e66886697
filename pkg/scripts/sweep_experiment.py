"""Candidate-set size sweeps on a synthetic workload.

Builds one index, then sweeps k' for the Kprime set and the cutoff k for the
three ranked strategies. Each grid point is tested against the uncut Kprime
pipeline. One CSV per strategy lands in ``--out-dir``.

    python3 scripts/sweep_experiment.py --out-dir results/sweep
"""

import argparse
from pathlib import Path

from approx_maxsim import PipelineConfig, build_index
from approx_maxsim.evaluation.sweep import parse_grid, sweep, write_sweep_csv
from approx_maxsim.evaluation.synth import synth


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--docs", type=int, default=1000)
    ap.add_argument("--queries", type=int, default=50)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--kprime", type=int, default=1000)
    ap.add_argument("--nprobe", type=int, default=10)
    ap.add_argument("--kprime-grid", default="1:10:1,10:50:10,100:1000:100")
    ap.add_argument("--k-grid", default="10,20,50,100:1000:100")
    ap.add_argument("--out-dir", required=True)
    args = ap.parse_args()

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    corpus, queries, qrels = synth(num_docs=args.docs, num_queries=args.queries, seed=args.seed)
    index = build_index(corpus, seed=args.seed)
    baseline = PipelineConfig("kprime", args.kprime, args.nprobe)
    print(f"{corpus.num_docs} docs, {corpus.num_embeddings} embeddings, L={index.nlist}")

    plans = [("kprime", args.kprime_grid)] + [(s, args.k_grid) for s in ("count", "sumsim", "maxsim")]
    for strategy, spec in plans:
        grid = [g for g in parse_grid(spec) if strategy == "kprime" or g <= corpus.num_docs]
        rows = sweep(corpus, index, queries, qrels, strategy, grid, baseline,
                     kprime=args.kprime, nprobe=args.nprobe)
        write_sweep_csv(out / f"{strategy}.csv", rows)
        best = max(rows, key=lambda r: r.ndcg10)
        print(f"{strategy:7s} {len(rows)} points, best ndcg10 {best.ndcg10:.4f} at {best.k}")


if __name__ == "__main__":
    main()
