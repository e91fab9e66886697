"""How well does each first-stage ranking agree with exact MaxSim?

For every query, the first-stage ranking (no rerank) and the exact rerank of
the same candidates are compared with Spearman's rho over the shared
documents. Mean rho and NDCG@10 of the approximate ranking are printed per
strategy.

    python3 scripts/first_stage_agreement.py --kprime 100
"""

import argparse
import math

import numpy as np

from approx_maxsim import PipelineConfig, build_index, rerank
from approx_maxsim.errors import Undefined
from approx_maxsim.evaluation import metrics as M
from approx_maxsim.evaluation import trec
from approx_maxsim.evaluation.stats import spearman
from approx_maxsim.evaluation.synth import synth
from approx_maxsim.rerank import first_stage_runs


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--docs", type=int, default=1000)
    ap.add_argument("--queries", type=int, default=50)
    ap.add_argument("--kprime", type=int, default=100)
    ap.add_argument("--nprobe", type=int, default=10)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    corpus, queries, qrels = synth(num_docs=args.docs, num_queries=args.queries, seed=args.seed)
    index = build_index(corpus, seed=args.seed)
    print("strategy\tmean_rho\tndcg10_approx\tndcg10_reranked")
    for strategy in ("count", "sumsim", "maxsim"):
        cfg = PipelineConfig(strategy, args.kprime, args.nprobe, k=corpus.num_docs, final_depth=corpus.num_docs)
        approx = first_stage_runs(corpus, index, queries, cfg)
        exact = [rerank(corpus, queries.query(i), r, corpus.num_docs) for i, r in enumerate(approx)]
        rhos = []
        for a, e in zip(approx, exact):
            pos = {d: r for r, d in enumerate(e.doc_ids.tolist())}
            try:
                rhos.append(spearman(list(range(len(a))), [pos[d] for d in a.doc_ids.tolist()]))
            except Undefined:
                pass
        nd_a = M.ndcg(trec.as_run(corpus.docnos, approx), qrels).mean
        nd_e = M.ndcg(trec.as_run(corpus.docnos, exact), qrels).mean
        rho = float(np.mean(rhos)) if rhos else math.nan
        print(f"{strategy}\t{rho:.4f}\t{nd_a:.4f}\t{nd_e:.4f}")


if __name__ == "__main__":
    main()
