"""ANN recall@10 of the IVFPQ search against exact dot-product top-10.

Sweeps nprobe for several sub-quantizer counts so the effect of code size on
recall can be read off directly.

    python3 scripts/ann_recall.py --m 4 8 16 --nprobe 1 8 64
"""

import argparse

import numpy as np

from approx_maxsim import build_index, search
from approx_maxsim.evaluation.synth import synth


def recall_at_10(index, x, queries, nprobe):
    per = []
    for v in queries:
        exact = np.lexsort((np.arange(len(x)), -(x @ v)))[:10]
        per.append(len(set(exact.tolist()) & set(search(index, v, 10, nprobe).ids.tolist())) / 10)
    return float(np.mean(per))


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--docs", type=int, default=1250)
    ap.add_argument("--doc-len", type=int, default=8)
    ap.add_argument("--dim", type=int, default=16)
    ap.add_argument("--partitions", type=int, default=64)
    ap.add_argument("--k-sub", type=int, default=256)
    ap.add_argument("--m", type=int, nargs="+", default=[4, 8, 16])
    ap.add_argument("--nprobe", type=int, nargs="+", default=[1, 8, 64])
    ap.add_argument("--jitter", type=float, default=1.5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    corpus, queries, _ = synth(num_docs=args.docs, doc_len=args.doc_len, num_queries=20, query_len=4,
                               dim=args.dim, seed=args.seed, jitter=args.jitter)
    x = corpus.embeddings.astype(np.float64)
    print("m\t" + "\t".join(f"nprobe={n}" for n in args.nprobe))
    for m in args.m:
        index = build_index(corpus, nlist=args.partitions, m=m, k_sub=args.k_sub, seed=args.seed)
        vals = [recall_at_10(index, x, queries.embeddings, n) for n in args.nprobe]
        print(f"{m}\t" + "\t".join(f"{v:.4f}" for v in vals))


if __name__ == "__main__":
    main()
