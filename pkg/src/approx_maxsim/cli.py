"""Command-line interface.

Exit codes: 0 success, 1 runtime error, 2 usage error. The worker pool size
comes from ``MAXSIM_THREADS`` (default: CPU count); outputs do not depend on it.
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import os
import sys
from pathlib import Path

from . import embed_store, ivfpq
from .errors import Undefined
from .evaluation import metrics as M
from .evaluation import stats, sweep as sw, synth as sy, trec
from .first_stage import Strategy
from .rerank import PipelineConfig, first_stage_runs, run_pipeline, write_timings

logger = logging.getLogger("approx_maxsim")


def _threads() -> int:
    raw = os.environ.get("MAXSIM_THREADS")
    if raw is None:
        return os.cpu_count() or 1
    try:
        n = int(raw)
    except ValueError:
        raise SystemExit(f"error: MAXSIM_THREADS={raw!r} is not an integer") from None
    return max(n, 1)


def _existing(parser: argparse.ArgumentParser, flag: str, path: str | None) -> Path:
    if path is None:
        parser.error(f"{flag} is required")
    p = Path(path)
    if not p.exists():
        parser.error(f"{flag}: no such file: {path}")
    return p


# ---------------------------------------------------------------------------
# subcommands


def cmd_synth(args, parser):
    corpus, queries, qrels = sy.synth(
        args.docs, args.doc_len, args.queries, args.query_len, args.dim, args.clusters, args.seed,
        args.jitter, args.shared_frac,
    )
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    embed_store.save_corpus(corpus, out / "corpus.mvec")
    embed_store.save_queries(queries, out / "queries.mvec")
    trec.write_qrels(out / "qrels.txt", qrels)
    print(f"wrote {corpus.num_docs} docs ({corpus.num_embeddings} embeddings), {len(queries)} queries to {out}")


def cmd_build(args, parser):
    corpus = embed_store.load_corpus(_existing(parser, "--corpus", args.corpus), max_doc_len=args.max_doc_len)
    ix = ivfpq.build_index(
        corpus, args.partitions, args.subquantizers, args.codebook_size, args.train_fraction, args.seed, args.max_iters
    )
    ivfpq.save_index(ix, args.index)
    size = Path(args.index).stat().st_size
    print(f"L={ix.nlist} m={ix.cb.m} k_sub={ix.cb.k_sub} T={ix.num_embeddings} dim={ix.dim} bytes={size}")


def _load_inputs(args, parser):
    corpus = embed_store.load_corpus(_existing(parser, "--corpus", args.corpus), max_doc_len=args.max_doc_len)
    index = ivfpq.load_index(_existing(parser, "--index", args.index))
    queries = embed_store.load_queries(_existing(parser, "--queries", args.queries), max_query_len=args.max_query_len)
    return corpus, index, queries


def cmd_search(args, parser):
    strategy = Strategy(args.strategy)
    if strategy is Strategy.KPRIME and args.k is not None:
        parser.error("--k cannot be used with --strategy kprime: the candidate set is unordered")
    if strategy.ranked and args.k is None and not args.no_cut:
        parser.error(f"--strategy {strategy.value} needs --k (or --no-cut)")
    if args.k is not None and args.no_cut:
        parser.error("--k and --no-cut are mutually exclusive")
    corpus, index, queries = _load_inputs(args, parser)
    cfg = PipelineConfig(strategy, args.kprime, args.nprobe, args.k, args.depth)
    res = run_pipeline(corpus, index, queries, cfg, _threads())
    trec.write_run(args.run_out, trec.as_run(corpus.docnos, res.runs), args.tag)
    if args.timings_out:
        write_timings(args.timings_out, res.timings)
    mean_c = sum(t.candidates for t in res.timings) / max(len(res.timings), 1)
    logger.info("searched %d queries, mean candidates %.1f", len(queries), mean_c)


def cmd_firststage(args, parser):
    strategy = Strategy(args.strategy)
    if not strategy.ranked:
        parser.error("--strategy kprime forms an unordered set and cannot be emitted as a ranking")
    corpus, index, queries = _load_inputs(args, parser)
    cfg = PipelineConfig(strategy, args.kprime, args.nprobe, args.k, args.k)
    rankings = first_stage_runs(corpus, index, queries, cfg, _threads())
    trec.write_run(args.run_out, trec.as_run(corpus.docnos, rankings), args.tag)


def _metric_names(parser, raw: str) -> list[str]:
    names = [n.strip() for n in raw.split(",") if n.strip()]
    bad = [n for n in names if n not in M.METRICS]
    if bad or not names:
        parser.error(f"unknown metric(s) {', '.join(bad) or '(none)'}; valid: {', '.join(M.METRICS)}")
    return names


def cmd_evaluate(args, parser):
    names = _metric_names(parser, args.metrics)
    run = trec.read_run(_existing(parser, "--run", args.run))
    qrels = trec.read_qrels(_existing(parser, "--qrels", args.qrels))
    depth = None if args.mrr_depth == 0 else args.mrr_depth
    reports = {n: M.compute(n, run, qrels, mrr_depth=depth, recall_depth=args.recall_depth) for n in names}
    out = sys.stdout
    for n, rep in reports.items():
        if args.per_query:
            for qid, v in rep.per_query.items():
                out.write(f"{n}\t{qid}\t{v:.6f}\n")
        out.write(f"{n}\tall\t{rep.mean:.6f}\n")
    out.write(f"num_q\tall\t{len(next(iter(reports.values())))}\n")
    out.write(f"excluded_q\tall\t{next(iter(reports.values())).excluded}\n")
    if args.baseline_run:
        base_run = trec.read_run(_existing(parser, "--baseline-run", args.baseline_run))
        for n, rep in reports.items():
            base = M.compute(n, base_run, qrels, mrr_depth=depth, recall_depth=args.recall_depth)
            qids = [q for q in rep.per_query if q in base.per_query]
            if len(qids) < 2:
                logger.warning("%s: fewer than two paired queries; no t-test", n)
                continue
            t, p, p_adj = stats.paired_ttest(
                [rep.per_query[q] for q in qids], [base.per_query[q] for q in qids], len(reports)
            )
            out.write(f"ttest\t{n}\tt={t:.6f}\tp_raw={p:.6g}\tp_adjusted={p_adj:.6g}\n")


def cmd_sweep(args, parser):
    strategy = Strategy(args.strategy)
    grid_spec = args.grid or (sw.KPRIME_GRID if strategy is Strategy.KPRIME else sw.DIRECT_K_GRID)
    try:
        grid = sw.parse_grid(grid_spec)
    except ValueError as exc:
        parser.error(f"--grid: {exc}")
    if args.metric not in M.METRICS:
        parser.error(f"--metric must be one of {', '.join(M.METRICS)}")
    corpus, index, queries = _load_inputs(args, parser)
    qrels = trec.read_qrels(_existing(parser, "--qrels", args.qrels))
    baseline = PipelineConfig(Strategy.KPRIME, args.baseline_kprime, args.nprobe, None, args.depth)
    rows = sw.sweep(
        corpus, index, queries, qrels, strategy, grid, baseline,
        kprime=args.kprime, nprobe=args.nprobe, final_depth=args.depth, test_metric=args.metric,
        mrr_depth=None if args.mrr_depth == 0 else args.mrr_depth,
        threads=_threads() if args.parallel else 1,
    )
    sw.write_sweep_csv(args.out, rows)


def cmd_correlate(args, parser):
    run_a = trec.read_run(_existing(parser, "--run-a", args.run_a))
    run_b = trec.read_run(_existing(parser, "--run-b", args.run_b))
    with open(args.scatter_out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["qid", "docno", "rank_a", "rank_b"])
        for qid, entries in run_a.items():
            rank_b = {d: r for r, (d, _) in enumerate(run_b.get(qid, []), start=1)}
            pairs = [(d, ra, rank_b[d]) for ra, (d, _) in enumerate(entries, start=1) if d in rank_b]
            for d, ra, rb in pairs:
                w.writerow([qid, d, ra, rb])
            try:
                rho = stats.spearman([p[1] for p in pairs], [p[2] for p in pairs])
            except Undefined:
                logger.warning("query %s: %d shared documents; Spearman undefined", qid, len(pairs))
                rho = math.nan
            print(f"{qid}\t{rho:.6f}\t{len(pairs)}")


# ---------------------------------------------------------------------------


def _add_inputs(p):
    p.add_argument("--corpus", required=True)
    p.add_argument("--index", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--kprime", type=int, default=1000)
    p.add_argument("--nprobe", type=int, default=ivfpq.DEFAULT_NPROBE)
    p.add_argument("--max-doc-len", type=int, default=embed_store.MAX_DOC_LEN)
    p.add_argument("--max-query-len", type=int, default=embed_store.MAX_QUERY_LEN)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="approx-maxsim", description="Two-stage multi-vector dense retrieval.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    strategies = [s.value for s in Strategy]

    p = sub.add_parser("synth", help="generate a synthetic workload")
    p.add_argument("--docs", type=int, default=1000)
    p.add_argument("--doc-len", type=int, default=8)
    p.add_argument("--queries", type=int, default=50)
    p.add_argument("--query-len", type=int, default=4)
    p.add_argument("--dim", type=int, default=32)
    p.add_argument("--clusters", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jitter", type=float, default=1.5)
    p.add_argument("--shared-frac", type=float, default=0.25)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("build", help="build an IVFPQ index over a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--index", required=True)
    p.add_argument("--partitions", type=int, default=None, help="L (default: 4*sqrt(T) as a power of two)")
    p.add_argument("--subquantizers", type=int, default=ivfpq.DEFAULT_M)
    p.add_argument("--codebook-size", type=int, default=ivfpq.DEFAULT_K_SUB)
    p.add_argument("--train-fraction", type=float, default=ivfpq.DEFAULT_TRAIN_FRACTION)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-iters", type=int, default=25)
    p.add_argument("--max-doc-len", type=int, default=embed_store.MAX_DOC_LEN)
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("search", help="end-to-end two-stage retrieval")
    _add_inputs(p)
    p.add_argument("--strategy", choices=strategies, default="kprime")
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--no-cut", action="store_true")
    p.add_argument("--depth", type=int, default=1000)
    p.add_argument("--run-out", required=True)
    p.add_argument("--timings-out", default=None)
    p.add_argument("--tag", default="approx_maxsim")
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("firststage", help="approximate ranking only, no exact rerank")
    _add_inputs(p)
    p.add_argument("--strategy", choices=strategies, required=True)
    p.add_argument("--k", type=int, default=1000)
    p.add_argument("--run-out", required=True)
    p.add_argument("--tag", default="approx_first_stage")
    p.set_defaults(func=cmd_firststage)

    p = sub.add_parser("evaluate", help="score a run against qrels")
    p.add_argument("--run", required=True)
    p.add_argument("--qrels", required=True)
    p.add_argument("--metrics", default=",".join(M.METRICS))
    p.add_argument("--recall-depth", type=int, default=1000)
    p.add_argument("--mrr-depth", type=int, default=10, help="0 = unbounded")
    p.add_argument("--baseline-run", default=None)
    p.add_argument("--per-query", action="store_true")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", help="vary k (or k') and test each point against a baseline")
    _add_inputs(p)
    p.add_argument("--qrels", required=True)
    p.add_argument("--strategy", choices=strategies, required=True)
    p.add_argument("--grid", default=None, help="e.g. '10,20,50,100:1000:100' (inclusive stop)")
    p.add_argument("--baseline-kprime", type=int, default=1000)
    p.add_argument("--depth", type=int, default=1000)
    p.add_argument("--metric", default="ndcg10", help="metric used for the significance test")
    p.add_argument("--mrr-depth", type=int, default=10, help="0 = unbounded")
    p.add_argument("--parallel", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("correlate", help="rank scatter and Spearman rho between two runs")
    p.add_argument("--run-a", required=True)
    p.add_argument("--run-b", required=True)
    p.add_argument("--scatter-out", required=True)
    p.set_defaults(func=cmd_correlate)
    return ap


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr, level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s"
    )
    sub = parser._subparsers._group_actions[0].choices[args.command]
    try:
        args.func(args, sub)
    except SystemExit:
        raise
    except Exception as exc:  # single-line diagnostic, exit 1
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
