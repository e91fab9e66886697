"""Effectiveness/efficiency sweeps over the candidate-set size.

For Kprime the grid varies k'; for the ranked strategies it varies the
cutoff k. Every grid point is compared with a baseline configuration by a
paired t-test on one chosen metric, Bonferroni-corrected by the grid size.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from typing import Sequence

from ..first_stage import Strategy
from ..rerank import PipelineConfig, run_pipeline
from .metrics import compute
from .stats import paired_ttest
from .trec import Qrels, as_run

KPRIME_GRID = "1:10:1,10:50:10,100:1000:100"
DIRECT_K_GRID = "10,20,50,100:1000:100,1000:5000:500"
CSV_HEADER = (
    "k", "mean_candidates", "mrr", "ndcg10", "map", "recall", "p_adjusted", "significant",
    "stage1_ms", "stage2_ms",
)


def parse_grid(spec: str) -> list[int]:
    """Parse ``a,b,start:stop:step`` (inclusive stop) into sorted unique integers."""
    values: set[int] = set()
    for part in spec.split(","):
        part = part.strip()
        if not part:
            continue
        if ":" in part:
            bits = part.split(":")
            if len(bits) != 3:
                raise ValueError(f"bad range {part!r}; expected start:stop:step")
            start, stop, step = (int(b) for b in bits)
            if step <= 0 or stop < start:
                raise ValueError(f"bad range {part!r}")
            values.update(range(start, stop + 1, step))
        else:
            values.add(int(part))
    if not values or min(values) < 1:
        raise ValueError(f"grid {spec!r} must hold positive integers")
    return sorted(values)


@dataclass
class SweepRow:
    k: int
    mean_candidates: float
    mrr: float
    ndcg10: float
    map: float
    recall: float
    p_adjusted: float
    significant: bool
    stage1_ms: float | None = None  # None when grid points ran with threads > 1
    stage2_ms: float | None = None


def _scores(run, qrels, mrr_depth, recall_depth):
    return {
        name: compute(name, run, qrels, mrr_depth=mrr_depth, recall_depth=recall_depth)
        for name in ("mrr", "ndcg10", "map", "recall")
    }


def sweep(
    corpus,
    index,
    queries,
    qrels: Qrels,
    strategy: Strategy | str,
    grid: Sequence[int],
    baseline: PipelineConfig | None = None,
    *,
    kprime: int = 1000,
    nprobe: int = 10,
    final_depth: int = 1000,
    test_metric: str = "ndcg10",
    mrr_depth: int | None = 10,
    alpha: float = 0.05,
    threads: int = 1,
) -> list[SweepRow]:
    """One pipeline run per grid point, each tested against ``baseline``.

    ``recall`` is measured over the whole final run (depth ``final_depth``).
    Mean per-query stage timings are reported only for single-threaded
    sweeps, since concurrent queries would distort them.
    """
    strategy = Strategy(strategy)
    baseline = baseline or PipelineConfig(Strategy.KPRIME, kprime, nprobe, None, final_depth)
    base_res = run_pipeline(corpus, index, queries, baseline, threads)
    base = _scores(as_run(corpus.docnos, base_res.runs), qrels, mrr_depth, final_depth)[test_metric]

    rows = []
    for g in grid:
        if strategy is Strategy.KPRIME:
            cfg = PipelineConfig(strategy, g, nprobe, None, final_depth)
        else:
            cfg = PipelineConfig(strategy, kprime, nprobe, g, final_depth)
        res = run_pipeline(corpus, index, queries, cfg, threads)
        scores = _scores(as_run(corpus.docnos, res.runs), qrels, mrr_depth, final_depth)
        tested = scores[test_metric]
        qids = [q for q in tested.per_query if q in base.per_query]
        if len(qids) >= 2:
            _, _, p_adj = paired_ttest(
                [tested.per_query[q] for q in qids], [base.per_query[q] for q in qids], len(grid)
            )
        else:
            p_adj = float("nan")
        n = max(len(res.timings), 1)
        timed = threads <= 1
        rows.append(
            SweepRow(
                k=g,
                mean_candidates=sum(t.candidates for t in res.timings) / n,
                mrr=scores["mrr"].mean,
                ndcg10=scores["ndcg10"].mean,
                map=scores["map"].mean,
                recall=scores["recall"].mean,
                p_adjusted=p_adj,
                significant=bool(p_adj < alpha),
                stage1_ms=sum(t.stage1_ms for t in res.timings) / n if timed else None,
                stage2_ms=sum(t.stage2_ms for t in res.timings) / n if timed else None,
            )
        )
    return rows


def write_sweep_csv(path, rows: Sequence[SweepRow]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_HEADER)
        for r in rows:
            w.writerow(
                [r.k, f"{r.mean_candidates:.2f}", f"{r.mrr:.6f}", f"{r.ndcg10:.6f}", f"{r.map:.6f}",
                 f"{r.recall:.6f}", f"{r.p_adjusted:.6g}", int(r.significant),
                 "" if r.stage1_ms is None else f"{r.stage1_ms:.3f}",
                 "" if r.stage2_ms is None else f"{r.stage2_ms:.3f}"]
            )
