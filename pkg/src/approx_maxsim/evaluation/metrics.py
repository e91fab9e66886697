"""Per-query effectiveness metrics over TREC-style runs.

Only queries with at least one relevant (grade >= 1) judgement are scored;
the others are counted in ``MetricReport.excluded`` and left out of the mean.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .trec import Qrels, Run


@dataclass
class MetricReport:
    name: str
    per_query: dict[str, float] = field(default_factory=dict)
    excluded: int = 0

    @property
    def mean(self) -> float:
        if not self.per_query:
            return 0.0
        return math.fsum(self.per_query.values()) / len(self.per_query)

    def __len__(self) -> int:
        return len(self.per_query)


def _judged(run: Run, qrels: Qrels, name: str, fn) -> MetricReport:
    report = MetricReport(name)
    for qid, ranked in run.items():
        judged = qrels.get(qid, {})
        relevant = {d for d, g in judged.items() if g >= 1}
        if not relevant:
            report.excluded += 1
            continue
        report.per_query[qid] = fn([d for d, _ in ranked], judged, relevant)
    return report


def mrr(run: Run, qrels: Qrels, depth: int | None = 10) -> MetricReport:
    """Reciprocal rank of the first relevant document within ``depth`` (``None`` = unbounded)."""

    def rr(docs, judged, relevant):
        for r, d in enumerate(docs[:depth] if depth is not None else docs, start=1):
            if d in relevant:
                return 1.0 / r
        return 0.0

    return _judged(run, qrels, "mrr" if depth is None else f"mrr@{depth}", rr)


def ndcg(run: Run, qrels: Qrels, depth: int = 10) -> MetricReport:
    """NDCG with gain ``2**grade - 1`` and discount ``log2(rank + 1)``; ideal ordering from the qrels."""

    def value(docs, judged, relevant):
        dcg = math.fsum((2 ** judged.get(d, 0) - 1) / math.log2(r + 1) for r, d in enumerate(docs[:depth], start=1))
        ideal = sorted((g for g in judged.values() if g > 0), reverse=True)[:depth]
        idcg = math.fsum((2**g - 1) / math.log2(r + 1) for r, g in enumerate(ideal, start=1))
        return dcg / idcg

    return _judged(run, qrels, f"ndcg@{depth}", value)


def average_precision(run: Run, qrels: Qrels) -> MetricReport:
    """Per-query AP over the full run; the report mean is MAP."""

    def ap(docs, judged, relevant):
        hits = 0
        total = 0.0
        for r, d in enumerate(docs, start=1):
            if d in relevant:
                hits += 1
                total += hits / r
        return total / len(relevant)

    return _judged(run, qrels, "map", ap)


def recall_at(run: Run, qrels: Qrels, k: int) -> MetricReport:
    def rec(docs, judged, relevant):
        return len(relevant.intersection(docs[: max(k, 0)])) / len(relevant)

    return _judged(run, qrels, f"recall@{k}", rec)


METRICS = ("mrr", "ndcg10", "map", "recall")


def compute(name: str, run: Run, qrels: Qrels, *, mrr_depth: int | None = 10, recall_depth: int = 1000) -> MetricReport:
    if name == "mrr":
        return mrr(run, qrels, mrr_depth)
    if name == "ndcg10":
        return ndcg(run, qrels, 10)
    if name == "map":
        return average_precision(run, qrels)
    if name == "recall":
        return recall_at(run, qrels, recall_depth)
    raise ValueError(f"unknown metric {name!r}; valid: {', '.join(METRICS)}")
