"""Run/qrels I/O, effectiveness metrics, significance testing, sweeps and synthetic workloads."""

from .metrics import MetricReport, average_precision, mrr, ndcg, recall_at
from .stats import paired_ttest, spearman
from .trec import Qrels, Run, read_qrels, read_run, write_qrels, write_run

__all__ = [
    "MetricReport",
    "Qrels",
    "Run",
    "average_precision",
    "mrr",
    "ndcg",
    "paired_ttest",
    "read_qrels",
    "read_run",
    "recall_at",
    "spearman",
    "write_qrels",
    "write_run",
]
