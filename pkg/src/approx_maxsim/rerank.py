"""Exact late-interaction scoring and the two-stage retrieval pipeline."""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .embed_store import MultiVectorCorpus, QuerySet
from .errors import CorpusMismatch, DimError, NotRankable
from .first_stage import CandidateRanking, Strategy, cut, rank
from .ivfpq import DEFAULT_NPROBE, IvfPqIndex, search_many

DEFAULT_KPRIME = 1000
DEFAULT_FINAL_DEPTH = 1000


@dataclass(frozen=True, eq=False)
class ScoredRun:
    qid: str
    doc_ids: np.ndarray
    scores: np.ndarray

    def __len__(self) -> int:
        return len(self.doc_ids)


@dataclass(frozen=True)
class StageTiming:
    qid: str
    stage1_ms: float
    stage2_ms: float
    candidates: int


@dataclass(frozen=True)
class PipelineConfig:
    """``k=None`` means no cut: Kprime always, or a ranked strategy in full-candidate mode."""

    strategy: Strategy = Strategy.KPRIME
    kprime: int = DEFAULT_KPRIME
    nprobe: int = DEFAULT_NPROBE
    k: int | None = None
    final_depth: int = DEFAULT_FINAL_DEPTH

    def __post_init__(self):
        object.__setattr__(self, "strategy", Strategy(self.strategy))
        if self.strategy is Strategy.KPRIME and self.k is not None:
            raise NotRankable("the Kprime strategy yields a set; its size is controlled by kprime, not k")
        if self.kprime < 1 or self.nprobe < 1 or self.final_depth < 1:
            raise ValueError("kprime, nprobe and final_depth must be >= 1")
        if self.k is not None and self.k < 1:
            raise ValueError("k must be >= 1")


def maxsim_score(q: np.ndarray, d: np.ndarray) -> float:
    """Sum over query rows of the best dot product against any document row (float64)."""
    q = np.asarray(q)
    d = np.asarray(d)
    if q.ndim != 2 or d.ndim != 2 or len(q) == 0 or len(d) == 0:
        raise ValueError("need non-empty (n, dim) and (|d|, dim) matrices")
    if q.shape[1] != d.shape[1]:
        raise DimError(f"query dim {q.shape[1]} != document dim {d.shape[1]}")
    sims = np.asarray(q, dtype=np.float64) @ np.asarray(d, dtype=np.float64).T
    return float(sims.max(axis=1).sum())


def _sort_run(qid: str, docs: np.ndarray, scores: np.ndarray, depth: int) -> ScoredRun:
    order = np.lexsort((docs, -scores))[:depth]
    return ScoredRun(qid, docs[order], scores[order])


def score_docs(corpus: MultiVectorCorpus, q: np.ndarray, doc_ids: Iterable[int]) -> tuple[np.ndarray, np.ndarray]:
    docs = np.asarray(list(doc_ids) if not isinstance(doc_ids, np.ndarray) else doc_ids, dtype=np.int64)
    if docs.size and (docs.min() < 0 or docs.max() >= corpus.num_docs):
        bad = docs[(docs < 0) | (docs >= corpus.num_docs)][0]
        raise CorpusMismatch(f"doc id {bad} not in corpus of {corpus.num_docs} documents")
    q64 = np.asarray(q, dtype=np.float64)
    # one call per document keeps each score independent of its neighbours in the batch
    scores = np.array([maxsim_score(q64, corpus.doc(int(d))) for d in docs], dtype=np.float64)
    return docs, scores


def rerank(
    corpus: MultiVectorCorpus,
    q: np.ndarray,
    candidates: CandidateRanking | Sequence[int],
    final_depth: int = DEFAULT_FINAL_DEPTH,
    qid: str | None = None,
) -> ScoredRun:
    """Exact MaxSim over the candidates; any first-stage scores are ignored."""
    if isinstance(candidates, CandidateRanking):
        qid = candidates.qid if qid is None else qid
        ids = candidates.doc_ids
    else:
        ids = np.asarray(candidates, dtype=np.int64)
    if len(np.unique(ids)) != len(ids):
        raise ValueError("duplicate candidate documents")
    docs, scores = score_docs(corpus, q, ids)
    return _sort_run(qid or "", docs, scores, final_depth)


def brute_force(corpus: MultiVectorCorpus, q: np.ndarray, final_depth: int = DEFAULT_FINAL_DEPTH, qid: str = "") -> ScoredRun:
    return rerank(corpus, q, np.arange(corpus.num_docs), final_depth, qid)


def brute_force_runs(corpus: MultiVectorCorpus, queries: QuerySet, final_depth: int = DEFAULT_FINAL_DEPTH) -> list[ScoredRun]:
    return [brute_force(corpus, queries.query(i), final_depth, queries.qids[i]) for i in range(len(queries))]


def first_stage(
    corpus: MultiVectorCorpus, index: IvfPqIndex, q: np.ndarray, cfg: PipelineConfig, qid: str = ""
) -> CandidateRanking:
    hits = search_many(index, q, cfg.kprime, cfg.nprobe)
    ranking = rank(cfg.strategy, corpus, hits, qid)
    assert len(ranking) <= len(q) * cfg.kprime
    if cfg.k is not None:
        ranking = cut(ranking, cfg.k)
    return ranking


@dataclass
class PipelineResult:
    runs: list[ScoredRun]
    timings: list[StageTiming]
    candidates: list[CandidateRanking]


def _one_query(corpus, index, queries: QuerySet, cfg: PipelineConfig, i: int):
    q = queries.query(i)
    qid = queries.qids[i]
    t0 = time.perf_counter()
    cands = first_stage(corpus, index, q, cfg, qid)
    t1 = time.perf_counter()
    run = rerank(corpus, q, cands, cfg.final_depth)
    t2 = time.perf_counter()
    return run, StageTiming(qid, (t1 - t0) * 1e3, (t2 - t1) * 1e3, len(cands)), cands


def run_pipeline(
    corpus: MultiVectorCorpus,
    index: IvfPqIndex,
    queries: QuerySet,
    cfg: PipelineConfig,
    threads: int = 1,
) -> PipelineResult:
    """ANN search, first-stage ranking/cut, then exact rerank for every query.

    With ``threads > 1`` queries run concurrently; results keep query order.
    """
    if index.dim != corpus.dim or queries.dim != corpus.dim:
        raise DimError(f"dims differ: corpus {corpus.dim}, index {index.dim}, queries {queries.dim}")
    if index.num_embeddings != corpus.num_embeddings:
        raise CorpusMismatch(f"index holds {index.num_embeddings} embeddings, corpus {corpus.num_embeddings}")
    work = range(len(queries))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            out = list(pool.map(lambda i: _one_query(corpus, index, queries, cfg, i), work))
    else:
        out = [_one_query(corpus, index, queries, cfg, i) for i in work]
    return PipelineResult([o[0] for o in out], [o[1] for o in out], [o[2] for o in out])


def first_stage_runs(
    corpus: MultiVectorCorpus, index: IvfPqIndex, queries: QuerySet, cfg: PipelineConfig, threads: int = 1
) -> list[CandidateRanking]:
    """Approximate rankings only (no second stage); Kprime is rejected."""
    if not cfg.strategy.ranked:
        raise NotRankable("a Kprime candidate set has no order to emit as a run")

    def one(i):
        return first_stage(corpus, index, queries.query(i), cfg, queries.qids[i])

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(one, range(len(queries))))
    return [one(i) for i in range(len(queries))]


def write_timings(path, timings: Sequence[StageTiming]) -> None:
    with open(path, "w") as fh:
        fh.write("qid,stage1_ms,stage2_ms,candidates\n")
        for t in timings:
            fh.write(f"{t.qid},{t.stage1_ms:.3f},{t.stage2_ms:.3f},{t.candidates}\n")
