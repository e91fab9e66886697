"""Candidate documents from per-query-embedding ANN hits, and the four ways to rank them.

* ``KPRIME``: the union of hit documents, unordered.
* ``COUNT``: how many retrieved embeddings map to the document (every occurrence counts).
* ``SUMSIM``: sum of the approximate similarities of those embeddings.
* ``MAXSIM``: per query embedding, the best approximate similarity among the
  document's retrieved embeddings, summed over query embeddings. A query
  embedding that retrieved nothing from the document adds 0.

Ranked outputs order by score descending, then internal doc id ascending.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .embed_store import MultiVectorCorpus
from .errors import NotRankable
from .ivfpq import EmbeddingHitList


class Strategy(str, enum.Enum):
    KPRIME = "kprime"
    COUNT = "count"
    SUMSIM = "sumsim"
    MAXSIM = "maxsim"

    @property
    def ranked(self) -> bool:
        return self is not Strategy.KPRIME


@dataclass(frozen=True, eq=False)
class CandidateRanking:
    qid: str
    strategy: Strategy
    doc_ids: np.ndarray
    scores: np.ndarray | None  # None for the Kprime set

    def __len__(self) -> int:
        return len(self.doc_ids)

    @property
    def ranked(self) -> bool:
        return self.strategy.ranked


def _flatten(corpus: MultiVectorCorpus, hits: Sequence[EmbeddingHitList]):
    """(query-embedding index, doc id, approx sim) for every hit, in hit-list order."""
    if not hits:
        empty = np.empty(0, dtype=np.int64)
        return empty, empty, np.empty(0)
    qi = np.concatenate([np.full(len(h), i, dtype=np.int64) for i, h in enumerate(hits)])
    ids = np.concatenate([np.asarray(h.ids, dtype=np.int64) for h in hits])
    sims = np.concatenate([np.asarray(h.sims, dtype=np.float64) for h in hits])
    for h in hits:
        assert len(np.unique(h.ids)) == len(h.ids), "duplicate embedding in a hit list"
    docs = corpus.emb_to_doc[ids].astype(np.int64)
    return qi, docs, sims


def candidate_sets(
    corpus: MultiVectorCorpus, hits: Sequence[EmbeddingHitList]
) -> tuple[list[np.ndarray], np.ndarray]:
    """Per-query-embedding document sets and their union, each as a sorted id array."""
    per = [np.unique(corpus.emb_to_doc[np.asarray(h.ids, dtype=np.int64)]).astype(np.int64) for h in hits]
    union = np.unique(np.concatenate(per)) if per else np.empty(0, dtype=np.int64)
    return per, union.astype(np.int64)


def _ranked(qid: str, strategy: Strategy, docs: np.ndarray, scores: np.ndarray) -> CandidateRanking:
    order = np.lexsort((docs, -scores))
    return CandidateRanking(qid, strategy, docs[order], scores[order])


def rank_count(corpus: MultiVectorCorpus, hits: Sequence[EmbeddingHitList], qid: str = "") -> CandidateRanking:
    _, docs, _ = _flatten(corpus, hits)
    u, counts = np.unique(docs, return_counts=True)
    return _ranked(qid, Strategy.COUNT, u, counts.astype(np.float64))


def rank_sumsim(corpus: MultiVectorCorpus, hits: Sequence[EmbeddingHitList], qid: str = "") -> CandidateRanking:
    _, docs, sims = _flatten(corpus, hits)
    u, inv = np.unique(docs, return_inverse=True)
    # bincount accumulates in input order, so the sum is deterministic
    return _ranked(qid, Strategy.SUMSIM, u, np.bincount(inv, weights=sims, minlength=len(u)))


def rank_maxsim(corpus: MultiVectorCorpus, hits: Sequence[EmbeddingHitList], qid: str = "") -> CandidateRanking:
    qi, docs, sims = _flatten(corpus, hits)
    u, inv = np.unique(docs, return_inverse=True)
    best = np.full((len(hits), len(u)), -np.inf)
    np.maximum.at(best, (qi, inv), sims)
    best[np.isneginf(best)] = 0.0
    return _ranked(qid, Strategy.MAXSIM, u, best.sum(axis=0))


def kprime_set(corpus: MultiVectorCorpus, hits: Sequence[EmbeddingHitList], qid: str = "") -> CandidateRanking:
    _, union = candidate_sets(corpus, hits)
    return CandidateRanking(qid, Strategy.KPRIME, union, None)


_RANKERS = {
    Strategy.KPRIME: kprime_set,
    Strategy.COUNT: rank_count,
    Strategy.SUMSIM: rank_sumsim,
    Strategy.MAXSIM: rank_maxsim,
}


def rank(strategy: Strategy | str, corpus: MultiVectorCorpus, hits, qid: str = "") -> CandidateRanking:
    return _RANKERS[Strategy(strategy)](corpus, hits, qid)


def cut(r: CandidateRanking, k: int) -> CandidateRanking:
    """Keep the first ``k`` entries of a ranked strategy."""
    if not r.ranked:
        raise NotRankable("a Kprime candidate set is unordered and cannot be cut")
    if k < 0:
        raise ValueError("k must be >= 0")
    return CandidateRanking(r.qid, r.strategy, r.doc_ids[:k], r.scores[:k])
