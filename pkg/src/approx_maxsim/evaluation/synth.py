"""Synthetic multi-vector workloads with planted relevance.

Topic centres are random unit vectors; one extra centre plays the part of
very common tokens that every text contains. Document ``i`` belongs to topic
``i % clusters`` and query ``j`` to topic ``j % clusters``; a query's
relevant documents are exactly those of its topic.
"""

from __future__ import annotations

import numpy as np

from ..embed_store import MultiVectorCorpus, QuerySet, from_matrices
from .trec import Qrels


def _unit(x: np.ndarray) -> np.ndarray:
    return x / np.linalg.norm(x, axis=-1, keepdims=True)


def _tokens(rng, topic_center, shared_center, length, shared_frac, jitter, dim):
    n_shared = min(int(round(length * shared_frac)), length - 1)
    centers = np.vstack([np.repeat(topic_center[None], length - n_shared, 0), np.repeat(shared_center[None], n_shared, 0)])
    noise = rng.standard_normal((length, dim)) * (jitter / np.sqrt(dim))
    return _unit(centers + noise).astype(np.float32)


def synth(
    num_docs: int = 1000,
    doc_len: int = 8,
    num_queries: int = 50,
    query_len: int = 4,
    dim: int = 32,
    clusters: int = 8,
    seed: int = 0,
    jitter: float = 1.5,
    shared_frac: float = 0.25,
) -> tuple[MultiVectorCorpus, QuerySet, Qrels]:
    if min(num_docs, doc_len, num_queries, query_len, dim, clusters) < 1:
        raise ValueError("all counts must be >= 1")
    rng = np.random.default_rng(seed)
    centers = _unit(rng.standard_normal((clusters + 1, dim)))
    topics, shared = centers[:clusters], centers[clusters]

    docs = [_tokens(rng, topics[i % clusters], shared, doc_len, shared_frac, jitter, dim) for i in range(num_docs)]
    queries = [
        _tokens(rng, topics[j % clusters], shared, query_len, shared_frac, jitter, dim) for j in range(num_queries)
    ]
    docnos = [f"D{i}" for i in range(num_docs)]
    qids = [f"Q{j}" for j in range(num_queries)]
    qrels: Qrels = {
        qids[j]: {docnos[i]: 1 for i in range(j % clusters, num_docs, clusters)} for j in range(num_queries)
    }
    corpus = from_matrices(docs, docnos, kind="corpus")
    qs = from_matrices(queries, qids, kind="queries")
    return corpus, qs, qrels
