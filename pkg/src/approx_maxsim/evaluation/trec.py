"""TREC run and qrels files.

Run lines are ``qid Q0 docno rank score tag``; qrels lines are
``qid 0 docno grade``. On load a run is re-sorted by score (descending,
file order on ties) and its rank column is only checked, not trusted.
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Iterable, Union

from ..errors import FormatError

logger = logging.getLogger(__name__)

# qid -> [(docno, score), ...] best first
Run = dict[str, list[tuple[str, float]]]
# qid -> {docno: grade}
Qrels = dict[str, dict[str, int]]


def format_score(score: float) -> str:
    return f"{score:.6f}"


def write_run(path: Union[str, Path], run: Run, tag: str = "approx_maxsim") -> None:
    with open(path, "w") as fh:
        for qid, entries in run.items():
            for r, (docno, score) in enumerate(entries, start=1):
                fh.write(f"{qid} Q0 {docno} {r} {format_score(score)} {tag}\n")


def parse_run(lines: Iterable[str], source: str = "<run>") -> Run:
    raw: dict[str, list[tuple[int, str, float, int]]] = {}
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 6:
            raise FormatError(f"{source}:{lineno}: expected 6 columns, got {len(parts)}")
        qid, _, docno, rank, score, _tag = parts
        try:
            entry = (lineno, docno, float(score), int(rank))
        except ValueError as exc:
            raise FormatError(f"{source}:{lineno}: {exc}") from exc
        raw.setdefault(qid, []).append(entry)
    run: Run = {}
    for qid, entries in raw.items():
        entries.sort(key=lambda e: (-e[2], e[0]))
        seen = set()
        out = []
        for new_rank, (lineno, docno, score, old_rank) in enumerate(entries, start=1):
            if docno in seen:
                raise FormatError(f"{source}:{lineno}: duplicate docno {docno} for query {qid}")
            seen.add(docno)
            if old_rank != new_rank:
                logger.warning("%s:%d: rank %d disagrees with score order (%d)", source, lineno, old_rank, new_rank)
            out.append((docno, score))
        run[qid] = out
    return run


def read_run(path: Union[str, Path]) -> Run:
    with open(path) as fh:
        return parse_run(fh, str(path))


def parse_qrels(lines: Iterable[str], source: str = "<qrels>") -> Qrels:
    qrels: Qrels = {}
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 4:
            raise FormatError(f"{source}:{lineno}: expected 4 columns, got {len(parts)}")
        qid, _, docno, grade = parts
        try:
            g = int(grade)
        except ValueError as exc:
            raise FormatError(f"{source}:{lineno}: bad grade {grade!r}") from exc
        if g < 0:
            raise FormatError(f"{source}:{lineno}: negative grade")
        judged = qrels.setdefault(qid, {})
        if docno in judged:
            logger.warning("%s:%d: duplicate judgement for (%s, %s); keeping the last", source, lineno, qid, docno)
        judged[docno] = g
    return qrels


def read_qrels(path: Union[str, Path]) -> Qrels:
    with open(path) as fh:
        return parse_qrels(fh, str(path))


def write_qrels(path: Union[str, Path], qrels: Qrels) -> None:
    with open(path, "w") as fh:
        for qid, judged in qrels.items():
            for docno, grade in judged.items():
                fh.write(f"{qid} 0 {docno} {grade}\n")


def as_run(docnos, rankings) -> Run:
    """Convert scored rankings (anything with ``qid``, ``doc_ids``, ``scores``) to a :data:`Run`."""
    from ..errors import NotRankable

    run: Run = {}
    for r in rankings:
        if r.scores is None:
            raise NotRankable(f"query {r.qid}: an unordered candidate set cannot be written as a run")
        run[r.qid] = [(docnos[int(d)], float(s)) for d, s in zip(r.doc_ids, r.scores)]
    return run
