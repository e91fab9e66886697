"""Token-embedding storage for documents and queries.

Embeddings live in one flat float32 matrix; ``offsets`` slices it into
per-document (or per-query) blocks. The on-disk layout is::

    "MVEC" | version u32 | dim u32 | num_records u64
    then per record: record_len u32 | record_len * dim float32

all little-endian, paired with a ``<internal_id>\\t<external_id>`` TSV.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from .errors import FormatError, OutOfRange

logger = logging.getLogger(__name__)

MAGIC = b"MVEC"
VERSION = 1
_HEADER = struct.Struct("<4sIIQ")
_U32 = struct.Struct("<I")

MAX_DOC_LEN = 180
MAX_QUERY_LEN = 32
_UNIT_TOL = 1e-6
_ZERO_TOL = 1e-12


def _freeze(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


def _check_ids(ids: Sequence[str], n: int, what: str) -> tuple[str, ...]:
    ids = tuple(ids)
    if len(ids) != n:
        raise ValueError(f"expected {n} {what}, got {len(ids)}")
    if len(set(ids)) != n:
        raise ValueError(f"{what} must be unique")
    for s in ids:
        if not s or any(c.isspace() for c in s):
            raise ValueError(f"invalid {what[:-1]} {s!r}: must be non-empty and whitespace-free")
    return ids


@dataclass(frozen=True, eq=False)
class _MultiVectorSet:
    embeddings: np.ndarray
    offsets: np.ndarray

    def __post_init__(self):
        emb = np.ascontiguousarray(self.embeddings, dtype=np.float32)
        if emb.ndim != 2 or emb.shape[1] == 0:
            raise ValueError("embeddings must be a (T, dim) matrix with dim >= 1")
        off = np.asarray(self.offsets, dtype=np.int64)
        if off.ndim != 1 or len(off) < 1 or off[0] != 0 or off[-1] != emb.shape[0]:
            raise ValueError("offsets must start at 0 and end at T")
        if np.any(np.diff(off) <= 0):
            raise ValueError("every record must hold at least one embedding")
        object.__setattr__(self, "embeddings", _freeze(emb))
        object.__setattr__(self, "offsets", _freeze(off))

    @property
    def dim(self) -> int:
        return int(self.embeddings.shape[1])

    @property
    def num_embeddings(self) -> int:
        return int(self.embeddings.shape[0])

    def __len__(self) -> int:
        return len(self.offsets) - 1

    def lengths(self) -> np.ndarray:
        return np.diff(self.offsets)

    def matrix(self, i: int) -> np.ndarray:
        return self.embeddings[self.offsets[i] : self.offsets[i + 1]]


@dataclass(frozen=True, eq=False)
class MultiVectorCorpus(_MultiVectorSet):
    """Documents as blocks of token embeddings.

    ``doc_offsets[d]:doc_offsets[d+1]`` are the embedding ids owned by
    internal doc ``d``; ``emb_to_doc`` is the precomputed inverse map.
    """

    docnos: tuple[str, ...] = ()
    emb_to_doc: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        super().__post_init__()
        docnos = self.docnos or tuple(str(i) for i in range(len(self)))
        object.__setattr__(self, "docnos", _check_ids(docnos, len(self), "docnos"))
        lookup = np.repeat(np.arange(len(self), dtype=np.uint32), self.lengths())
        object.__setattr__(self, "emb_to_doc", _freeze(lookup))

    @property
    def doc_offsets(self) -> np.ndarray:
        return self.offsets

    @property
    def num_docs(self) -> int:
        return len(self)

    def doc(self, d: int) -> np.ndarray:
        return self.matrix(d)


@dataclass(frozen=True, eq=False)
class QuerySet(_MultiVectorSet):
    qids: tuple[str, ...] = ()

    def __post_init__(self):
        super().__post_init__()
        qids = self.qids or tuple(str(i) for i in range(len(self)))
        object.__setattr__(self, "qids", _check_ids(qids, len(self), "qids"))

    def query(self, i: int) -> np.ndarray:
        return self.matrix(i)


def from_matrices(
    mats: Sequence[np.ndarray], ids: Sequence[str] | None = None, *, kind: str = "corpus"
) -> Union[MultiVectorCorpus, QuerySet]:
    """Build a corpus (``kind="corpus"``) or query set from per-record matrices."""
    mats = [np.asarray(m, dtype=np.float32) for m in mats]
    if not mats:
        raise ValueError("need at least one record")
    offsets = np.concatenate([[0], np.cumsum([len(m) for m in mats])])
    emb = np.concatenate(mats, axis=0)
    if kind == "corpus":
        return MultiVectorCorpus(emb, offsets, tuple(ids or ()))
    return QuerySet(emb, offsets, tuple(ids or ()))


def embedding_to_doc(corpus: MultiVectorCorpus, e: int) -> int:
    if not 0 <= e < corpus.num_embeddings:
        raise OutOfRange(f"embedding id {e} outside 0..{corpus.num_embeddings - 1}")
    return int(corpus.emb_to_doc[e])


def normalize_rows(x: np.ndarray) -> tuple[np.ndarray, int]:
    """Scale rows to unit L2 norm.

    Rows already within 1e-6 of unit norm are copied through untouched, which
    makes the operation exactly idempotent. Rows with norm below 1e-12 are
    left as they are and counted.
    """
    x = np.asarray(x, dtype=np.float32)
    norms = np.linalg.norm(x.astype(np.float64), axis=1)
    degenerate = norms < _ZERO_TOL
    scale = (~degenerate) & (np.abs(norms - 1.0) > _UNIT_TOL)
    out = x.copy()
    out[scale] = (x[scale] / norms[scale, None]).astype(np.float32)
    return out, int(degenerate.sum())


def normalize(obj):
    """Unit-normalize a matrix, corpus or query set; returns ``(result, n_degenerate)``."""
    if isinstance(obj, MultiVectorCorpus):
        emb, bad = normalize_rows(obj.embeddings)
        out = MultiVectorCorpus(emb, obj.offsets, obj.docnos)
    elif isinstance(obj, QuerySet):
        emb, bad = normalize_rows(obj.embeddings)
        out = QuerySet(emb, obj.offsets, obj.qids)
    else:
        out, bad = normalize_rows(obj)
    if bad:
        logger.warning("%d zero-norm rows left unnormalized", bad)
    return out, bad


# ---------------------------------------------------------------------------
# file I/O


def ids_path_for(path: Union[str, Path]) -> Path:
    return Path(path).with_suffix(".tsv")


def write_vectors(path: Union[str, Path], vs: _MultiVectorSet) -> None:
    parts = [_HEADER.pack(MAGIC, VERSION, vs.dim, len(vs))]
    for i in range(len(vs)):
        m = vs.matrix(i)
        parts.append(_U32.pack(len(m)))
        parts.append(m.astype("<f4", copy=False).tobytes())
    Path(path).write_bytes(b"".join(parts))


def read_vectors(path: Union[str, Path]) -> tuple[np.ndarray, np.ndarray]:
    """Parse an MVEC file into ``(embeddings, offsets)``."""
    buf = Path(path).read_bytes()
    if len(buf) < _HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, version, dim, n = _HEADER.unpack_from(buf, 0)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version} (supported: {VERSION})")
    if dim == 0:
        raise FormatError(f"{path}: dim must be positive")
    pos = _HEADER.size
    lengths = np.empty(n, dtype=np.int64)
    starts = np.empty(n, dtype=np.int64)
    rec_bytes = 4 * dim
    for i in range(n):
        if pos + 4 > len(buf):
            raise FormatError(f"{path}: truncated at record {i}")
        (ln,) = _U32.unpack_from(buf, pos)
        if ln == 0:
            raise FormatError(f"{path}: record {i} is empty")
        pos += 4
        starts[i] = pos
        lengths[i] = ln
        pos += ln * rec_bytes
        if pos > len(buf):
            raise FormatError(f"{path}: truncated payload in record {i}")
    if pos != len(buf):
        raise FormatError(f"{path}: {len(buf) - pos} trailing bytes")
    total = int(lengths.sum())
    emb = np.empty((total, dim), dtype=np.float32)
    offsets = np.concatenate([[0], np.cumsum(lengths)]).astype(np.int64)
    for i in range(n):
        emb[offsets[i] : offsets[i + 1]] = np.frombuffer(
            buf, dtype="<f4", count=int(lengths[i]) * dim, offset=int(starts[i])
        ).reshape(-1, dim)
    return emb, offsets


def write_ids(path: Union[str, Path], ids: Sequence[str]) -> None:
    Path(path).write_text("".join(f"{i}\t{s}\n" for i, s in enumerate(ids)))


def read_ids(path: Union[str, Path], n: int) -> tuple[str, ...]:
    out = []
    for lineno, line in enumerate(Path(path).read_text().splitlines()):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 2 or parts[0] != str(len(out)):
            raise FormatError(f"{path}:{lineno + 1}: expected '<internal_id>\\t<id>' in order")
        out.append(parts[1])
    if len(out) != n:
        raise FormatError(f"{path}: {len(out)} ids for {n} records")
    return tuple(out)


def _load(path, ids_path, n_limit, what):
    emb, offsets = read_vectors(path)
    n = len(offsets) - 1
    if n_limit is not None:
        longest = int(np.diff(offsets).max()) if n else 0
        if longest > n_limit:
            raise FormatError(f"{path}: record of length {longest} exceeds {what} limit {n_limit}")
    ids_path = Path(ids_path) if ids_path is not None else ids_path_for(path)
    if ids_path.exists():
        return emb, offsets, read_ids(ids_path, n)
    logger.warning("%s not found; using ordinal ids", ids_path)
    return emb, offsets, ()


def load_corpus(
    path: Union[str, Path], ids_path: Union[str, Path, None] = None, max_doc_len: int | None = MAX_DOC_LEN
) -> MultiVectorCorpus:
    """Read a corpus; docnos come from the sibling ``.tsv`` file when present."""
    emb, offsets, ids = _load(path, ids_path, max_doc_len, "document length")
    try:
        return MultiVectorCorpus(emb, offsets, ids)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc


def load_queries(
    path: Union[str, Path], ids_path: Union[str, Path, None] = None, max_query_len: int | None = MAX_QUERY_LEN
) -> QuerySet:
    emb, offsets, ids = _load(path, ids_path, max_query_len, "query length")
    try:
        return QuerySet(emb, offsets, ids)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc


def save_corpus(corpus: MultiVectorCorpus, path: Union[str, Path], ids_path=None) -> None:
    write_vectors(path, corpus)
    write_ids(ids_path or ids_path_for(path), corpus.docnos)


def save_queries(queries: QuerySet, path: Union[str, Path], ids_path=None) -> None:
    write_vectors(path, queries)
    write_ids(ids_path or ids_path_for(path), queries.qids)
