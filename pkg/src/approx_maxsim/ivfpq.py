"""Inverted-file index over product-quantized residuals, scored by dot product.

Each embedding ``x`` goes to the coarse centroid ``c`` with the largest
``x . c``; its residual ``x - c`` is PQ-encoded. A query embedding ``q``
probes the ``nprobe`` partitions with the largest ``q . c`` and scores every
posting as ``q . c + ADC(q, code)``.
"""

from __future__ import annotations

import logging
import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

from .embed_store import MultiVectorCorpus
from .errors import FormatError, TooFewPoints
from .quantizer import PqCodebook, SplitMix64, adc_table, kmeans_train, pq_encode, pq_train

logger = logging.getLogger(__name__)

DEFAULT_TRAIN_FRACTION = 0.05
DEFAULT_NPROBE = 10
DEFAULT_M = 16
DEFAULT_K_SUB = 256

MAGIC = b"IVPQ"
VERSION = 1
_HEAD = struct.Struct("<4sI")
_META = struct.Struct("<IQIII")
_U64 = struct.Struct("<Q")


def default_partitions(num_embeddings: int) -> int:
    """``4 * sqrt(T)`` rounded to a power of two, clamped to ``[16, 65536]``."""
    target = 4.0 * math.sqrt(max(num_embeddings, 1))
    return int(min(max(2 ** round(math.log2(target)), 16), 65536))


@dataclass(frozen=True, eq=False)
class IvfPqIndex:
    centroids: np.ndarray  # (L, dim) float32
    cb: PqCodebook
    list_offsets: np.ndarray  # (L + 1,) int64
    ids: np.ndarray  # (T,) int64, ascending within each list
    codes: np.ndarray  # (T, m) uint8, aligned with ids

    def __post_init__(self):
        for name in ("centroids", "list_offsets", "ids", "codes"):
            getattr(self, name).flags.writeable = False

    @property
    def dim(self) -> int:
        return int(self.centroids.shape[1])

    @property
    def nlist(self) -> int:
        return int(self.centroids.shape[0])

    @property
    def num_embeddings(self) -> int:
        return int(len(self.ids))

    def posting_list(self, p: int) -> tuple[np.ndarray, np.ndarray]:
        a, b = self.list_offsets[p], self.list_offsets[p + 1]
        return self.ids[a:b], self.codes[a:b]

    def list_sizes(self) -> np.ndarray:
        return np.diff(self.list_offsets)

    def nbytes(self) -> int:
        return int(self.centroids.nbytes + self.cb.codebooks.nbytes + self.ids.nbytes + self.codes.nbytes)

    def __eq__(self, other):
        if not isinstance(other, IvfPqIndex):
            return NotImplemented
        return (
            self.cb == other.cb
            and np.array_equal(self.centroids, other.centroids)
            and np.array_equal(self.list_offsets, other.list_offsets)
            and np.array_equal(self.ids, other.ids)
            and np.array_equal(self.codes, other.codes)
        )


@dataclass(frozen=True, eq=False)
class EmbeddingHitList:
    """Top-k' hits for one query embedding, best first (ties: lower id first)."""

    ids: np.ndarray
    sims: np.ndarray

    def __len__(self) -> int:
        return len(self.ids)


def assign_partitions(centroids: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Index of the centroid with the largest dot product per row; lowest index on ties."""
    c = centroids.astype(np.float64)
    out = np.empty(len(x), dtype=np.int64)
    step = max(1, (32 << 20) // (8 * len(c)))
    for s in range(0, len(x), step):
        out[s : s + step] = np.argmax(x[s : s + step].astype(np.float64) @ c.T, axis=1)
    return out


def build_index(
    corpus: MultiVectorCorpus,
    nlist: int | None = None,
    m: int = DEFAULT_M,
    k_sub: int = DEFAULT_K_SUB,
    train_fraction: float = DEFAULT_TRAIN_FRACTION,
    seed: int = 0,
    max_iters: int = 25,
) -> IvfPqIndex:
    """Train the coarse quantizer and PQ codebook on a seeded sample, then encode everything.

    The coarse k-means uses ``seed``; the residual codebook uses ``seed + 1``
    (its sub-spaces then take ``seed + 1 + s``).
    """
    x = corpus.embeddings
    t = len(x)
    nlist = default_partitions(t) if nlist is None else nlist
    if nlist > t:
        raise TooFewPoints(f"{nlist} partitions for {t} embeddings")
    if not 0.0 < train_fraction <= 1.0:
        raise ValueError("train_fraction must lie in (0, 1]")
    n_train = min(t, math.ceil(train_fraction * t))
    if n_train < max(nlist, k_sub):
        raise TooFewPoints(
            f"training sample of {n_train} embeddings is smaller than max(L={nlist}, k_sub={k_sub})"
        )
    rng = SplitMix64(seed)
    sample_ids = np.arange(t) if n_train == t else rng.sample(t, n_train)
    sample = x[sample_ids].astype(np.float64)

    coarse = kmeans_train(sample, nlist, max_iters, seed)
    cent = coarse.centroids
    sample_res = sample - cent[assign_partitions(cent, sample)].astype(np.float64)
    cb = pq_train(sample_res, m, k_sub, max_iters, seed + 1)

    part = assign_partitions(cent, x)
    residuals = x.astype(np.float64) - cent[part].astype(np.float64)
    codes_all = pq_encode(cb, residuals)

    order = np.argsort(part, kind="stable")
    offsets = np.concatenate([[0], np.cumsum(np.bincount(part, minlength=nlist))]).astype(np.int64)
    ix = IvfPqIndex(cent, cb, offsets, order.astype(np.int64), codes_all[order])
    logger.info(
        "built IVFPQ: T=%d L=%d m=%d k_sub=%d sample=%d coarse_distortion=%.4g",
        t, nlist, cb.m, cb.k_sub, n_train, coarse.distortion,
    )
    return ix


def _probe_order(index: IvfPqIndex, q: np.ndarray, nprobe: int) -> tuple[np.ndarray, np.ndarray]:
    coarse = index.centroids.astype(np.float64) @ q
    order = np.argsort(-coarse, kind="stable")[:nprobe]
    return order, coarse


def _clamp_nprobe(index: IvfPqIndex, nprobe: int) -> int:
    if nprobe < 1:
        raise ValueError("nprobe must be >= 1")
    if nprobe > index.nlist:
        logger.warning("nprobe=%d exceeds L=%d; clamping", nprobe, index.nlist)
        return index.nlist
    return nprobe


def _top(ids: np.ndarray, sims: np.ndarray, k: int) -> EmbeddingHitList:
    if len(sims) > k:
        kth = np.partition(sims, len(sims) - k)[len(sims) - k]
        keep = sims >= kth
        ids, sims = ids[keep], sims[keep]
    order = np.lexsort((ids, -sims))[:k]
    return EmbeddingHitList(ids[order], sims[order])


def search(index: IvfPqIndex, q: np.ndarray, kprime: int, nprobe: int = DEFAULT_NPROBE) -> EmbeddingHitList:
    """Approximate top-``kprime`` embeddings for a single query embedding."""
    if kprime < 1:
        raise ValueError("kprime must be >= 1")
    nprobe = _clamp_nprobe(index, nprobe)
    return _search_one(index, np.asarray(q, dtype=np.float64), kprime, nprobe)


def _search_one(index: IvfPqIndex, q: np.ndarray, kprime: int, nprobe: int) -> EmbeddingHitList:
    probes, coarse = _probe_order(index, q, nprobe)
    table = adc_table(index.cb, q)
    cols = np.arange(index.cb.m)[None, :]
    ids_parts, sim_parts = [], []
    for p in probes:
        ids, codes = index.posting_list(p)
        if len(ids) == 0:
            continue
        ids_parts.append(ids)
        sim_parts.append(coarse[p] + table[cols, codes].sum(axis=1))
    if not ids_parts:
        return EmbeddingHitList(np.empty(0, dtype=np.int64), np.empty(0))
    return _top(np.concatenate(ids_parts), np.concatenate(sim_parts), kprime)


def search_many(
    index: IvfPqIndex, queries: np.ndarray, kprime: int, nprobe: int = DEFAULT_NPROBE
) -> list[EmbeddingHitList]:
    """Run :func:`search` for each row of ``queries``, in row order."""
    if kprime < 1:
        raise ValueError("kprime must be >= 1")
    nprobe = _clamp_nprobe(index, nprobe)
    q64 = np.asarray(queries, dtype=np.float64)
    return [_search_one(index, row, kprime, nprobe) for row in q64]


# ---------------------------------------------------------------------------
# persistence
#
# "IVPQ" | version u32 | dim u32, T u64, L u32, m u32, k_sub u32
# section 1: u64 byte length | L*dim float32 centroids
# section 2: u64 byte length | m*k_sub*sub_dim float32 codebooks
# section 3: u64 byte length | per list: u64 length, then (u64 id, m code bytes) pairs


def _posting_dtype(m: int) -> np.dtype:
    return np.dtype([("id", "<u8"), ("code", "u1", (m,))])


def save_index(index: IvfPqIndex, path: Union[str, Path]) -> None:
    m = index.cb.m
    sec1 = index.centroids.astype("<f4").tobytes()
    sec2 = index.cb.codebooks.astype("<f4").tobytes()
    pdt = _posting_dtype(m)
    chunks = []
    for p in range(index.nlist):
        ids, codes = index.posting_list(p)
        rec = np.empty(len(ids), dtype=pdt)
        rec["id"] = ids
        rec["code"] = codes
        chunks.append(_U64.pack(len(ids)))
        chunks.append(rec.tobytes())
    sec3 = b"".join(chunks)
    head = _HEAD.pack(MAGIC, VERSION) + _META.pack(index.dim, index.num_embeddings, index.nlist, m, index.cb.k_sub)
    with open(path, "wb") as fh:
        fh.write(head)
        for sec in (sec1, sec2, sec3):
            fh.write(_U64.pack(len(sec)))
            fh.write(sec)


def load_index(path: Union[str, Path]) -> IvfPqIndex:
    buf = Path(path).read_bytes()
    if len(buf) < _HEAD.size + _META.size:
        raise FormatError(f"{path}: truncated header")
    magic, version = _HEAD.unpack_from(buf, 0)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported index version {version} (supported: {VERSION})")
    dim, t, nlist, m, k_sub = _META.unpack_from(buf, _HEAD.size)
    if dim == 0 or nlist == 0 or not 1 <= m <= dim or not 1 <= k_sub <= 256:
        raise FormatError(f"{path}: invalid header dim={dim} L={nlist} m={m} k_sub={k_sub}")
    sub_dim = math.ceil(dim / m)
    pos = _HEAD.size + _META.size

    def section(expected: int | None):
        nonlocal pos
        if pos + 8 > len(buf):
            raise FormatError(f"{path}: truncated section header")
        (n,) = _U64.unpack_from(buf, pos)
        pos += 8
        if expected is not None and n != expected:
            raise FormatError(f"{path}: section length {n}, expected {expected}")
        if pos + n > len(buf):
            raise FormatError(f"{path}: truncated section")
        data = buf[pos : pos + n]
        pos += n
        return data

    cent = np.frombuffer(section(4 * nlist * dim), dtype="<f4").reshape(nlist, dim).astype(np.float32)
    books = np.frombuffer(section(4 * m * k_sub * sub_dim), dtype="<f4").reshape(m, k_sub, sub_dim)
    pdt = _posting_dtype(m)
    sec3 = section(8 * nlist + pdt.itemsize * t)
    if pos != len(buf):
        raise FormatError(f"{path}: {len(buf) - pos} trailing bytes")

    offsets = np.zeros(nlist + 1, dtype=np.int64)
    ids = np.empty(t, dtype=np.int64)
    codes = np.empty((t, m), dtype=np.uint8)
    q = 0
    for p in range(nlist):
        if q + 8 > len(sec3):
            raise FormatError(f"{path}: truncated posting list {p}")
        (n,) = _U64.unpack_from(sec3, q)
        q += 8
        if offsets[p] + n > t or q + n * pdt.itemsize > len(sec3):
            raise FormatError(f"{path}: posting list {p} overruns T={t}")
        rec = np.frombuffer(sec3, dtype=pdt, count=n, offset=q)
        q += n * pdt.itemsize
        a = offsets[p]
        ids[a : a + n] = rec["id"]
        codes[a : a + n] = rec["code"]
        offsets[p + 1] = a + n
    if offsets[-1] != t or q != len(sec3):
        raise FormatError(f"{path}: posting lists hold {offsets[-1]} entries, header says {t}")
    if t and not np.array_equal(np.sort(ids), np.arange(t)):
        raise FormatError(f"{path}: posting lists are not a partition of 0..{t - 1}")
    if codes.size and codes.max() >= k_sub:
        raise FormatError(f"{path}: code outside 0..{k_sub - 1}")
    return IvfPqIndex(cent, PqCodebook(dim, books.astype(np.float32)), offsets, ids, codes)
