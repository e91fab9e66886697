"""k-means and product quantization.

Randomness comes from a SplitMix64 generator so that seeded training gives
the same centroids on every platform and numpy version:

    state += 0x9E3779B97F4A7C15
    z = state
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB
    return z ^ (z >> 31)              (all mod 2**64)

Uniform floats take the top 53 bits of each output.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CorruptCode, TooFewPoints

_MASK = (1 << 64) - 1
_CHUNK_BYTES = 64 << 20


class SplitMix64:
    def __init__(self, seed: int):
        self.state = seed & _MASK

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
        return z ^ (z >> 31)

    def random(self) -> float:
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def below(self, n: int) -> int:
        """Uniform integer in ``[0, n)`` (Lemire-free rejection, unbiased)."""
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            v = self.next_u64()
            if v < limit:
                return v % n

    def sample(self, n: int, k: int) -> np.ndarray:
        """``k`` distinct indices from ``range(n)``, sorted ascending."""
        # Floyd's algorithm: k draws regardless of n
        chosen: set[int] = set()
        for j in range(n - k, n):
            t = self.below(j + 1)
            chosen.add(j if t in chosen else t)
        return np.array(sorted(chosen), dtype=np.int64)


@dataclass(frozen=True, eq=False)
class KMeansModel:
    centroids: np.ndarray  # (k, dim) float32
    distortion: float
    history: tuple[float, ...] = field(default=(), repr=False)
    iterations: int = 0

    @property
    def k(self) -> int:
        return int(self.centroids.shape[0])

    @property
    def dim(self) -> int:
        return int(self.centroids.shape[1])


def _rows_per_chunk(k: int) -> int:
    return max(1, _CHUNK_BYTES // (8 * max(k, 1)))


def _assign(x: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Nearest centroid by squared L2; ties go to the lowest index."""
    cn = np.einsum("ij,ij->i", c, c)
    out = np.empty(len(x), dtype=np.int64)
    step = _rows_per_chunk(len(c))
    for s in range(0, len(x), step):
        blk = x[s : s + step]
        d = cn[None, :] - 2.0 * (blk @ c.T)
        out[s : s + step] = np.argmin(d, axis=1)
    return out


def _sq_dists(x: np.ndarray, c: np.ndarray, labels: np.ndarray) -> np.ndarray:
    diff = x - c[labels]
    return np.einsum("ij,ij->i", diff, diff)


def _kmeanspp(x: np.ndarray, k: int, rng: SplitMix64) -> np.ndarray:
    n = len(x)
    idx = [rng.below(n)]
    diff = x - x[idx[0]]
    d2 = np.einsum("ij,ij->i", diff, diff)
    for _ in range(1, k):
        total = float(d2.sum())
        if total <= 0.0:
            nxt = rng.below(n)
        else:
            cum = np.cumsum(d2)
            nxt = int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))
            if nxt >= n or d2[nxt] == 0.0:  # rounding at the top end of the cumsum
                nxt = int(np.flatnonzero(d2 > 0.0)[-1])
        idx.append(nxt)
        diff = x - x[nxt]
        np.minimum(d2, np.einsum("ij,ij->i", diff, diff), out=d2)
    return x[idx].copy()


def kmeans_train(data: np.ndarray, k: int, max_iters: int = 25, seed: int = 0) -> KMeansModel:
    """Lloyd's algorithm from a k-means++ start.

    Stops after ``max_iters`` rounds or once assignments stop changing. An
    empty cluster is reseeded with the point currently farthest from its own
    centroid. Arithmetic is float64; centroids are returned as float32.
    """
    x = np.asarray(data, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("data must be a 2-D matrix")
    if k < 1 or max_iters < 1:
        raise ValueError("k and max_iters must be >= 1")
    if len(x) < k:
        raise TooFewPoints(f"{len(x)} points for k={k}")

    rng = SplitMix64(seed)
    c = _kmeanspp(x, k, rng)
    labels = _assign(x, c)
    history = []
    it = 0
    for it in range(1, max_iters + 1):
        d2 = _sq_dists(x, c, labels)
        history.append(float(d2.mean()))

        counts = np.bincount(labels, minlength=k)
        sums = np.stack([np.bincount(labels, weights=x[:, j], minlength=k) for j in range(x.shape[1])], axis=1)
        nonempty = counts > 0
        c[nonempty] = sums[nonempty] / counts[nonempty, None]
        if not nonempty.all():
            d2 = _sq_dists(x, c, labels)
            for e in np.flatnonzero(~nonempty):
                far = int(np.argmax(d2))
                c[e] = x[far]
                d2[far] = -1.0

        new_labels = _assign(x, c)
        if np.array_equal(new_labels, labels):
            labels = new_labels
            break
        labels = new_labels

    final = float(_sq_dists(x, c, labels).mean())
    history.append(final)
    return KMeansModel(c.astype(np.float32), final, tuple(history), it)


# ---------------------------------------------------------------------------
# product quantization


@dataclass(frozen=True, eq=False)
class PqCodebook:
    """``m`` sub-codebooks of ``k_sub`` centroids each.

    ``codebooks`` has shape ``(m, k_sub, sub_dim)`` with ``sub_dim = ceil(dim / m)``;
    the last sub-space is zero-padded when ``dim`` is not a multiple of ``m``.
    """

    dim: int
    codebooks: np.ndarray

    def __post_init__(self):
        cb = np.ascontiguousarray(self.codebooks, dtype=np.float32)
        if cb.ndim != 3:
            raise ValueError("codebooks must be (m, k_sub, sub_dim)")
        m, k_sub, sub_dim = cb.shape
        if not 1 <= m <= self.dim or k_sub > 256 or sub_dim != math.ceil(self.dim / m):
            raise ValueError(f"inconsistent codebook shape {cb.shape} for dim={self.dim}")
        cb.flags.writeable = False
        object.__setattr__(self, "codebooks", cb)

    @property
    def m(self) -> int:
        return int(self.codebooks.shape[0])

    @property
    def k_sub(self) -> int:
        return int(self.codebooks.shape[1])

    @property
    def sub_dim(self) -> int:
        return int(self.codebooks.shape[2])

    def __eq__(self, other):
        if not isinstance(other, PqCodebook):
            return NotImplemented
        return self.dim == other.dim and np.array_equal(self.codebooks, other.codebooks)


def _split(cb_m: int, sub_dim: int, x: np.ndarray) -> np.ndarray:
    """``(R, dim)`` -> ``(m, R, sub_dim)`` with zero padding."""
    r, dim = x.shape
    padded = np.zeros((r, cb_m * sub_dim), dtype=np.float64)
    padded[:, :dim] = x
    return padded.reshape(r, cb_m, sub_dim).transpose(1, 0, 2)


def pq_train(data: np.ndarray, m: int, k_sub: int, max_iters: int = 25, seed: int = 0) -> PqCodebook:
    x = np.asarray(data, dtype=np.float64)
    r, dim = x.shape
    if not 1 <= m <= dim:
        raise ValueError(f"m={m} must lie in 1..{dim}")
    if not 1 <= k_sub <= 256:
        raise ValueError("k_sub must lie in 1..256")
    if r < k_sub:
        raise TooFewPoints(f"{r} points for k_sub={k_sub}")
    sub_dim = math.ceil(dim / m)
    subs = _split(m, sub_dim, x)
    books = np.stack([kmeans_train(subs[s], k_sub, max_iters, seed + s).centroids for s in range(m)])
    return PqCodebook(dim, books)


def pq_encode(cb: PqCodebook, x: np.ndarray) -> np.ndarray:
    """Nearest sub-centroid per sub-space (squared L2, lowest index on ties).

    Accepts one vector (returns ``(m,)`` uint8) or a matrix (returns ``(R, m)``).
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    x2 = x[None, :] if single else x
    if x2.shape[1] != cb.dim:
        raise ValueError(f"expected dim {cb.dim}, got {x2.shape[1]}")
    subs = _split(cb.m, cb.sub_dim, x2)
    books = cb.codebooks.astype(np.float64)
    codes = np.empty((len(x2), cb.m), dtype=np.uint8)
    step = max(1, _CHUNK_BYTES // (8 * cb.k_sub * cb.sub_dim))
    for s in range(cb.m):
        for a in range(0, len(x2), step):
            diff = subs[s, a : a + step, None, :] - books[s][None, :, :]
            codes[a : a + step, s] = np.argmin(np.einsum("rkd,rkd->rk", diff, diff), axis=1)
    return codes[0] if single else codes


def pq_decode(cb: PqCodebook, code: np.ndarray) -> np.ndarray:
    code = np.asarray(code)
    single = code.ndim == 1
    c2 = code[None, :] if single else code
    if c2.shape[1] != cb.m:
        raise CorruptCode(f"expected {cb.m} codes per vector, got {c2.shape[1]}")
    if c2.size and (c2.min() < 0 or c2.max() >= cb.k_sub):
        raise CorruptCode(f"code outside 0..{cb.k_sub - 1}")
    c2 = c2.astype(np.int64)
    rows = cb.codebooks[np.arange(cb.m)[None, :], c2]  # (R, m, sub_dim)
    out = rows.reshape(len(c2), -1)[:, : cb.dim]
    return out[0] if single else out


def adc_table(cb: PqCodebook, q: np.ndarray) -> np.ndarray:
    """``(m, k_sub)`` float64 table of dot products between query sub-vectors and sub-centroids."""
    q = np.asarray(q, dtype=np.float64)
    qs = _split(cb.m, cb.sub_dim, q[None, :])[:, 0, :]  # (m, sub_dim)
    return np.einsum("sd,skd->sk", qs, cb.codebooks.astype(np.float64))


def adc_score(table: np.ndarray, code: np.ndarray) -> np.ndarray | float:
    code = np.asarray(code, dtype=np.int64)
    m = table.shape[0]
    if code.ndim == 1:
        return float(table[np.arange(m), code].sum())
    return table[np.arange(m)[None, :], code].sum(axis=1)
