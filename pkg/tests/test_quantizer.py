import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from approx_maxsim.errors import CorruptCode, TooFewPoints
from approx_maxsim.quantizer import (
    PqCodebook,
    SplitMix64,
    adc_score,
    adc_table,
    kmeans_train,
    pq_decode,
    pq_encode,
    pq_train,
)


def test_splitmix_reference_values():
    # first outputs for seed 0 from the published reference implementation
    g = SplitMix64(0)
    assert [g.next_u64() for _ in range(3)] == [
        0xE220A8397B1DCDAF,
        0x6E789E6AA1B965F4,
        0x06C45D188009454F,
    ]


def test_splitmix_sample_distinct_sorted():
    s = SplitMix64(9).sample(100, 30)
    assert len(set(s.tolist())) == 30
    assert np.all(np.diff(s) > 0) and s.max() < 100


def test_kmeans_two_points():
    m = kmeans_train(np.array([[0.0, 0.0], [10.0, 10.0]]), 2, seed=1)
    assert sorted(map(tuple, m.centroids.tolist())) == [(0.0, 0.0), (10.0, 10.0)]
    assert m.distortion == 0.0


def test_kmeans_identical_points():
    m = kmeans_train(np.ones((4, 2)), 1)
    assert m.centroids.tolist() == [[1.0, 1.0]]
    assert m.distortion == 0.0


def test_kmeans_too_few_points():
    with pytest.raises(TooFewPoints):
        kmeans_train(np.zeros((3, 2)), 4)


def _exhaustive_two_means(x):
    """Best 2-partition of planar points: optimal 2-means clusters are linearly separable,
    so it suffices to try every line through two data points (with both assignments of
    the two defining points)."""
    best = (np.inf, None)
    n = len(x)
    for i, j in itertools.combinations(range(n), 2):
        d = x[j] - x[i]
        side = (x - x[i]) @ np.array([-d[1], d[0]])
        for a, b in itertools.product([False, True], repeat=2):
            mask = side > 0
            mask[i], mask[j] = a, b
            if mask.all() or not mask.any():
                continue
            cost = sum(((x[g] - x[g].mean(0)) ** 2).sum() for g in (mask, ~mask))
            if cost < best[0]:
                best = (cost, mask.copy())
    mask = best[1]
    return best[0] / n, np.array([x[mask].mean(0), x[~mask].mean(0)])


def test_kmeans_matches_exhaustive_two_means():
    rng = np.random.default_rng(2024)

    def disc(center, n):
        r = 0.1 * np.sqrt(rng.random(n))
        t = rng.random(n) * 2 * np.pi
        return np.asarray(center) + np.c_[r * np.cos(t), r * np.sin(t)]

    x = np.vstack([disc((0, 0), 50), disc((5, 5), 50)])
    opt_cost, opt_c = _exhaustive_two_means(x)
    m = kmeans_train(x, 2, seed=5)
    got = m.centroids[np.argsort(m.centroids[:, 0])]
    want = opt_c[np.argsort(opt_c[:, 0])]
    assert np.all(np.linalg.norm(got - want, axis=1) < 0.2)
    assert m.distortion == pytest.approx(opt_cost, rel=1e-5)


@given(st.integers(0, 2**31), st.integers(1, 12))
@settings(max_examples=30)
def test_kmeans_distortion_monotone(seed, k):
    x = np.random.default_rng(seed).standard_normal((60, 3))
    m = kmeans_train(x, k, max_iters=30, seed=seed)
    h = np.array(m.history)
    assert np.all(np.diff(h) <= 1e-12 * max(h[0], 1.0))


def test_kmeans_no_duplicate_centroids_and_empty_cluster_repair():
    # 3 distinct locations heavily duplicated: k-means++ must still find all three
    x = np.repeat(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]), 20, axis=0)
    m = kmeans_train(x, 3, seed=11)
    assert len({tuple(r) for r in m.centroids.tolist()}) == 3
    assert m.distortion == 0.0


def test_kmeans_deterministic(rng):
    x = rng.standard_normal((300, 5))
    a = kmeans_train(x, 7, seed=3)
    b = kmeans_train(x, 7, seed=3)
    assert a.centroids.tobytes() == b.centroids.tobytes()


# --- PQ --------------------------------------------------------------------


def test_pq_single_centroid_is_subvector_mean(rng):
    x = rng.standard_normal((40, 4))
    cb = pq_train(x, 2, 1)
    np.testing.assert_allclose(cb.codebooks[0, 0], x[:, :2].mean(0), rtol=1e-6)
    np.testing.assert_allclose(cb.codebooks[1, 0], x[:, 2:].mean(0), rtol=1e-6)


def test_pq_memorizes_training_points(rng):
    x = rng.standard_normal((20, 4)).astype(np.float32)
    cb = pq_train(x, 4, 20)
    np.testing.assert_array_equal(pq_decode(cb, pq_encode(cb, x)), x)
    for row in x[:5]:
        np.testing.assert_array_equal(pq_decode(cb, pq_encode(cb, row)), row)


def _recon_error(cb, x):
    return float(np.mean(np.sum((x - pq_decode(cb, pq_encode(cb, x))) ** 2, axis=1)))


def test_more_centroids_reconstruct_better(rng):
    x = rng.standard_normal((500, 8))
    assert _recon_error(pq_train(x, 2, 16, seed=1), x) < _recon_error(pq_train(x, 2, 2, seed=1), x)


def test_quantization_error_decreases_with_codebook_size():
    rng = np.random.default_rng(77)
    train = rng.standard_normal((2000, 8))
    held_out = rng.standard_normal((200, 8))
    errs = [_recon_error(pq_train(train, 2, k, seed=4), held_out) for k in (2, 16, 64)]
    assert errs[0] > errs[1] > errs[2]


def test_encode_picks_nearest_with_low_index_ties():
    cb = PqCodebook(2, np.array([[[0.0, 0.0], [1.0, 1.0]]]))
    assert pq_encode(cb, np.array([0.1, 0.1])).tolist() == [0]
    assert pq_encode(cb, np.array([0.5, 0.5])).tolist() == [0]
    assert pq_encode(cb, np.array([0.9, 0.8])).tolist() == [1]


def test_padding_for_non_divisible_dim(rng):
    x = rng.standard_normal((64, 5))
    cb = pq_train(x, 2, 8)
    assert cb.sub_dim == 3 and cb.codebooks.shape == (2, 8, 3)
    assert np.all(cb.codebooks[1, :, 2] == 0.0)
    assert pq_decode(cb, pq_encode(cb, x)).shape == (64, 5)


def test_decode_rejects_bad_codes():
    cb = PqCodebook(2, np.zeros((1, 2, 2)))
    np.testing.assert_array_equal(pq_decode(cb, np.array([1], dtype=np.uint8)), [0.0, 0.0])
    with pytest.raises(CorruptCode):
        pq_decode(cb, np.array([2]))


def test_adc_examples():
    cb = PqCodebook(2, np.array([[[1.0, 0.0], [0.0, 1.0]]]))
    np.testing.assert_array_equal(adc_table(cb, np.array([2.0, 3.0])), [[2.0, 3.0]])
    assert not adc_table(cb, np.zeros(2)).any()
    assert adc_score(adc_table(cb, np.zeros(2)), np.array([1])) == 0.0


def _scalar_table(cb, q):
    table = [[0.0] * cb.k_sub for _ in range(cb.m)]
    for s in range(cb.m):
        for c in range(cb.k_sub):
            acc = 0.0
            for j in range(cb.sub_dim):
                dim_index = s * cb.sub_dim + j
                qv = float(q[dim_index]) if dim_index < cb.dim else 0.0
                acc += qv * float(cb.codebooks[s, c, j])
            table[s][c] = acc
    return np.array(table)


@given(st.integers(0, 2**31))
@settings(max_examples=25)
def test_adc_matches_scalar_reference_and_decode(seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((80, 7))
    cb = pq_train(x, 3, 8, seed=seed)
    q = rng.standard_normal(7)
    np.testing.assert_allclose(adc_table(cb, q), _scalar_table(cb, q), rtol=1e-5, atol=1e-12)
    codes = pq_encode(cb, x)
    table = adc_table(cb, q)
    want = pq_decode(cb, codes).astype(np.float64) @ q
    np.testing.assert_allclose(adc_score(table, codes), want, rtol=1e-5, atol=1e-9)
    random_code = rng.integers(0, 8, size=3)
    assert adc_score(table, random_code) == pytest.approx(float(pq_decode(cb, random_code) @ q), rel=1e-5, abs=1e-9)


def test_pq_deterministic(rng):
    x = rng.standard_normal((400, 8))
    a, b = pq_train(x, 4, 16, seed=2), pq_train(x, 4, 16, seed=2)
    assert a == b
    assert pq_encode(a, x).tobytes() == pq_encode(b, x).tobytes()
