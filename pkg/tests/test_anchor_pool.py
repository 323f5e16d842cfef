import numpy as np
import pytest

from anchordepth.anchor_pool import DEFAULT_ANCHORS, AnchorPool, sample_anchor, select_anchor


@pytest.fixture
def pool():
    return AnchorPool.create(rng=np.random.default_rng(0))


def test_default_pool_shape(pool):
    assert tuple(pool.anchors) == DEFAULT_ANCHORS
    assert pool.embeddings.shape == (8, 16)
    assert abs(pool.embeddings.std() - 0.02) < 0.006


def test_singleton_pool_always_returns_its_entry():
    p = AnchorPool.create(anchors=[7.0], rng=np.random.default_rng(1))
    rng = np.random.default_rng(5)
    assert {sample_anchor(p, rng).anchor for _ in range(50)} == {7.0}


def test_sampling_is_uniform(pool):
    rng = np.random.default_rng(2024)
    counts = np.bincount([sample_anchor(pool, rng).index for _ in range(80_000)], minlength=8)
    # binomial(80000, 1/8): sd = sqrt(80000 * 1/8 * 7/8)
    sd = np.sqrt(80_000 / 8 * 7 / 8)
    assert np.all(np.abs(counts - 10_000) < 3 * sd)


def test_sampling_is_deterministic(pool):
    r1, r2 = np.random.default_rng(9), np.random.default_rng(9)
    s1 = [sample_anchor(pool, r1).index for _ in range(100)]
    s2 = [sample_anchor(pool, r2).index for _ in range(100)]
    assert s1 == s2


def test_draw_embedding_matches_entry(pool):
    d = sample_anchor(pool, np.random.default_rng(3))
    assert d.anchor == pool.anchors[d.index]
    assert d.embedding is not None and np.shares_memory(d.embedding, pool.embeddings)


@pytest.mark.parametrize("request_m, expected", [(80, 80), (100, 80), (0.5, 2), (1e6, 120),
                                                 (5, 4), (7.9, 6), (8.1, 10)])
def test_select_anchor(pool, request_m, expected):
    assert select_anchor(pool, request_m).anchor == expected


def test_select_is_idempotent(pool):
    for a in pool.anchors:
        d = select_anchor(pool, a)
        assert select_anchor(pool, d.anchor).index == d.index


def test_rejects_bad_pools():
    with pytest.raises(ValueError):
        AnchorPool([], np.zeros((0, 4)))
    with pytest.raises(ValueError):
        AnchorPool([2.0, 1.0], np.zeros((2, 4)))
    with pytest.raises(ValueError):
        AnchorPool([1.0, 2.0], np.zeros((3, 4)))
    with pytest.raises(ValueError):
        select_anchor(AnchorPool.create(anchors=[1.0]), 0.0)
