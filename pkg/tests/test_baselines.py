import numpy as np
import pytest

from secal.baselines import (
    CONSTANT_GRID,
    bucket_count,
    fit_buckets,
    fit_nw,
    tune_constant,
)
from secal.core_types import SnapshotBatch


def _batch(n, seed):
    rng = np.random.default_rng(seed)
    m = rng.random(n)
    v = rng.random(n) * 0.25
    p = np.clip(m + 0.05 * rng.standard_normal(n), 0, 1)
    y1 = (rng.random(n) < p).astype(int)
    y2 = (rng.random(n) < p).astype(int)
    return SnapshotBatch(m, v, y1, y2, seed=seed)


def test_bucket_count_values():
    # K = clip(ceil(c (n/h^2)^(1/4)), 2, 200)
    assert bucket_count(10000, 1 / 16, 1.0) == int(np.ceil((10000 * 256) ** 0.25))
    assert bucket_count(100, 1.0, 0.01) == 2       # lower clip
    assert bucket_count(10**8, 1 / 64, 8.0) == 200  # upper clip


def test_buckets_match_naive_double_loop():
    batch = _batch(400, 0)
    grid = fit_buckets(batch, 1 / 16, 1.0)
    k = grid.k
    q = np.random.default_rng(1)
    mq, vq = q.random(50), q.random(50) * 0.25
    p1 = grid.predict(mq, vq, "first")
    p2 = grid.predict(mq, vq, "second")
    for t in range(50):
        i = min(int(mq[t] * k), k - 1)
        j = min(int(vq[t] * 4 * k), k - 1)
        inside = (np.minimum((batch.m * k).astype(int), k - 1) == i) & (
            np.minimum((batch.v * 4 * k).astype(int), k - 1) == j)
        if inside.any():
            assert p1[t] == pytest.approx(batch.y1[inside].mean(), abs=1e-12)
            assert p2[t] == pytest.approx(batch.product[inside].mean(), abs=1e-12)
        else:
            assert p1[t] == pytest.approx(batch.y1.mean(), abs=1e-12)


def test_empty_cells_fall_back_to_global_mean():
    # two tightly clustered points leave most cells empty
    batch = SnapshotBatch(np.array([0.5, 0.51]), np.array([0.1, 0.1]),
                          np.array([1, 0]), np.array([1, 1]))
    grid = fit_buckets(batch, 1 / 16, 4.0)
    far = grid.predict(np.array([0.01]), np.array([0.24]), "first")
    assert far[0] == pytest.approx(0.5)


def test_nw_matches_naive_double_loop():
    batch = _batch(300, 2)
    reg = fit_nw(batch, 1 / 16, 1.0)
    q = np.random.default_rng(3)
    mq, vq = q.random(40), q.random(40) * 0.25
    p1, p2 = reg.predict_both(mq, vq)
    b = reg.bandwidth
    for t in range(40):
        d2 = (batch.m - mq[t]) ** 2 + (4 * batch.v - 4 * vq[t]) ** 2
        w = np.exp(-0.5 * d2 / b**2)
        w[d2 > (5 * b) ** 2] = 0.0
        if w.sum() > 0:
            assert p1[t] == pytest.approx(np.sum(w * batch.y1) / w.sum(), abs=1e-12)
            assert p2[t] == pytest.approx(np.sum(w * batch.product) / w.sum(), abs=1e-12)
        else:
            assert p1[t] == batch.y1[np.argmin(d2)]


def test_nw_bandwidth_formula():
    reg = fit_nw(_batch(10000, 4), 1 / 16, 2.0)
    assert reg.bandwidth == pytest.approx(2.0 * (1 / 16) ** 0.5 * 10000 ** -0.25)
    assert reg.truncation == pytest.approx(5 * reg.bandwidth)


def test_nw_far_query_uses_nearest_point():
    batch = SnapshotBatch(np.array([0.0]), np.array([0.0]),
                          np.array([1]), np.array([1]))
    reg = fit_nw(batch, 1 / 64, 0.25)  # tiny bandwidth, tiny truncation radius
    p1, p2 = reg.predict_both(np.array([1.0]), np.array([0.25]))
    assert p1[0] == 1.0 and p2[0] == 1.0


def test_tune_constant_picks_minimum_and_breaks_ties_small():
    train = _batch(2000, 5)
    hyper = _batch(1000, 6)
    for method in ("buckets", "nw"):
        c = tune_constant(train, hyper, method, 1 / 16)
        assert c in CONSTANT_GRID or method == "buckets"  # dyadic extension allowed


def test_tune_constant_nw_shares_distance_pass():
    # the shared-distance fast path must agree with per-constant refits
    train = _batch(500, 7)
    hyper = _batch(300, 8)
    from secal.baselines import _heldout_loss, _nw_losses_shared

    fast = _nw_losses_shared(train, hyper, 1 / 16, CONSTANT_GRID)
    slow = [_heldout_loss(fit_nw(train, 1 / 16, c).predict, hyper)
            for c in CONSTANT_GRID]
    np.testing.assert_allclose(fast, slow, atol=1e-12)


def test_tune_constant_buckets_extends_grid_dyadically():
    # a grid whose optimum sits on the boundary must be extended once
    train = _batch(3000, 9)
    hyper = _batch(1500, 10)
    c = tune_constant(train, hyper, "buckets", 1 / 16, grid=(4.0, 8.0))
    assert c in (4.0, 8.0, 2.0, 16.0)


def test_tune_constant_rejects_bad_inputs():
    train = _batch(100, 11)
    with pytest.raises(ValueError):
        tune_constant(train, train, "splines", 1 / 16)
    empty = SnapshotBatch(np.array([]), np.array([]),
                          np.array([], dtype=int), np.array([], dtype=int))
    with pytest.raises(ValueError):
        tune_constant(empty, train, "nw", 1 / 16)
