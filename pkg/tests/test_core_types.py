import numpy as np
import pytest
from hypothesis import given, strategies as st

from secal.core_types import (
    MomentPair,
    Score2,
    Snapshot2,
    SnapshotBatch,
    epistemic_variance,
    is_feasible,
    project_moments,
    project_moments_arrays,
)


def test_score_rectangle_validation():
    Score2(0.0, 0.0)
    Score2(1.0, 0.25)
    with pytest.raises(ValueError):
        Score2(1.2, 0.1)
    with pytest.raises(ValueError):
        Score2(0.5, 0.3)
    with pytest.raises(ValueError):
        Score2(0.5, -0.01)


def test_feasibility_boundary():
    assert is_feasible(Score2(0.5, 0.25))
    assert not is_feasible(Score2(0.9, 0.25))
    assert is_feasible(Score2(0.9, 0.09))
    # the feasibility check tolerates float dust on the boundary
    assert is_feasible(Score2(0.5, 0.25 + 1e-13))


def test_snapshot_product():
    assert Snapshot2(Score2(0.5, 0.1), 1, 1).product == 1
    assert Snapshot2(Score2(0.5, 0.1), 1, 0).product == 0
    assert Snapshot2(Score2(0.5, 0.1), 0, 0).product == 0


def test_projection_examples():
    # eta1 out of range is clipped first
    p = project_moments(MomentPair(1.3, 0.9))
    assert p.eta1 == 1.0 and p.eta2 == 1.0
    # eta2 below Jensen floor
    p = project_moments(MomentPair(0.5, 0.1))
    assert p.eta1 == 0.5 and p.eta2 == 0.25
    # eta2 above the Bernoulli cap
    p = project_moments(MomentPair(0.5, 0.7))
    assert p.eta2 == 0.5
    # admissible input is untouched
    p = project_moments(MomentPair(0.4, 0.3))
    assert (p.eta1, p.eta2) == (0.4, 0.3)


@given(st.floats(-2, 3), st.floats(-2, 3))
def test_projection_idempotent_and_admissible(e1, e2):
    p = project_moments(MomentPair(e1, e2))
    assert p.admissible
    q = project_moments(p)
    assert (q.eta1, q.eta2) == (p.eta1, p.eta2)


def test_array_projection_matches_scalar():
    rng = np.random.default_rng(0)
    e1 = rng.uniform(-1, 2, 300)
    e2 = rng.uniform(-1, 2, 300)
    a1, a2 = project_moments_arrays(e1, e2)
    for i in range(300):
        p = project_moments(MomentPair(e1[i], e2[i]))
        assert a1[i] == p.eta1
        assert a2[i] == p.eta2


def test_epistemic_variance_floor():
    assert epistemic_variance(MomentPair(0.5, 0.25)) == 0.0
    assert epistemic_variance(MomentPair(0.5, 0.35)) == pytest.approx(0.1)


def test_batch_prefix_is_coupled():
    rng = np.random.default_rng(1)
    b = SnapshotBatch(rng.random(50), rng.random(50) * 0.25,
                      rng.integers(0, 2, 50), rng.integers(0, 2, 50), seed=7)
    p = b.prefix(20)
    assert len(p) == 20
    np.testing.assert_array_equal(p.m, b.m[:20])
    np.testing.assert_array_equal(p.y2, b.y2[:20])
    assert p.seed == b.seed


def test_batch_roundtrip_records():
    rng = np.random.default_rng(2)
    b = SnapshotBatch(rng.random(10), rng.random(10) * 0.2,
                      rng.integers(0, 2, 10), rng.integers(0, 2, 10))
    again = SnapshotBatch.from_records(b.records)
    np.testing.assert_allclose(again.m, b.m)
    np.testing.assert_array_equal(again.product, b.product)
