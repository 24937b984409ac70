import numpy as np
import pytest
from scipy import stats

from secal.dgp import (
    Exp1World,
    Exp3World,
    PredictorConfig,
    TwoPointWorld,
    default_tau_grid,
    gain_curve,
    patient_gain,
    sample_exp3,
    sample_twopoint,
)
from secal.sech_kernel import default_kernels


def test_exp1_world_is_reproducible():
    a = Exp1World(world_seed=5).sample(200, 1 / 16, seed=11)
    b = Exp1World(world_seed=5).sample(200, 1 / 16, seed=11)
    np.testing.assert_array_equal(a.m, b.m)
    np.testing.assert_array_equal(a.y2, b.y2)
    c = Exp1World(world_seed=6).sample(200, 1 / 16, seed=11)
    assert not np.array_equal(a.m, c.m)


def test_exp1_labels_track_fstar():
    batch = Exp1World(world_seed=0).sample(60000, 1 / 16, seed=1)
    f = batch.extras["fstar"]
    # label frequency matches the latent probability
    assert batch.y1.mean() == pytest.approx(f.mean(), abs=3 * 0.5 / np.sqrt(60000))
    # products are conditionally independent: E[y1 y2] ~ E[f*^2]
    assert batch.product.mean() == pytest.approx(
        (f**2).mean(), abs=3 * 0.5 / np.sqrt(60000))


def test_exp1_scores_are_feasible_and_perturbed():
    batch = Exp1World(world_seed=0).sample(5000, 1 / 16, seed=2)
    assert np.all((batch.m >= 0) & (batch.m <= 1))
    assert np.all((batch.v >= 0) & (batch.v <= 0.25))
    # raw scores satisfy the Bernoulli feasibility bound
    assert np.all(batch.v_raw <= batch.m_raw * (1 - batch.m_raw) + 1e-12)
    # perturbation actually moved the scores
    assert np.mean(np.abs(batch.m - batch.m_raw)) > 0.01


def test_exp1_perturbation_matches_kernel_law():
    # conditional law of the perturbed mean given the raw score is the
    # truncated sech kernel: check via the probability integral transform
    world = Exp1World(world_seed=0)
    batch = world.sample(8000, 1 / 16, seed=3)
    km, _ = default_kernels(1 / 16)
    u = km.cdf(batch.m_raw, batch.m)
    p = stats.kstest(u, "uniform").pvalue
    assert p > 0.01


def test_exp1_raw_sampler_qmc_agrees_with_mc_in_mean():
    world = Exp1World(world_seed=1)
    rng = np.random.default_rng(0)
    mq, vq, pq = world.raw_sampler(qmc=True)(2**14, rng)
    mm, vm, pm = world.raw_sampler(qmc=False)(2**16, np.random.default_rng(1))
    assert pq.mean() == pytest.approx(pm.mean(), abs=0.01)
    assert mq.mean() == pytest.approx(mm.mean(), abs=0.01)


def test_undertrained_predictor_is_miscalibrated():
    cfg = PredictorConfig(quality="undertrained")
    world = Exp1World(world_seed=2, predictor=cfg)
    batch = world.sample(20000, 1 / 16, seed=4)
    f = batch.extras["fstar"]
    # anti-correlated mean: correlation with f* is negative
    assert np.corrcoef(batch.m_raw, f)[0, 1] < -0.1
    # junk variance: uncorrelated with the true conditional variance proxy
    assert abs(np.corrcoef(batch.v_raw, f * (1 - f))[0, 1]) < 0.25


def test_unknown_predictor_quality_rejected():
    world = Exp1World(world_seed=0, predictor=PredictorConfig(quality="great"))
    with pytest.raises(ValueError):
        world.sample(10, 1 / 16, seed=0)


# -- four-group referral world ----------------------------------------------


def test_exp3_group_statistics():
    world = Exp3World()
    cal, ev = sample_exp3(world, 200000, 1000, seed=0)
    th = cal.extras["theta"]
    g = cal.extras["group"]
    # group 2 (index) holds genuinely borderline outcomes near 1/2
    assert th[g == 2].mean() == pytest.approx(0.5, abs=0.01)
    assert th[g == 2].std() < 0.06
    # group 3 outcomes are bimodal: nearly all far from 1/2
    frac_extreme = np.mean(np.abs(th[g == 3] - 0.5) > 0.25)
    assert frac_extreme > 0.99
    lo = np.mean(th[g == 3] < 0.5)
    assert 0.4 < lo < 0.6
    # groups 2 and 3 share the same borderline mean-score profile
    assert abs(cal.m[g == 2].mean() - cal.m[g == 3].mean()) < 0.01
    # but group 3 carries the high reported variance
    assert cal.v[g == 3].mean() > 4 * cal.v[g == 2].mean()


def test_exp3_borderline_filter_keeps_about_half():
    world = Exp3World()
    cal, _ = sample_exp3(world, 100000, 1000, seed=1)
    frac = len(cal) / 100000
    # groups 0 and 1 (half the mass) sit far outside [0.35, 0.65]
    assert 0.4 < frac < 0.6
    assert np.all((cal.m >= 0.35) & (cal.m <= 0.65))


def test_exp3_labels_are_bernoulli_theta():
    world = Exp3World()
    cal, _ = sample_exp3(world, 100000, 1000, seed=2)
    th = cal.extras["theta"]
    n = len(cal)
    assert cal.y1.mean() == pytest.approx(th.mean(), abs=3 * 0.5 / np.sqrt(n))
    assert cal.product.mean() == pytest.approx(
        (th**2).mean(), abs=3 * 0.5 / np.sqrt(n))


def test_patient_gain_shape():
    # symmetric in theta around 1/2; maximal benefit at the extremes
    assert patient_gain(0.5, 0.06) == pytest.approx(-0.06)
    assert patient_gain(0.0, 0.06) == pytest.approx(0.44)
    assert patient_gain(1.0, 0.06) == pytest.approx(0.44)
    np.testing.assert_allclose(patient_gain(np.array([0.3]), 0.0),
                               patient_gain(np.array([0.7]), 0.0))


def test_gain_curve_hand_example():
    scores = np.array([0.5, -0.2, 0.3, 0.1])
    thetas = np.array([0.1, 0.5, 0.9, 0.5])
    out = gain_curve(scores, thetas, cost=0.06, tau_grid=np.array([0.0, 0.2, 1.0]))
    g = patient_gain(thetas, 0.06)
    assert out[0] == pytest.approx(100 * (g[0] + g[2] + g[3]) / 4)
    assert out[1] == pytest.approx(100 * (g[0] + g[2]) / 4)
    assert out[2] == pytest.approx(0.0)
    with pytest.raises(ValueError):
        gain_curve(scores, thetas[:2], 0.06, np.array([0.0]))


def test_default_tau_grid_shape():
    tg = default_tau_grid()
    assert len(tg) == 71
    assert tg[0] == pytest.approx(-0.05) and tg[-1] == pytest.approx(0.30)
    assert 0.06 in np.round(tg, 10)


# -- two-point lower-bound family --------------------------------------------


def test_twopoint_score_law_is_shared_across_hypotheses():
    # the perturbed score distribution must not depend on the hypothesis bit
    a = sample_twopoint(TwoPointWorld(0), 5000, 1 / 16, seed=3)
    b = sample_twopoint(TwoPointWorld(1), 5000, 1 / 16, seed=4)
    assert stats.ks_2samp(a.m, b.m).pvalue > 0.01
    assert stats.ks_2samp(a.v, b.v).pvalue > 0.01


def test_twopoint_label_rates():
    w0, w1 = TwoPointWorld(0), TwoPointWorld(1)
    assert w0.p_b == pytest.approx(1 / 16)
    assert w1.p_b == pytest.approx(1 / 8)
    b = sample_twopoint(w1, 100000, 1 / 16, seed=5)
    assert b.y1.mean() == pytest.approx(1 / 8, abs=3 * 0.35 / np.sqrt(100000))
