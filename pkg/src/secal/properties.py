"""Self-contained property suites runnable from the CLI.

Each suite re-derives a core invariant through an independent route (naive
double loops, quadrature, brute-force LP, Monte Carlo) and compares it to
the fast implementation.  The report is machine-readable; the CLI exits
nonzero if any suite fails.
"""
from __future__ import annotations

import json
import math
import pathlib
import time

import numpy as np
from scipy import stats

from .baselines import bucket_count, fit_buckets, fit_nw
from .ce_estimation import ce2_plugin
from .config import RunConfig, derive_seed
from .core_types import SnapshotBatch, project_moments_arrays
from .dgp import Exp1World
from .ground_truth import (
    _bilinear_deposit,
    build_surface,
    constant_predictor_mc,
    lower_bound_gap,
)
from .poly_fit import BasisSpec, fit_ridge
from .sech_kernel import SechKernel
from .wasserstein import (
    sandwich_check,
    snapshot_dist_from_moments,
    w1_lp_reference,
    w1_threeatom,
)


def _suite_sampler_roundtrip() -> tuple[bool, str]:
    rng = np.random.default_rng(0)
    worst = 0.0
    for h, lo, hi in ((1 / 16, 0.0, 1.0), (1 / 64, 0.0, 1.0), (1 / 16, 0.0, 0.25)):
        k = SechKernel(h, lo, hi)
        s = rng.uniform(lo, hi, 2000)
        u = rng.uniform(1e-6, 1 - 1e-6, 2000)
        t = k.sample(s, u)
        worst = max(worst, float(np.max(np.abs(k.cdf(s, t) - u))))
    return worst <= 1e-9, f"max |cdf(sample(u)) - u| = {worst:.3e}"


def _suite_sampler_ks() -> tuple[bool, str]:
    rng = np.random.default_rng(1)
    pvals = []
    for h, s in ((1 / 16, 0.3), (1 / 64, 0.9), (1 / 16, 0.0)):
        k = SechKernel(h, 0.0, 1.0)
        draws = k.sample(np.full(10000, s), rng.random(10000).clip(1e-12, 1 - 1e-12))
        pvals.append(stats.kstest(
            draws, lambda t, s=s, k=k: k.cdf(np.full(np.size(t), s), t)).pvalue)
    ok = all(p > 0.01 for p in pvals)
    return ok, f"KS p-values {['%.3f' % p for p in pvals]}"


def _suite_projection() -> tuple[bool, str]:
    rng = np.random.default_rng(2)
    e1 = rng.uniform(-0.5, 1.5, 20000)
    e2 = rng.uniform(-0.5, 1.5, 20000)
    p1, p2 = project_moments_arrays(e1, e2)
    q1, q2 = project_moments_arrays(p1, p2)
    idem = float(max(np.max(np.abs(p1 - q1)), np.max(np.abs(p2 - q2))))
    admissible = bool(np.all((p1 >= 0) & (p1 <= 1) & (p2 >= p1**2 - 1e-12) & (p2 <= p1 + 1e-12)))
    return idem == 0.0 and admissible, f"idempotence gap {idem}, admissible={admissible}"


def _suite_oracle_admissibility() -> tuple[bool, str]:
    world = Exp1World(0)
    surf = build_surface(world.raw_sampler(), 2**13, 1 / 16, 257, 65, seed=3)
    e1 = surf.eta1[surf.valid]
    e2 = surf.eta2[surf.valid]
    ok = bool(np.all((e1 >= -1e-9) & (e1 <= 1 + 1e-9) & (e2 >= e1**2 - 1e-9) & (e2 <= e1 + 1e-9)))
    return ok, f"eta range ok={ok} on {int(surf.valid.sum())} valid nodes"


def _suite_decomposition() -> tuple[bool, str]:
    """Dual route for the total-variance split: the aleatoric surface
    E[p(1-p)|s] smoothed directly must equal eta1 - eta2 on valid nodes."""
    world = Exp1World(0)
    rng = np.random.default_rng(4)
    m, v, p = world.raw_sampler(qmc=False)(20000, rng)
    grid_m = np.linspace(0, 1, 257)
    grid_v = np.linspace(0, 0.25, 65)
    ones = np.ones_like(p)
    mass, s1, s2, sa = _bilinear_deposit(grid_m, grid_v, m, v,
                                         [ones, p, p * p, p * (1 - p)])
    km = SechKernel(1 / 16, 0.0, 1.0).kernel_matrix(grid_m)
    kv = SechKernel(1 / 16, 0.0, 0.25).kernel_matrix(grid_v)
    smooth = lambda f: kv.smooth(km.smooth(f, axis=0), axis=1)
    mass_s = smooth(mass)
    valid = mass_s > 1e-9
    eta1 = smooth(s1)[valid] / mass_s[valid]
    eta2 = smooth(s2)[valid] / mass_s[valid]
    alea = smooth(sa)[valid] / mass_s[valid]
    gap = float(np.max(np.abs(alea - (eta1 - eta2))))
    return gap <= 1e-6, f"max |E[p(1-p)|s] - (eta1 - eta2)| = {gap:.3e}"


def _suite_sandwich(n: int = 100000, lp_frac: float = 0.01) -> tuple[bool, str]:
    rng = np.random.default_rng(5)
    mu1 = rng.random(n)
    mu2 = mu1**2 + rng.random(n) * (mu1 - mu1**2)
    m = rng.random(n)
    v = m**2 + rng.random(n) * (m - m**2)
    bad = 0
    lp_gap = 0.0
    check = set(rng.choice(n, max(1, int(lp_frac * n)), replace=False).tolist())
    for i in range(n):
        d1, d2, w1, lo_ok, hi_ok = sandwich_check(mu1[i], mu2[i], m[i], v[i])
        bad += not (lo_ok and hi_ok)
        if i in check:
            ref = w1_lp_reference(snapshot_dist_from_moments(mu1[i], mu2[i]),
                                  snapshot_dist_from_moments(m[i], v[i]))
            lp_gap = max(lp_gap, abs(ref - w1))
    return bad == 0 and lp_gap <= 1e-9, f"violations={bad}, max LP gap={lp_gap:.3e}"


def _suite_ce_hand_sum() -> tuple[bool, str]:
    world = Exp1World(0)
    batch = world.sample(500, 1 / 16, 6)
    basis = BasisSpec(4, 4)
    f1 = fit_ridge(basis, batch, "first", 1e-3)
    f2 = fit_ridge(basis, batch, "second", 1e-3)
    rep = ce2_plugin(f1, f2, batch, 1 / 16)
    e1 = f1.predict(batch.m, batch.v)
    e2 = f2.predict(batch.m, batch.v)
    hand = (sum(abs(float(a) - float(b)) for a, b in zip(e1, batch.m))
            + sum(abs(float(a) - float(b)) for a, b in
                  zip(e2, batch.m**2 + batch.v))) / len(batch)
    gap = abs(hand - rep.ce2)
    return gap <= 1e-12, f"|hand - fast| = {gap:.3e}"


def _suite_baseline_naive() -> tuple[bool, str]:
    world = Exp1World(0)
    batch = world.sample(400, 1 / 16, 7)
    q = world.sample(100, 1 / 16, 8)
    grid = fit_buckets(batch, 1 / 16, 1.0)
    k = grid.k
    worst = 0.0
    for target, lab in (("first", batch.y1.astype(float)),
                        ("second", batch.product.astype(float))):
        fast = grid.predict(q.m, q.v, target)
        for a in range(len(q)):
            i = min(int(q.m[a] * k), k - 1)
            j = min(int(q.v[a] * 4 * k), k - 1)
            members = [t for t in range(len(batch))
                       if min(int(batch.m[t] * k), k - 1) == i
                       and min(int(batch.v[t] * 4 * k), k - 1) == j]
            naive = (np.mean([lab[t] for t in members]) if members
                     else float(np.mean(lab)))
            worst = max(worst, abs(naive - fast[a]))
    reg = fit_nw(batch, 1 / 16, 1.0)
    p1, p2 = reg.predict_both(q.m, q.v)
    for target, fast, lab in (("first", p1, reg.y1), ("second", p2, reg.prod)):
        for a in range(len(q)):
            qa = np.array([q.m[a], 4 * q.v[a]])
            d2 = ((reg.x - qa) ** 2).sum(1)
            w = np.exp(-0.5 * d2 / reg.bandwidth**2)
            w[d2 > reg.truncation**2] = 0.0
            naive = (w @ lab / w.sum()) if w.sum() > 0 else lab[np.argmin(d2)]
            worst = max(worst, abs(naive - fast[a]))
    return worst <= 1e-12, f"max |naive - fast| = {worst:.3e}"


def _suite_lower_bound(n_mc: int = 10**6) -> tuple[bool, str]:
    eps = 1 / 16
    detail = []
    ok = True
    for h in (1 / 16, 1 / 64):
        gap, se = lower_bound_gap(h, eps, n_mc, seed=9)
        ok &= gap >= eps / 2 - 3 * se
        detail.append(f"h={h}: gap={gap:.5f} (eps/2={eps / 2:.5f}, se={se:.2e})")
    return ok, "; ".join(detail)


def _suite_constant_oracle() -> tuple[bool, str]:
    """Gridded surface vs direct MC for a constant predictor at (1, 0)."""
    h = 1 / 16
    p_ref = 0.25

    def sampler(n, rng):
        return np.ones(n), np.zeros(n), np.full(n, p_ref)

    surf = build_surface(sampler, 2**14, h, seed=10)
    grid_val = surf.ce2_pert()
    (mc_val, se), = constant_predictor_mc(h, [p_ref], 2 * 10**5, seed=11)
    ok = abs(grid_val - mc_val) <= max(3 * se, 2e-3)
    return ok, f"grid={grid_val:.5f}, mc={mc_val:.5f} +- {se:.2e}"


SUITES = {
    "sampler_cdf_roundtrip": _suite_sampler_roundtrip,
    "sampler_ks": _suite_sampler_ks,
    "projection_idempotence": _suite_projection,
    "oracle_admissibility": _suite_oracle_admissibility,
    "variance_decomposition": _suite_decomposition,
    "sandwich_inequality": _suite_sandwich,
    "ce_hand_sum": _suite_ce_hand_sum,
    "baseline_naive_oracle": _suite_baseline_naive,
    "lower_bound_gap": _suite_lower_bound,
    "constant_predictor_oracle": _suite_constant_oracle,
}


def run_properties(cfg: RunConfig | None = None) -> dict:
    """Run every suite; write a JSON report if an output dir is configured."""
    report = {"suites": {}, "passed": True}
    for name, fn in SUITES.items():
        t0 = time.time()
        try:
            ok, detail = fn()
        except Exception as exc:  # a crashed suite is a failed suite
            ok, detail = False, f"error: {exc!r}"
        report["suites"][name] = {"passed": bool(ok), "detail": detail,
                                  "seconds": round(time.time() - t0, 2)}
        report["passed"] = report["passed"] and bool(ok)
    if cfg is not None and cfg.out:
        path = pathlib.Path(cfg.out) / "properties.json"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(report, indent=2))
    return report
