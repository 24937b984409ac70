"""Experiment runners: rate study, recalibration, referral gains, audits.

Each runner consumes a RunConfig, fans out deterministically over seeds,
and writes versioned CSVs plus a JSON manifest.  Floats are written with
``repr`` so identical configs give byte-identical files.
"""
from __future__ import annotations

import math
import pathlib
import time

import numpy as np
from scipy import stats

from .baselines import fit_buckets, fit_nw, tune_constant
from .ce_estimation import Recalibrator, ce2_of_recalibrated, ce2_plugin
from .config import RunConfig, derive_seed, write_csv, write_manifest
from .core_types import SnapshotBatch, project_moments_arrays
from .crowdsource import (
    audit_yield,
    build_cohorts,
    ingest_votes,
    method_scores,
    synthetic_votes,
    xor_scores,
)
from .dgp import (
    Exp1World,
    Exp3World,
    PredictorConfig,
    default_tau_grid,
    gain_curve,
    patient_gain,
    sample_exp3,
)
from .ground_truth import build_surface
from .poly_fit import BasisSpec, fit_ridge, select_model
from .sech_kernel import default_kernels

EXP1_HEADER = "method,h,n,seed,ce2_hat,ce2_true,abs_error"
EXP1_SUMMARY_HEADER = "method,h,n,mean_abs_error,t90_lo,t90_hi,n_seeds"
EXP1_SLOPES_HEADER = "method,h,slope,intercept"
EXP2_SCATTER_HEADER = "seed,m,v,sigma2_raw,sigma2_recal,condvar_true"
EXP2_SUMMARY_HEADER = "seed,pearson_raw,pearson_recal,ce2_raw,ce2_recal"
EXP3_HEADER = "method,tau,mean_gain,sem,n_repeats"
EXP4_HEADER = "method,budget,yield,seed"

EXP1_METHODS = ("poly_heldout", "poly_cv", "buckets", "nw")
EXP3_METHODS = ("raw_m", "raw_mv", "first_1d", "first_2d",
                "second_1d", "second_2d", "oracle")
EXP4_BASELINES = ("raw_m", "raw_s", "raw_s_flip", "first_1d", "second_1d")
EXP4_BUDGETS = (0.02, 0.05, 0.1, 0.2, 0.3, 0.5)


def default_config(experiment: str, out: str = "out", **overrides) -> RunConfig:
    """Desk-scale defaults per experiment."""
    base: dict = {"experiment": experiment, "out": out}
    if experiment == "exp1":
        base.update(h=(1 / 16,), n=(500, 1000, 2000, 5000, 10000, 20000),
                    seeds=tuple(range(5)), methods=EXP1_METHODS)
    elif experiment == "exp2":
        base.update(h=(1 / 64,), seeds=tuple(range(5)), n_cal=20000)
    elif experiment == "exp3":
        base.update(seeds=tuple(range(50)), n_cal=3000, n_eval=8000,
                    methods=EXP3_METHODS)
    elif experiment == "exp4":
        base.update(seeds=tuple(range(200)))
    else:
        raise ValueError(f"unknown experiment {experiment!r}")
    base.update(overrides)
    return RunConfig.from_dict(base)


def _t90_band(values: np.ndarray) -> tuple[float, float]:
    """Student-t 90% confidence interval for the mean."""
    k = len(values)
    mean = float(np.mean(values))
    if k < 2:
        return mean, mean
    half = stats.t.ppf(0.95, k - 1) * np.std(values, ddof=1) / math.sqrt(k)
    return mean - half, mean + half


def loglog_slope(n: np.ndarray, err: np.ndarray) -> tuple[float, float]:
    """Least-squares slope of log10(mean error) on log10(n)."""
    slope, intercept = np.polyfit(np.log10(np.asarray(n, float)),
                                  np.log10(np.asarray(err, float)), 1)
    return float(slope), float(intercept)


def _plugin_from_predictions(p1, p2, batch: SnapshotBatch) -> float:
    t1 = math.fsum(np.abs(p1 - batch.m)) / len(batch)
    t2 = math.fsum(np.abs(p2 - (batch.m**2 + batch.v))) / len(batch)
    return t1 + t2


def _estimate_one(method: str, train: SnapshotBatch, hyper: SnapshotBatch,
                  valid: SnapshotBatch, h: float) -> float:
    if method in ("poly_heldout", "poly_cv"):
        mode = "heldout" if method == "poly_heldout" else "cv"
        f1, f2 = select_model(train, hyper if mode == "heldout" else None, h, mode=mode)
        return ce2_plugin(f1, f2, valid, h).ce2
    if method == "buckets":
        c = tune_constant(train, hyper, "buckets", h)
        grid = fit_buckets(train, h, c)
        return _plugin_from_predictions(grid.predict(valid.m, valid.v, "first"),
                                        grid.predict(valid.m, valid.v, "second"), valid)
    if method == "nw":
        c = tune_constant(train, hyper, "nw", h)
        reg = fit_nw(train, h, c)
        p1, p2 = reg.predict_both(valid.m, valid.v)
        return _plugin_from_predictions(p1, p2, valid)
    raise ValueError(f"unknown method {method!r}")


def run_exp1(cfg: RunConfig) -> dict:
    """Rate study: |CE2_hat - CE2_pert| vs n, per method and bandwidth."""
    t0 = time.time()
    world = Exp1World(cfg.world_seed)
    methods = cfg.methods or EXP1_METHODS
    max_n = max(cfg.n)
    rows, summary_rows, slope_rows = [], [], []
    slopes: dict[tuple[str, float], float] = {}
    errors: dict[tuple[str, float, int], list[float]] = {}
    for h in cfg.h:
        surf = build_surface(world.raw_sampler(), cfg.n_qmc, h,
                             seed=derive_seed(cfg.world_seed, "oracle", h))
        ce2_true = surf.ce2_pert()
        for seed in cfg.seeds:
            train = world.sample(max_n, h, derive_seed(seed, "train", h))
            hyper = world.sample(max(max_n // 2, 250), h, derive_seed(seed, "hyper", h))
            valid = world.sample(max_n, h, derive_seed(seed, "valid", h))
            for n in cfg.n:
                tr = train.prefix(n)
                hy = hyper.prefix(max(n // 2, 250))
                va = valid.prefix(n)
                for method in methods:
                    ce2_hat = _estimate_one(method, tr, hy, va, h)
                    err = abs(ce2_hat - ce2_true)
                    rows.append(f"{method},{h!r},{n},{seed},{ce2_hat!r},{ce2_true!r},{err!r}")
                    errors.setdefault((method, h, n), []).append(err)
        for method in methods:
            means = []
            for n in cfg.n:
                vals = np.array(errors[(method, h, n)])
                lo, hi = _t90_band(vals)
                means.append(vals.mean())
                summary_rows.append(
                    f"{method},{h!r},{n},{float(vals.mean())!r},"
                    f"{float(lo)!r},{float(hi)!r},{len(vals)}")
            slope, intercept = loglog_slope(np.array(cfg.n), np.array(means))
            slopes[(method, h)] = slope
            slope_rows.append(f"{method},{h!r},{slope!r},{intercept!r}")
    out = pathlib.Path(cfg.out)
    files = [
        write_csv(out / "exp1.csv", EXP1_HEADER, rows),
        write_csv(out / "exp1_summary.csv", EXP1_SUMMARY_HEADER, summary_rows),
        write_csv(out / "exp1_slopes.csv", EXP1_SLOPES_HEADER, slope_rows),
    ]
    write_manifest(cfg.out, "exp1", cfg, files,
                   extra={"schema": "exp1.v1", "runtime_s": time.time() - t0})
    return {"errors": errors, "slopes": slopes, "files": files,
            "runtime_s": time.time() - t0}


def run_exp2(cfg: RunConfig) -> dict:
    """Recalibration: raw vs remapped sigma^2 against the oracle variance."""
    t0 = time.time()
    degree = int(cfg.params.get("degree", 12))
    world = Exp1World(cfg.world_seed, predictor=PredictorConfig("undertrained"))
    h = cfg.h[0]
    surf = build_surface(world.raw_sampler(), cfg.n_qmc, h,
                         seed=derive_seed(cfg.world_seed, "oracle", h))
    ce2_raw = surf.ce2_pert()
    ev = world.sample(cfg.n_eval if cfg.n_eval else 20000, h,
                      derive_seed(cfg.world_seed, "exp2", "eval"))
    truth = surf.conditional_variance_at(ev.m, ev.v)
    eta1_true = surf.eta1_at(ev.m, ev.v)
    eta2_true = surf.eta2_at(ev.m, ev.v)
    basis = BasisSpec(degree, degree)
    scatter_rows, summary_rows = [], []
    results = []
    for seed in cfg.seeds:
        cal = world.sample(cfg.n_cal, h, derive_seed(seed, "cal", h))
        fit1 = fit_ridge(basis, cal, "first")   # ridge floor only
        fit2 = fit_ridge(basis, cal, "second")
        recal = Recalibrator(fit1, fit2)
        _, vprime = recal.remap(ev.m, ev.v)
        pr_raw = float(np.corrcoef(ev.v, truth)[0, 1])
        pr_rec = float(np.corrcoef(vprime, truth)[0, 1])
        ce2_rec = ce2_of_recalibrated(recal, eta1_true, eta2_true, ev.m, ev.v)
        results.append({"seed": seed, "pearson_raw": pr_raw, "pearson_recal": pr_rec,
                        "ce2_raw": ce2_raw, "ce2_recal": ce2_rec})
        summary_rows.append(f"{seed},{pr_raw!r},{pr_rec!r},{ce2_raw!r},{ce2_rec!r}")
        if seed == cfg.seeds[0]:
            keep = np.linspace(0, len(ev) - 1, min(2000, len(ev))).astype(int)
            for i in keep:
                scatter_rows.append(
                    f"{seed},{float(ev.m[i])!r},{float(ev.v[i])!r},{float(ev.v[i])!r},"
                    f"{float(vprime[i])!r},{float(truth[i])!r}")
    out = pathlib.Path(cfg.out)
    files = [
        write_csv(out / "exp2_scatter.csv", EXP2_SCATTER_HEADER, scatter_rows),
        write_csv(out / "exp2_summary.csv", EXP2_SUMMARY_HEADER, summary_rows),
    ]
    write_manifest(cfg.out, "exp2", cfg, files,
                   extra={"schema": "exp2.v1", "runtime_s": time.time() - t0})
    return {"results": results, "ce2_raw": ce2_raw, "files": files}


def exp3_scores(cal: SnapshotBatch, ev: dict, cost: float,
                ridge_mult: float = 1e-4) -> dict[str, np.ndarray]:
    """Per-method patient scores 2 eta2 - 2 eta1 + 0.5 - cost on the cohort."""
    m, v = ev["m"], ev["v"]

    def second_order(basis):
        f1 = fit_ridge(basis, cal, "first", ridge_mult)
        f2 = fit_ridge(basis, cal, "second", ridge_mult)
        e1, e2 = project_moments_arrays(f1.predict_linear(m, v),
                                        f2.predict_linear(m, v))
        return 2 * e2 - 2 * e1 + 0.5 - cost

    def first_order(basis):
        f1 = fit_ridge(basis, cal, "first", ridge_mult)
        e1 = f1.predict(m, v)
        return 2 * e1**2 - 2 * e1 + 0.5 - cost

    b1d = BasisSpec(6, 0)   # degree 6 in m, constant in sigma^2
    b2d = BasisSpec(4, 4)
    e1_raw, e2_raw = project_moments_arrays(m.copy(), m**2 + v)
    return {
        "raw_m": 2 * m**2 - 2 * m + 0.5 - cost,
        "raw_mv": 2 * e2_raw - 2 * e1_raw + 0.5 - cost,
        "first_1d": first_order(b1d),
        "first_2d": first_order(b2d),
        "second_1d": second_order(b1d),
        "second_2d": second_order(b2d),
        "oracle": patient_gain(ev["theta"], cost),
    }


def run_exp3(cfg: RunConfig) -> dict:
    """Referral gains vs threshold for the seven scoring methods."""
    t0 = time.time()
    world = Exp3World()
    taus = default_tau_grid()
    gains: dict[str, list[np.ndarray]] = {meth: [] for meth in EXP3_METHODS}
    for seed in cfg.seeds:
        cal, ev = sample_exp3(world, cfg.n_cal, cfg.n_eval, seed)
        scores = exp3_scores(cal, ev, world.referral_cost)
        for meth in EXP3_METHODS:
            gains[meth].append(gain_curve(scores[meth], ev["theta"],
                                          world.referral_cost, taus))
    rows = []
    mean_gain: dict[str, np.ndarray] = {}
    for meth in EXP3_METHODS:
        arr = np.array(gains[meth])  # (repeats, taus)
        mean_gain[meth] = arr.mean(axis=0)
        sem = arr.std(axis=0, ddof=1) / math.sqrt(len(cfg.seeds))
        for j, tau in enumerate(taus):
            rows.append(f"{meth},{float(tau)!r},{float(mean_gain[meth][j])!r},"
                        f"{float(sem[j])!r},{len(cfg.seeds)}")
    files = [write_csv(pathlib.Path(cfg.out) / "exp3.csv", EXP3_HEADER, rows)]
    write_manifest(cfg.out, "exp3", cfg, files,
                   extra={"schema": "exp3.v1", "runtime_s": time.time() - t0})
    return {"taus": taus, "gains": gains, "mean_gain": mean_gain, "files": files}


def run_exp4(cfg: RunConfig) -> dict:
    """Audit-yield study on vote data (real CSV or synthetic surrogate)."""
    t0 = time.time()
    p = cfg.params
    if cfg.dataset:
        vt = ingest_votes(cfg.dataset, target_class=str(p.get("target_class", "1")))
    elif cfg.surrogate:
        vt = synthetic_votes(n_tasks=int(p.get("n_tasks", 1200)), seed=cfg.world_seed)
    else:
        raise ValueError(
            "exp4 needs --dataset PATH with the vote CSV or --surrogate "
            "to use the synthetic vote generator")
    budgets = tuple(p.get("budgets", EXP4_BUDGETS))
    rows = []
    yields: dict[tuple[str, float], list[float]] = {}
    for seed in cfg.seeds:
        items = build_cohorts(vt, seed=derive_seed(seed, "cohort"))
        items = xor_scores(items, seed=derive_seed(seed, "xor"))
        rng = np.random.default_rng(derive_seed(seed, "split"))
        order = rng.permutation(len(items))
        n_sel = int(0.25 * len(items))
        n_cal = int(0.35 * len(items))
        cal = [items[i] for i in order[n_sel:n_sel + n_cal]]
        ev = [items[i] for i in order[n_sel + n_cal:]]
        scores = method_scores(cal, ev)
        thetas = np.array([it.theta for it in ev])
        for meth, sc in scores.items():
            for b in budgets:
                y = audit_yield(sc, thetas, b)
                rows.append(f"{meth},{b!r},{y!r},{seed}")
                yields.setdefault((meth, b), []).append(y)
    f_star = 0.05 if 0.05 in budgets else budgets[0]
    wins = {}
    y2d = np.array(yields[("second_2d", f_star)])
    for base in EXP4_BASELINES:
        wins[base] = float(np.mean(y2d > np.array(yields[(base, f_star)])))
    files = [write_csv(pathlib.Path(cfg.out) / "exp4.csv", EXP4_HEADER, rows)]
    write_manifest(cfg.out, "exp4", cfg, files,
                   extra={"schema": "exp4.v1", "win_fractions": wins,
                          "budget_star": f_star, "runtime_s": time.time() - t0})
    return {"yields": yields, "win_fractions": wins, "files": files}
