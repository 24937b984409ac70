"""Synthetic data-generating processes for the four experiments.

Exp1: a 10-component Gaussian mixture in R^4 with logistic f*, scored by a
configurable stochastic surrogate that emulates an ensemble's (mean,
variance) output.  Exp3: the four-group referral world.  The two-point
family drives the lower-bound check.  Neural ensembles are deliberately
replaced by surrogates with matched statistical signatures; the estimators
are agnostic to how (m, sigma2) was produced.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, ndtri

from .core_types import SnapshotBatch
from .ground_truth import sobol_uniforms
from .sech_kernel import default_kernels


@dataclass(frozen=True)
class PredictorConfig:
    """Surrogate ensemble head.

    ``good``: mean tracks f* closely, variance follows local ambiguity.
    ``undertrained``: mean carries only a faint, badly scaled signal about
    f* (so it is strongly miscalibrated), variance is junk uncorrelated
    with the true conditional variance.
    """

    quality: str = "good"
    # good mode
    mean_noise: float = 0.04
    var_scale: float = 0.05
    var_noise: float = 0.3
    # undertrained mode
    weak_slope: float = -0.25
    weak_noise: float = 0.15
    mean_bias: float = 0.0
    junk_var_mean: float = 0.10
    junk_var_sd: float = 0.04


@dataclass
class Exp1World:
    """Gaussian-mixture logistic world with a fixed surrogate predictor."""

    world_seed: int = 0
    n_components: int = 10
    dim: int = 4
    center_scale: float = 1.5
    predictor: PredictorConfig = field(default_factory=PredictorConfig)

    def __post_init__(self):
        rng = np.random.default_rng(self.world_seed)
        self.centers = rng.normal(0.0, self.center_scale, (self.n_components, self.dim))
        self.w = rng.normal(0.0, np.sqrt(0.5), self.dim)

    # -- latent draws -------------------------------------------------------

    def _fstar_from_uniforms(self, u: np.ndarray) -> np.ndarray:
        """u has dim 1 + self.dim columns: component index then coordinates."""
        comp = (u[:, 0] * self.n_components).astype(int)
        x = self.centers[comp] + ndtri(u[:, 1 : 1 + self.dim])
        return expit(x @ self.w)

    def _scores_from_uniforms(self, fstar: np.ndarray, u: np.ndarray):
        """u has 2 columns of predictor noise; returns feasible (m, v)."""
        cfg = self.predictor
        z1, z2 = ndtri(u[:, 0]), ndtri(u[:, 1])
        if cfg.quality == "good":
            m = np.clip(fstar + cfg.mean_noise * z1, 0.0, 1.0)
            amb = fstar * (1.0 - fstar)
            v = np.clip(cfg.var_scale * amb * (1.0 + cfg.var_noise * z2), 0.0, 0.25)
        elif cfg.quality == "undertrained":
            m = np.clip(0.5 + cfg.mean_bias + cfg.weak_slope * (fstar - 0.5)
                        + cfg.weak_noise * z1, 0.0, 1.0)
            v = np.clip(np.abs(cfg.junk_var_mean + cfg.junk_var_sd * z2), 0.0, 0.25)
        else:
            raise ValueError(f"unknown predictor quality {cfg.quality!r}")
        v = np.minimum(v, m * (1.0 - m))  # clip to the feasible region
        return m, v

    @property
    def n_uniforms(self) -> int:
        return 1 + self.dim + 2

    def raw_sampler(self, qmc: bool = True):
        """(m_raw, v_raw, p) sampler for oracle surfaces; QMC by default."""

        def sample(n: int, rng: np.random.Generator):
            if qmc:
                seed = int(rng.integers(2**31))
                u = sobol_uniforms(n, self.n_uniforms, seed)
            else:
                u = rng.random((n, self.n_uniforms)).clip(1e-12, 1 - 1e-12)
            fstar = self._fstar_from_uniforms(u[:, : 1 + self.dim])
            m, v = self._scores_from_uniforms(fstar, u[:, 1 + self.dim :])
            return m, v, fstar

        return sample

    def sample(self, n: int, h: float, seed: int) -> SnapshotBatch:
        """n 2-snapshots with sech-perturbed scores; raw scores retained."""
        rng = np.random.default_rng(seed)
        u = rng.random((n, self.n_uniforms)).clip(1e-12, 1 - 1e-12)
        fstar = self._fstar_from_uniforms(u[:, : 1 + self.dim])
        m_raw, v_raw = self._scores_from_uniforms(fstar, u[:, 1 + self.dim :])
        y1 = (rng.random(n) < fstar).astype(np.int64)
        y2 = (rng.random(n) < fstar).astype(np.int64)
        km, kv = default_kernels(h)
        u1 = rng.random(n).clip(1e-12, 1 - 1e-12)
        u2 = rng.random(n).clip(1e-12, 1 - 1e-12)
        m_t = km.sample(m_raw, u1)
        v_t = kv.sample(v_raw, u2)
        return SnapshotBatch(m_t, v_t, y1, y2, seed=seed, m_raw=m_raw, v_raw=v_raw,
                             extras={"fstar": fstar})


# -- Experiment 3: four-group referral world --------------------------------


@dataclass(frozen=True)
class GroupParams:
    m_mean: float
    m_sd: float
    v_mean: float
    v_sd: float
    theta_mean: float
    theta_sd: float
    bimodal: bool = False
    theta_hi_mean: float = 0.0


@dataclass(frozen=True)
class Exp3World:
    weights: tuple[float, ...] = (0.25, 0.25, 0.35, 0.15)
    referral_cost: float = 0.06
    borderline: tuple[float, float] = (0.35, 0.65)
    groups: tuple[GroupParams, ...] = (
        GroupParams(0.08, 0.03, 0.005, 0.001, 0.08, 0.03),
        GroupParams(0.92, 0.03, 0.005, 0.001, 0.92, 0.03),
        GroupParams(0.50, 0.035, 0.010, 0.002, 0.50, 0.040),
        GroupParams(0.50, 0.035, 0.060, 0.010, 0.12, 0.030,
                    bimodal=True, theta_hi_mean=0.88),
    )


def _draw_exp3(world: Exp3World, n: int, rng: np.random.Generator):
    group = rng.choice(len(world.weights), size=n, p=world.weights)
    m = np.empty(n)
    v = np.empty(n)
    theta = np.empty(n)
    for g, gp in enumerate(world.groups):
        idx = np.flatnonzero(group == g)
        if len(idx) == 0:
            continue
        m[idx] = rng.normal(gp.m_mean, gp.m_sd, len(idx))
        v[idx] = rng.normal(gp.v_mean, gp.v_sd, len(idx))
        mean = np.full(len(idx), gp.theta_mean)
        if gp.bimodal:
            hi = rng.random(len(idx)) < 0.5
            mean[hi] = gp.theta_hi_mean
        theta[idx] = rng.normal(mean, gp.theta_sd)
    # independent per-coordinate clipping
    m = np.clip(m, 0.0, 1.0)
    v = np.clip(v, 0.0, 0.25)
    theta = np.clip(theta, 0.0, 1.0)
    keep = (m >= world.borderline[0]) & (m <= world.borderline[1])
    return m[keep], v[keep], theta[keep], group[keep]


def sample_exp3(world: Exp3World, n_cal: int, n_eval: int, seed: int):
    """Borderline-filtered calibration 2-snapshots and an evaluation cohort.

    ``n_cal``/``n_eval`` are pre-filter draw counts; about half survive the
    borderline filter.  Calibration labels are iid Bernoulli(theta) pairs;
    the evaluation cohort retains the true theta for realized-gain scoring.
    """
    rng = np.random.default_rng(seed)
    m, v, theta, group = _draw_exp3(world, n_cal, rng)
    y1 = (rng.random(len(m)) < theta).astype(np.int64)
    y2 = (rng.random(len(m)) < theta).astype(np.int64)
    cal = SnapshotBatch(m, v, y1, y2, seed=seed,
                        extras={"theta": theta, "group": group})
    me, ve, te, ge = _draw_exp3(world, n_eval, rng)
    ev = {"m": me, "v": ve, "theta": te, "group": ge}
    return cal, ev


def patient_gain(theta: np.ndarray, cost: float) -> np.ndarray:
    """Per-patient referral gain g(theta) = 2 theta^2 - 2 theta + 0.5 - cost."""
    theta = np.asarray(theta, dtype=float)
    return 2.0 * theta**2 - 2.0 * theta + 0.5 - cost


def gain_curve(scores: np.ndarray, thetas: np.ndarray, cost: float,
               tau_grid: np.ndarray) -> np.ndarray:
    """Realized gain per 100 borderline patients, per threshold tau."""
    scores = np.asarray(scores, dtype=float)
    thetas = np.asarray(thetas, dtype=float)
    if scores.shape != thetas.shape:
        raise ValueError("scores and thetas must align")
    g = patient_gain(thetas, cost)
    return np.array([
        100.0 * g[scores >= tau].sum() / len(scores) for tau in np.atleast_1d(tau_grid)
    ])


def default_tau_grid() -> np.ndarray:
    return np.linspace(-0.05, 0.30, 71)


# -- Two-point lower-bound family -------------------------------------------


@dataclass(frozen=True)
class TwoPointWorld:
    b: int
    epsilon: float = 1 / 16

    @property
    def p_b(self) -> float:
        return 1 / 16 + (self.epsilon if self.b else 0.0)


def sample_twopoint(world: TwoPointWorld, n: int, h: float, seed: int) -> SnapshotBatch:
    """Perturbed scores from the boundary constant predictor (1, 0) with
    labels iid Bernoulli(p_b), independent of the scores."""
    rng = np.random.default_rng(seed)
    km, kv = default_kernels(h)
    m_t = km.sample(np.ones(n), rng.random(n).clip(1e-12, 1 - 1e-12))
    v_t = kv.sample(np.zeros(n), rng.random(n).clip(1e-12, 1 - 1e-12))
    y1 = (rng.random(n) < world.p_b).astype(np.int64)
    y2 = (rng.random(n) < world.p_b).astype(np.int64)
    return SnapshotBatch(m_t, v_t, y1, y2, seed=seed,
                         m_raw=np.ones(n), v_raw=np.zeros(n))
