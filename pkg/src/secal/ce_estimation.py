"""Plug-in calibration-error estimators and second-order Platt scaling.

The second-order estimate is the empirical version of

    CE2 = E|eta1(S) - m| + E|eta2(S) - (m^2 + sigma2)|

evaluated at the perturbed scores; the recalibration map sends a score to
(eta1_hat, max(0, eta2_hat - eta1_hat^2)) after projecting the predicted
moments onto the admissible region.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core_types import Score2, SnapshotBatch, project_moments_arrays
from .poly_fit import PolyFit


@dataclass(frozen=True)
class CeReport:
    """CE2 estimate split into its two moment terms, with run metadata."""

    ce2: float
    term_first: float
    term_second: float
    n: int
    degree: int
    h: float

    def csv_row(self, seed: int) -> str:
        return (
            f"{self.n},{self.h!r},{self.degree},"
            f"{self.term_first!r},{self.term_second!r},{self.ce2!r},{seed}"
        )

    CSV_HEADER = "n,h,degree,term_first,term_second,ce2,seed"


def ce2_plugin(fit1: PolyFit, fit2: PolyFit, eval_batch: SnapshotBatch, h: float = float("nan")) -> CeReport:
    """Empirical plug-in CE2 over the evaluation records."""
    if len(eval_batch) == 0:
        raise ValueError("empty evaluation batch")
    e1 = fit1.predict(eval_batch.m, eval_batch.v)
    e2 = fit2.predict(eval_batch.m, eval_batch.v)
    vtil = eval_batch.m**2 + eval_batch.v
    n = len(eval_batch)
    # compensated sums: exact for any n
    t1 = math.fsum(np.abs(e1 - eval_batch.m)) / n
    t2 = math.fsum(np.abs(e2 - vtil)) / n
    return CeReport(t1 + t2, t1, t2, n, fit1.basis.degree_m, h)


def ce1_plugin(fit1d: PolyFit, m: np.ndarray, y: np.ndarray | None = None) -> float:
    """First-order plug-in estimate: mean |eta_hat(m_i) - m_i|."""
    m = np.asarray(m, dtype=float)
    if len(m) == 0:
        raise ValueError("empty evaluation batch")
    eta = fit1d.predict(m, np.zeros_like(m))
    return float(math.fsum(np.abs(eta - m)) / len(m))


@dataclass
class Recalibrator:
    """Second-order Platt scaler built from the fitted calibration functions."""

    fit1: PolyFit
    fit2: PolyFit

    def moments(self, m, v) -> tuple[np.ndarray, np.ndarray]:
        """Projected (eta1, eta2) predictions at perturbed scores."""
        e1 = self.fit1.predict(m, v)
        e2 = self.fit2.predict(m, v)
        return project_moments_arrays(e1, e2)

    def remap(self, m, v) -> tuple[np.ndarray, np.ndarray]:
        """(m', (sigma2)') = (eta1, max(0, eta2 - eta1^2)); always feasible."""
        e1, e2 = self.moments(np.atleast_1d(m), np.atleast_1d(v))
        return e1, np.maximum(0.0, e2 - e1**2)

    def recalibrate(self, s: Score2) -> Score2:
        mp, vp = self.remap(s.m, s.sigma2)
        return Score2(float(mp[0]), float(vp[0]))


def _quantile_bins(x: np.ndarray, k: int) -> np.ndarray:
    """Bin ids in [0, k) from the empirical quantiles of x."""
    edges = np.quantile(x, np.linspace(0, 1, k + 1)[1:-1])
    return np.searchsorted(edges, x, side="right")


def ce2_of_recalibrated(
    recal: Recalibrator,
    eta1_true: np.ndarray,
    eta2_true: np.ndarray,
    m: np.ndarray,
    v: np.ndarray,
    n_bins: int = 50,
) -> float:
    """CE2 of the recalibrated predictor against ground-truth moments.

    Level sets of the recalibration map are approximated by ``n_bins`` x
    ``n_bins`` quantile bins of (m', (sigma2)'); within a bin the predicted
    and true moments are averaged before taking absolute deviations.
    """
    eta1_true = np.asarray(eta1_true, dtype=float)
    eta2_true = np.asarray(eta2_true, dtype=float)
    if eta1_true.shape != np.shape(m):
        raise ValueError("truth arrays must align with the evaluation scores")
    mp, vp = recal.remap(m, v)
    pred_v = mp**2 + vp
    bins = _quantile_bins(mp, n_bins) * n_bins + _quantile_bins(vp, n_bins)
    order = np.argsort(bins, kind="stable")
    bins_s = bins[order]
    bounds = np.flatnonzero(np.diff(bins_s)) + 1
    total1 = total2 = 0.0
    n = len(mp)
    for lo, hi in zip(np.r_[0, bounds], np.r_[bounds, n]):
        idx = order[lo:hi]
        w = len(idx) / n
        total1 += w * abs(np.mean(eta1_true[idx]) - np.mean(mp[idx]))
        total2 += w * abs(np.mean(eta2_true[idx]) - np.mean(pred_v[idx]))
    return total1 + total2
