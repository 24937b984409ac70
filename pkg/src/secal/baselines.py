"""Nonparametric baselines: 2D axis-aligned bucketing and Nadaraya-Watson.

Both operate on the rescaled rectangle (sigma2 multiplied by 4 so the axes
have unit support).  Bucketing uses K x K cells with
K = clip(ceil(c * (n / h^2)^{1/4}), 2, 200); Nadaraya-Watson uses an
isotropic Gaussian kernel truncated at 5b with bandwidth b = c h^{1/2} n^{-1/4}.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core_types import SnapshotBatch

CONSTANT_GRID = (0.25, 0.5, 1.0, 2.0, 4.0, 8.0)


def bucket_count(n: int, h: float, c: float) -> int:
    return int(np.clip(np.ceil(c * (n / h**2) ** 0.25), 2, 200))


@dataclass
class BucketGrid:
    """Per-cell means of y1 and the label product on a K x K grid."""

    k: int
    cell_means_y1: np.ndarray
    cell_means_prod: np.ndarray
    cell_counts: np.ndarray
    global_mean_y1: float
    global_mean_prod: float

    def _cell(self, m, v):
        i = np.minimum((np.asarray(m, dtype=float) * self.k).astype(int), self.k - 1)
        j = np.minimum((np.asarray(v, dtype=float) * 4.0 * self.k).astype(int), self.k - 1)
        return np.clip(i, 0, self.k - 1), np.clip(j, 0, self.k - 1)

    def predict(self, m, v, target: str) -> np.ndarray:
        i, j = self._cell(np.atleast_1d(m), np.atleast_1d(v))
        means = self.cell_means_y1 if target == "first" else self.cell_means_prod
        fallback = self.global_mean_y1 if target == "first" else self.global_mean_prod
        out = means[i, j]
        empty = self.cell_counts[i, j] == 0
        out = np.where(empty, fallback, out)
        return out


def fit_buckets(batch: SnapshotBatch, h: float, c: float) -> BucketGrid:
    if len(batch) == 0:
        raise ValueError("cannot fit on an empty batch")
    k = bucket_count(len(batch), h, c)
    i = np.clip(np.minimum((batch.m * k).astype(int), k - 1), 0, k - 1)
    j = np.clip(np.minimum((batch.v * 4.0 * k).astype(int), k - 1), 0, k - 1)
    flat = i * k + j
    counts = np.bincount(flat, minlength=k * k).reshape(k, k)
    s1 = np.bincount(flat, weights=batch.y1, minlength=k * k).reshape(k, k)
    s2 = np.bincount(flat, weights=batch.product, minlength=k * k).reshape(k, k)
    with np.errstate(invalid="ignore"):
        m1 = np.where(counts > 0, s1 / np.maximum(counts, 1), 0.0)
        m2 = np.where(counts > 0, s2 / np.maximum(counts, 1), 0.0)
    return BucketGrid(
        k, m1, m2, counts,
        float(np.mean(batch.y1)), float(np.mean(batch.product)),
    )


@dataclass
class NwRegressor:
    """Gaussian-kernel regressor over stored rescaled points."""

    bandwidth: float
    x: np.ndarray  # (n, 2): (m, 4*sigma2)
    y1: np.ndarray
    prod: np.ndarray

    @property
    def truncation(self) -> float:
        return 5.0 * self.bandwidth

    def predict(self, m, v, target: str) -> np.ndarray:
        p1, p2 = self.predict_both(m, v)
        return p1 if target == "first" else p2

    def predict_both(self, m, v) -> tuple[np.ndarray, np.ndarray]:
        """Both regressions in one pass over the pairwise distances."""
        if len(self.x) == 0:
            raise ValueError("empty regressor")
        q = np.column_stack([np.atleast_1d(np.asarray(m, float)),
                             4.0 * np.atleast_1d(np.asarray(v, float))])
        out1 = np.empty(len(q))
        out2 = np.empty(len(q))
        # chunked all-pairs distances; n <= 5e4 at desk scale
        chunk = max(1, int(2e7) // max(len(self.x), 1))
        for a in range(0, len(q), chunk):
            d2 = ((q[a:a + chunk, None, :] - self.x[None, :, :]) ** 2).sum(-1)
            w = np.exp(-0.5 * d2 / self.bandwidth**2)
            w[d2 > self.truncation**2] = 0.0
            tot = w.sum(axis=1)
            safe = np.maximum(tot, 1e-300)
            b1 = np.where(tot > 0, w @ self.y1 / safe, 0.0)
            b2 = np.where(tot > 0, w @ self.prod / safe, 0.0)
            # no neighbour inside the truncation radius: fall back to nearest point
            miss = tot == 0
            if np.any(miss):
                near = np.argmin(d2[miss], axis=1)
                b1[miss] = self.y1[near]
                b2[miss] = self.prod[near]
            out1[a:a + chunk] = b1
            out2[a:a + chunk] = b2
        return out1, out2


def fit_nw(batch: SnapshotBatch, h: float, c: float) -> NwRegressor:
    if len(batch) == 0:
        raise ValueError("cannot fit on an empty batch")
    b = c * h**0.5 * len(batch) ** -0.25
    return NwRegressor(
        b,
        np.column_stack([batch.m, 4.0 * batch.v]),
        batch.y1.astype(float),
        batch.product.astype(float),
    )


def _heldout_loss(predict, hyper: SnapshotBatch) -> float:
    p1 = predict(hyper.m, hyper.v, "first")
    p2 = predict(hyper.m, hyper.v, "second")
    return float(np.mean((hyper.y1 - p1) ** 2) + np.mean((hyper.product - p2) ** 2))


def _nw_losses_shared(train: SnapshotBatch, hyper: SnapshotBatch, h: float,
                      grid: tuple[float, ...]) -> list[float]:
    """Held-out losses for every bandwidth constant in one distance pass."""
    x = np.column_stack([train.m, 4.0 * train.v])
    q = np.column_stack([hyper.m, 4.0 * hyper.v])
    y1 = train.y1.astype(float)
    pr = train.product.astype(float)
    bands = [c * h**0.5 * len(train) ** -0.25 for c in grid]
    sq = np.zeros(len(grid))
    chunk = max(1, int(2e7) // max(len(x), 1))
    for a in range(0, len(q), chunk):
        d2 = ((q[a:a + chunk, None, :] - x[None, :, :]) ** 2).sum(-1)
        near = np.argmin(d2, axis=1)
        for k, b in enumerate(bands):
            w = np.exp(-0.5 * d2 / b**2)
            w[d2 > (5.0 * b) ** 2] = 0.0
            tot = w.sum(axis=1)
            safe = np.maximum(tot, 1e-300)
            p1 = np.where(tot > 0, w @ y1 / safe, y1[near])
            p2 = np.where(tot > 0, w @ pr / safe, pr[near])
            sq[k] += np.sum((hyper.y1[a:a + chunk] - p1) ** 2)
            sq[k] += np.sum((hyper.product[a:a + chunk] - p2) ** 2)
    return list(sq / len(hyper))


def tune_constant(
    train: SnapshotBatch,
    hyper: SnapshotBatch,
    method: str,
    h: float,
    grid: tuple[float, ...] = CONSTANT_GRID,
) -> float:
    """Held-out selection of the baseline constant, summed over both
    regressions.  For buckets a boundary optimum extends the grid dyadically
    once in that direction; ties break toward the smaller constant."""
    if len(train) == 0 or len(hyper) == 0:
        raise ValueError("both batches must be non-empty")
    if method not in ("buckets", "nw"):
        raise ValueError(f"unknown method {method!r}")

    def loss_of(c):
        fitted = fit_buckets(train, h, c) if method == "buckets" else fit_nw(train, h, c)
        return _heldout_loss(fitted.predict, hyper)

    grid = tuple(sorted(grid))
    if method == "nw":
        losses = _nw_losses_shared(train, hyper, h, grid)
    else:
        losses = [loss_of(c) for c in grid]
    best_i = int(np.argmin(losses))
    if method == "buckets" and best_i in (0, len(grid) - 1):
        extra = grid[0] / 2 if best_i == 0 else grid[-1] * 2
        grid = tuple(sorted(grid + (extra,)))
        losses = [loss_of(c) for c in grid]
        best_i = int(np.argmin(losses))
    return grid[best_i]
