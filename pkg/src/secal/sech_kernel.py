"""Truncated sech perturbation kernel.

The kernel density at center ``s`` on the truncation interval [lo, hi] is

    k_h(t | s) = sech((t - s) / h) / Z(s, h),   t in [lo, hi],

with normalizer Z(s, h) = integral of sech((u - s)/h) over [lo, hi].  Because
the antiderivative of sech is the gudermannian G(x) = arctan(sinh x), the
normalizer, CDF and inverse-CDF sampler are all closed form.  Truncation is
handled exactly by working in G-coordinates (no rejection).

Randomness never enters here: sampling consumes externally supplied uniforms
so that experiments are replayable from (seed, u).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core_types import Score2


def antiderivative(x):
    """Gudermannian G(x) = arctan(sinh x): odd, increasing, |G| < pi/2.

    Evaluated as sign(x) * (pi/2 - 2 atan(exp(-|x|))), which never overflows.
    """
    x = np.asarray(x, dtype=float)
    g = np.pi / 2 - 2.0 * np.arctan(np.exp(-np.abs(x)))
    out = np.sign(x) * g
    return out if out.ndim else float(out)


def antiderivative_inv(y):
    """Inverse gudermannian: G^{-1}(y) = arcsinh(tan y) for |y| < pi/2."""
    y = np.asarray(y, dtype=float)
    out = np.arcsinh(np.tan(y))
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class SechKernel:
    """Truncated sech kernel with bandwidth ``h`` on [lo, hi]."""

    h: float
    lo: float
    hi: float

    def __post_init__(self):
        if self.h <= 0:
            raise ValueError(f"bandwidth must be positive, got h={self.h}")
        if not self.hi > self.lo:
            raise ValueError(f"need hi > lo, got [{self.lo}, {self.hi}]")

    def _check_center(self, s):
        s = np.asarray(s, dtype=float)
        if np.any(s < self.lo) or np.any(s > self.hi):
            raise ValueError(f"center outside [{self.lo}, {self.hi}]")
        return s

    def normalizer(self, s):
        """Z(s, h) = h * (G((hi-s)/h) - G((lo-s)/h)) > 0."""
        s = self._check_center(s)
        z = self.h * (
            antiderivative((self.hi - s) / self.h)
            - antiderivative((self.lo - s) / self.h)
        )
        return z if np.ndim(z) else float(z)

    def density(self, s, t):
        """k_h(t | s) for t in [lo, hi]."""
        s = self._check_center(s)
        t = np.asarray(t, dtype=float)
        return (1.0 / np.cosh((t - s) / self.h)) / self.normalizer(s)

    def cdf(self, s, t):
        """P(T <= t) for T ~ k_h(. | s); monotone with cdf(lo)=0, cdf(hi)=1."""
        s = self._check_center(s)
        t = np.asarray(t, dtype=float)
        if np.any(t < self.lo - 1e-12) or np.any(t > self.hi + 1e-12):
            raise ValueError(f"argument outside [{self.lo}, {self.hi}]")
        g_lo = antiderivative((self.lo - s) / self.h)
        g_hi = antiderivative((self.hi - s) / self.h)
        g_t = antiderivative((t - s) / self.h)
        out = (g_t - g_lo) / (g_hi - g_lo)
        return out if np.ndim(out) else float(out)

    def sample(self, s, u):
        """Closed-form inverse-CDF sample; strictly increasing in u in (0, 1)."""
        s = self._check_center(s)
        u = np.asarray(u, dtype=float)
        if np.any(u <= 0.0) or np.any(u >= 1.0):
            raise ValueError("uniform draws must lie strictly inside (0, 1)")
        g_lo = antiderivative((self.lo - s) / self.h)
        g_hi = antiderivative((self.hi - s) / self.h)
        t = s + self.h * antiderivative_inv(g_lo + u * (g_hi - g_lo))
        t = np.clip(t, self.lo, self.hi)
        return t if np.ndim(t) else float(t)

    def kernel_matrix(self, grid: np.ndarray) -> "KernelMatrix":
        """Row-stochastic discretization: row i holds trapezoidal quadrature
        weights of k_h(. | grid[i]) at the grid nodes, renormalized."""
        grid = np.asarray(grid, dtype=float)
        if grid.ndim != 1 or len(grid) < 2:
            raise ValueError("grid must contain at least 2 nodes")
        if np.any(np.diff(grid) <= 0):
            raise ValueError("grid must be strictly increasing")
        if abs(grid[0] - self.lo) > 1e-12 or abs(grid[-1] - self.hi) > 1e-12:
            raise ValueError("grid must span [lo, hi]")
        # trapezoid weights: (d_0/2, (d_0+d_1)/2, ..., d_{K-2}/2)
        d = np.diff(grid)
        quad = np.zeros_like(grid)
        quad[:-1] += d / 2
        quad[1:] += d / 2
        dens = 1.0 / np.cosh((grid[None, :] - grid[:, None]) / self.h)
        w = dens * quad[None, :]
        w /= w.sum(axis=1, keepdims=True)
        return KernelMatrix(grid=grid, weights=w)


@dataclass(frozen=True)
class KernelMatrix:
    """Discrete kernel: ``weights[i, j]`` approximates mass sent from a unit
    deposit at ``grid[i]`` to node ``grid[j]``.  Rows sum to one."""

    grid: np.ndarray
    weights: np.ndarray

    def smooth(self, mass: np.ndarray, axis: int = 0) -> np.ndarray:
        """Push gridded mass through the kernel along ``axis`` (conserves sums)."""
        mass = np.asarray(mass, dtype=float)
        return np.moveaxis(
            np.tensordot(self.weights, np.moveaxis(mass, axis, 0), axes=(0, 0)),
            0, axis,
        )


def perturb_score(km: SechKernel, kv: SechKernel, s: Score2, u1, u2) -> Score2:
    """Independent per-coordinate sech perturbation of a score in R."""
    return Score2(float(km.sample(s.m, u1)), float(kv.sample(s.sigma2, u2)))


def perturb_arrays(km: SechKernel, kv: SechKernel, m, v, u1, u2):
    """Vectorized product perturbation of raw score arrays."""
    return km.sample(m, u1), kv.sample(v, u2)


def default_kernels(h: float) -> tuple[SechKernel, SechKernel]:
    """The pair of kernels for the score rectangle: [0,1] and [0,1/4],
    both with the same literal bandwidth h."""
    return SechKernel(h, 0.0, 1.0), SechKernel(h, 0.0, 0.25)
