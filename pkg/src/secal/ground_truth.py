"""Ground-truth surfaces for the perturbed predictor.

A large QMC/MC sample of (raw score, p = f*) is bilinearly deposited as the
triple (1, p, p^2) on a tensor grid over the rectangle, then each axis is
convolved with the exact truncated-sech kernel matrix.  Ratios of the
smoothed fields give the gridded calibration functions eta1, eta2; the
smoothed unit field, trapezoid-normalized, is the perturbed-score density.
CE2^pert and conditional variances are read off these surfaces.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import qmc

from .sech_kernel import SechKernel

MASS_EPS = 1e-12

DEFAULT_GRID_M = 1025
DEFAULT_GRID_V = 257


def _trapz_weights(grid: np.ndarray) -> np.ndarray:
    d = np.diff(grid)
    w = np.zeros_like(grid)
    w[:-1] += d / 2
    w[1:] += d / 2
    return w


def _bilinear_deposit(grid_m, grid_v, m, v, fields):
    """Deposit each column of ``fields`` with bilinear weights; returns
    one (len(grid_m), len(grid_v)) array per field column."""
    nm, nv = len(grid_m), len(grid_v)
    dm = grid_m[1] - grid_m[0]
    dv = grid_v[1] - grid_v[0]
    fm = np.clip((m - grid_m[0]) / dm, 0, nm - 1 - 1e-12)
    fv = np.clip((v - grid_v[0]) / dv, 0, nv - 1 - 1e-12)
    i0 = fm.astype(int)
    j0 = fv.astype(int)
    am = fm - i0
    av = fv - j0
    out = [np.zeros(nm * nv) for _ in fields]
    for di, wi in ((0, 1 - am), (1, am)):
        for dj, wj in ((0, 1 - av), (1, av)):
            flat = (i0 + di) * nv + (j0 + dj)
            w = wi * wj
            for k, f in enumerate(fields):
                np.add.at(out[k], flat, w * f)
    return [o.reshape(nm, nv) for o in out]


@dataclass
class TruthSurface:
    """Gridded eta1, eta2 and perturbed-score density for one bandwidth."""

    grid_m: np.ndarray
    grid_v: np.ndarray
    mass: np.ndarray      # smoothed unit deposits, sums to n_points
    eta1: np.ndarray
    eta2: np.ndarray
    density: np.ndarray   # trapezoid-normalized over R
    valid: np.ndarray     # nodes with enough smoothed mass for the ratios
    h: float
    n_points: int = 0
    seed: int = 0

    def _interp(self, field: np.ndarray, m, v) -> np.ndarray:
        m = np.atleast_1d(np.asarray(m, dtype=float))
        v = np.atleast_1d(np.asarray(v, dtype=float))
        nm, nv = len(self.grid_m), len(self.grid_v)
        fm = np.clip((m - self.grid_m[0]) / (self.grid_m[1] - self.grid_m[0]), 0, nm - 1 - 1e-12)
        fv = np.clip((v - self.grid_v[0]) / (self.grid_v[1] - self.grid_v[0]), 0, nv - 1 - 1e-12)
        i0, j0 = fm.astype(int), fv.astype(int)
        am, av = fm - i0, fv - j0
        return (
            field[i0, j0] * (1 - am) * (1 - av)
            + field[i0 + 1, j0] * am * (1 - av)
            + field[i0, j0 + 1] * (1 - am) * av
            + field[i0 + 1, j0 + 1] * am * av
        )

    def eta1_at(self, m, v) -> np.ndarray:
        return self._interp(self.eta1, m, v)

    def eta2_at(self, m, v) -> np.ndarray:
        return self._interp(self.eta2, m, v)

    def conditional_variance_at(self, m, v) -> np.ndarray:
        """Bilinear interpolation of eta2 - eta1^2, clipped to [0, 1/4]."""
        out = self._interp(self.eta2 - self.eta1**2, m, v)
        return np.clip(out, 0.0, 0.25)

    def ce2_pert(self) -> float:
        """Trapezoid integral of the pointwise moment loss against density."""
        mm, vv = np.meshgrid(self.grid_m, self.grid_v, indexing="ij")
        loss = np.abs(self.eta1 - mm) + np.abs(self.eta2 - (mm**2 + vv))
        w2d = np.outer(_trapz_weights(self.grid_m), _trapz_weights(self.grid_v))
        return float(np.sum(loss * self.density * w2d))

    def save(self, path_prefix: str) -> None:
        """Bit-exact persistence: npz grid dump plus a JSON sidecar."""
        import hashlib
        import json
        import pathlib

        npz = pathlib.Path(f"{path_prefix}.npz")
        np.savez(npz, grid_m=self.grid_m, grid_v=self.grid_v, mass=self.mass,
                 eta1=self.eta1, eta2=self.eta2, density=self.density,
                 valid=self.valid)
        digest = hashlib.sha256(npz.read_bytes()).hexdigest()
        meta = {
            "h": self.h, "n_points": self.n_points, "seed": self.seed,
            "grid_shape": [len(self.grid_m), len(self.grid_v)],
            "checksum_sha256": digest,
        }
        pathlib.Path(f"{path_prefix}.json").write_text(json.dumps(meta, indent=2))

    @classmethod
    def load(cls, path_prefix: str) -> "TruthSurface":
        import hashlib
        import json
        import pathlib

        npz_path = pathlib.Path(f"{path_prefix}.npz")
        meta = json.loads(pathlib.Path(f"{path_prefix}.json").read_text())
        digest = hashlib.sha256(npz_path.read_bytes()).hexdigest()
        if digest != meta["checksum_sha256"]:
            raise ValueError("surface dump failed its checksum")
        z = np.load(npz_path)
        return cls(z["grid_m"], z["grid_v"], z["mass"], z["eta1"], z["eta2"],
                   z["density"], z["valid"], meta["h"], meta["n_points"], meta["seed"])


def build_surface(
    sampler,
    n_qmc: int,
    h: float,
    grid_m_size: int = DEFAULT_GRID_M,
    grid_v_size: int = DEFAULT_GRID_V,
    seed: int = 0,
) -> TruthSurface:
    """Build a TruthSurface from ``sampler(n, rng) -> (m_raw, v_raw, p)``.

    The sampler receives a scrambled-Sobol generator wrapped as uniforms via
    ``rng``; any sampler that yields feasible raw scores and p in [0, 1] works.
    """
    rng = np.random.default_rng(seed)
    m_raw, v_raw, p = sampler(n_qmc, rng)
    m_raw = np.asarray(m_raw, dtype=float)
    v_raw = np.asarray(v_raw, dtype=float)
    p = np.asarray(p, dtype=float)
    if len(m_raw) == 0:
        raise ValueError("sampler produced no points")

    grid_m = np.linspace(0.0, 1.0, grid_m_size)
    grid_v = np.linspace(0.0, 0.25, grid_v_size)
    ones = np.ones_like(p)
    mass0, p1, p2 = _bilinear_deposit(grid_m, grid_v, m_raw, v_raw, [ones, p, p * p])
    if mass0.sum() <= 0:
        raise ValueError("zero deposited mass")

    km = SechKernel(h, 0.0, 1.0).kernel_matrix(grid_m)
    kv = SechKernel(h, 0.0, 0.25).kernel_matrix(grid_v)
    smooth = lambda f: kv.smooth(km.smooth(f, axis=0), axis=1)
    mass = smooth(mass0)
    s1 = smooth(p1)
    s2 = smooth(p2)

    valid = mass > MASS_EPS
    fill = float(p.mean())
    eta1 = np.where(valid, s1 / np.maximum(mass, MASS_EPS), fill)
    eta2 = np.where(valid, s2 / np.maximum(mass, MASS_EPS), fill * fill)
    w2d = np.outer(_trapz_weights(grid_m), _trapz_weights(grid_v))
    dens = np.where(valid, mass, 0.0)
    dens = dens / np.sum(dens * w2d)
    return TruthSurface(grid_m, grid_v, mass, eta1, eta2, dens, valid, h,
                        n_points=len(p), seed=seed)


def sobol_uniforms(n: int, dim: int, seed: int) -> np.ndarray:
    """Scrambled base-2 Sobol points in (0,1)^dim (n rounded up to 2^k)."""
    eng = qmc.Sobol(d=dim, scramble=True, seed=seed)
    k = int(np.ceil(np.log2(max(n, 2))))
    u = eng.random_base2(k)[:n]
    return np.clip(u, 1e-12, 1 - 1e-12)


def constant_predictor_mc(
    h: float,
    p_values,
    n_mc: int,
    seed: int = 0,
    center=(1.0, 0.0),
):
    """Direct MC of phi(p) + psi(p) for a constant predictor at ``center``.

    phi(p) = E|p - m~| and psi(p) = E|p^2 - (m~^2 + v~)| under the product
    sech perturbation of the constant score.  Returns per-p (value, stderr)
    using common random numbers across the p grid.
    """
    rng = np.random.default_rng(seed)
    km = SechKernel(h, 0.0, 1.0)
    kv = SechKernel(h, 0.0, 0.25)
    u1 = rng.random(n_mc).clip(1e-12, 1 - 1e-12)
    u2 = rng.random(n_mc).clip(1e-12, 1 - 1e-12)
    mt = km.sample(np.full(n_mc, float(center[0])), u1)
    vt = kv.sample(np.full(n_mc, float(center[1])), u2)
    w = mt**2 + vt
    out = []
    for p in np.atleast_1d(p_values):
        vals = np.abs(p - mt) + np.abs(p * p - w)
        out.append((float(vals.mean()), float(vals.std(ddof=1) / np.sqrt(n_mc))))
    return out


def lower_bound_gap(h: float, epsilon: float, n_mc: int, seed: int = 0):
    """Paired-MC estimate of CE2^pert(P0) - CE2^pert(P1) for the two-point
    family with p0 = 1/16, p1 = 1/16 + epsilon at the boundary constant
    predictor (1, 0).  Returns (gap, stderr)."""
    if not 0 < epsilon <= 1 / 16:
        raise ValueError("epsilon must lie in (0, 1/16]")
    p0, p1 = 1 / 16, 1 / 16 + epsilon
    rng = np.random.default_rng(seed)
    km = SechKernel(h, 0.0, 1.0)
    kv = SechKernel(h, 0.0, 0.25)
    u1 = rng.random(n_mc).clip(1e-12, 1 - 1e-12)
    u2 = rng.random(n_mc).clip(1e-12, 1 - 1e-12)
    mt = km.sample(np.full(n_mc, 1.0), u1)
    vt = kv.sample(np.full(n_mc, 0.0), u2)
    w = mt**2 + vt
    diff = (np.abs(p0 - mt) + np.abs(p0**2 - w)) - (np.abs(p1 - mt) + np.abs(p1**2 - w))
    return float(diff.mean()), float(diff.std(ddof=1) / np.sqrt(n_mc))
