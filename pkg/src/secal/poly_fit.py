"""Tensor-Chebyshev ridge regression of the calibration functions.

Features are products T_i(2m - 1) * T_j(8 sigma2 - 1) for 0 <= i <= degree_m,
0 <= j <= degree_v, stored row-major over (i, j) with i the m-axis index.
Fits are linear ridge solutions; predictions are clipped to [0, 1] at
evaluation time.  The analytic degree schedule l = ceil(2 ln n / ln theta)
with theta = h*pi + sqrt(h^2 pi^2 + 1) comes from the Bernstein-ellipse
parameter of the sech-perturbed calibration functions.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import chebyshev as C
from scipy.linalg import cho_factor, cho_solve

from .core_types import SnapshotBatch

RIDGE_FLOOR = 1e-12  # times tr(G)/d, always added

# per-h degree caps; other bandwidths extrapolate linearly in 1/h
DEFAULT_CAPS = {1 / 16: 44, 1 / 64: 88}


def theta_of(h: float) -> float:
    """Bernstein ellipse parameter theta = h*pi + sqrt(h^2 pi^2 + 1) > 1."""
    if h <= 0:
        raise ValueError(f"bandwidth must be positive, got {h}")
    return h * math.pi + math.sqrt(h * h * math.pi**2 + 1.0)


def approx_error_bound(h: float, l: int) -> float:
    """Sup-norm bound B_theta * theta^{-l} with B_theta = 2/(theta-1)."""
    th = theta_of(h)
    return 2.0 / (th - 1.0) * th ** (-l)


@dataclass(frozen=True)
class DegreeSchedule:
    h: float
    n: int
    theta: float
    l_nominal: int
    l_cap: int
    l_final: int
    candidates: tuple[int, ...]


def degree_cap(h: float, caps: dict[float, int] | None = None) -> int:
    """Cap lookup with linear-in-1/h extrapolation between the defaults."""
    caps = DEFAULT_CAPS if caps is None else caps
    for hc, cap in caps.items():
        if abs(hc - h) < 1e-12:
            return cap
    # fit cap = a + b/h through the two default anchors
    (h1, c1), (h2, c2) = sorted(DEFAULT_CAPS.items())
    b = (c1 - c2) / (1 / h1 - 1 / h2)
    a = c1 - b / h1
    return max(4, round(a + b / h))


def schedule(h: float, n: int, caps: dict[float, int] | None = None) -> DegreeSchedule:
    """Analytic degree plus the halving candidate list used by selection."""
    if n < 1:
        raise ValueError("need n >= 1")
    th = theta_of(h)
    l_nominal = 0 if n == 1 else math.ceil(2.0 * math.log(n) / math.log(th))
    cap = degree_cap(h, caps)
    l_final = min(l_nominal, cap)
    cands = []
    l = l_final
    while l >= 4:
        cands.append(l)
        l //= 2
    if 4 not in cands:
        cands.append(4)
    return DegreeSchedule(h, n, th, l_nominal, cap, max(l_final, 4), tuple(cands))


@dataclass(frozen=True)
class BasisSpec:
    """Tensor-Chebyshev basis of per-axis degrees (degree_m, degree_v) on R."""

    degree_m: int
    degree_v: int

    @property
    def n_features(self) -> int:
        return (self.degree_m + 1) * (self.degree_v + 1)

    def features(self, m, v) -> np.ndarray:
        """Feature matrix, rows over samples, columns row-major over (i, j)."""
        m = np.atleast_1d(np.asarray(m, dtype=float))
        v = np.atleast_1d(np.asarray(v, dtype=float))
        if np.any(m < -1e-9) or np.any(m > 1 + 1e-9) or np.any(v < -1e-9) or np.any(v > 0.25 + 1e-9):
            raise ValueError("scores outside the rectangle [0,1] x [0,1/4]")
        x = 2.0 * m - 1.0
        y = 8.0 * v - 1.0
        return C.chebvander2d(x, y, [self.degree_m, self.degree_v])


@dataclass
class PolyFit:
    """A fitted (unclipped-linear, clipped-at-eval) tensor polynomial."""

    basis: BasisSpec
    coeffs: np.ndarray
    ridge: float
    clip: tuple[float, float] = (0.0, 1.0)

    def predict_linear(self, m, v) -> np.ndarray:
        return self.basis.features(m, v) @ self.coeffs

    def predict(self, m, v) -> np.ndarray:
        return np.clip(self.predict_linear(m, v), *self.clip)

    def to_json(self) -> str:
        return json.dumps(
            {
                "degrees": [self.basis.degree_m, self.basis.degree_v],
                "domain": {"m": [0.0, 1.0], "sigma2": [0.0, 0.25]},
                "ridge": self.ridge,
                "coeffs": self.coeffs.tolist(),  # row-major over (i, j), i = m-axis
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "PolyFit":
        obj = json.loads(text)
        dm, dv = obj["degrees"]
        return cls(BasisSpec(dm, dv), np.asarray(obj["coeffs"], dtype=float), obj["ridge"])


def _solve_ridge(phi: np.ndarray, y: np.ndarray, lam: float) -> np.ndarray:
    n, d = phi.shape
    if d <= n:
        gram = phi.T @ phi
        gram[np.diag_indices(d)] += lam
        try:
            return cho_solve(cho_factor(gram), phi.T @ y)
        except np.linalg.LinAlgError as exc:  # pragma: no cover
            raise np.linalg.LinAlgError("ridge system singular despite floor") from exc
    # dual form: beta = phi^T (phi phi^T + lam I)^{-1} y, identical predictions
    k = phi @ phi.T
    k[np.diag_indices(n)] += lam
    return phi.T @ cho_solve(cho_factor(k), y)


def fit_ridge(
    basis: BasisSpec,
    batch: SnapshotBatch,
    target: str,
    ridge_mult: float = 0.0,
    phi: np.ndarray | None = None,
) -> PolyFit:
    """Ridge regression of y1 (``target='first'``) or y1*y2 (``'second'``).

    The penalty is lam = max(ridge_mult, 1e-12) * tr(G)/d; a numeric floor is
    always present.  ``phi`` lets callers reuse a precomputed feature matrix.
    """
    if len(batch) == 0:
        raise ValueError("cannot fit on an empty batch")
    if target == "first":
        y = batch.y1.astype(float)
    elif target == "second":
        y = batch.product.astype(float)
    else:
        raise ValueError(f"unknown target {target!r}")
    if phi is None:
        phi = basis.features(batch.m, batch.v)
    d = phi.shape[1]
    trace = float(np.sum(phi * phi))  # tr(phi^T phi)
    lam = max(ridge_mult, RIDGE_FLOOR) * trace / d
    beta = _solve_ridge(phi, y, lam)
    return PolyFit(basis, beta, lam)


DEFAULT_RIDGE_GRID = tuple(10.0**k for k in range(-6, 1))


def select_model(
    train: SnapshotBatch,
    hyper: SnapshotBatch | None,
    h: float,
    mode: str = "heldout",
    degree_candidates: tuple[int, ...] | None = None,
    ridge_candidates: tuple[float, ...] = DEFAULT_RIDGE_GRID,
    n_folds: int = 5,
) -> tuple[PolyFit, PolyFit]:
    """Model selection for the (eta1, eta2) fit pair.

    Both fits share one basis degree; the ridge multiplier is chosen per
    regression.  ``heldout`` scores candidates by squared error on the hyper
    split; ``cv`` by deterministic contiguous 5-fold CV on the train split.
    Ties break toward smaller degree, then smaller ridge.
    """
    if degree_candidates is None:
        degree_candidates = schedule(h, len(train)).candidates
    if not degree_candidates or not ridge_candidates:
        raise ValueError("empty candidate grid")
    if mode == "heldout":
        if hyper is None or len(hyper) == 0:
            raise ValueError("heldout mode requires a non-empty hyper batch")
    elif mode != "cv":
        raise ValueError(f"unknown mode {mode!r}")

    lmax = max(degree_candidates)
    big = BasisSpec(lmax, lmax)
    phi_tr = big.features(train.m, train.v)
    phi_hy = big.features(hyper.m, hyper.v) if mode == "heldout" else None
    y_tr = {"first": train.y1.astype(float), "second": train.product.astype(float)}
    if mode == "heldout":
        y_hy = {"first": hyper.y1.astype(float), "second": hyper.product.astype(float)}

    def cols(l):
        idx = np.arange((lmax + 1) ** 2).reshape(lmax + 1, lmax + 1)
        return idx[: l + 1, : l + 1].ravel()

    fold_id = np.arange(len(train)) % n_folds

    def solve(gram, rhs, rm, d):
        lam = max(rm, RIDGE_FLOOR) * np.trace(gram) / d
        g = gram.copy()
        g[np.diag_indices(d)] += lam
        return cho_solve(cho_factor(g), rhs)

    best = None  # (total_loss, degree, {target: ridge})
    for l in sorted(set(degree_candidates)):
        sel = cols(l)
        d = len(sel)
        ptr = phi_tr[:, sel]
        gram = ptr.T @ ptr  # shared across ridges, targets, and fold updates
        rhs = {t: ptr.T @ y_tr[t] for t in ("first", "second")}
        if mode == "cv":
            folds = []
            for f in range(n_folds):
                va = fold_id == f
                pva = ptr[va]
                folds.append((
                    pva,
                    gram - pva.T @ pva,
                    {t: rhs[t] - pva.T @ y_tr[t][va] for t in rhs},
                    {t: y_tr[t][va] for t in rhs},
                ))
        per_target = {}
        for target in ("first", "second"):
            best_t = None
            for rm in sorted(ridge_candidates):
                if mode == "heldout":
                    beta = solve(gram, rhs[target], rm, d)
                    pred = np.clip(phi_hy[:, sel] @ beta, 0.0, 1.0)
                    loss = float(np.mean((y_hy[target] - pred) ** 2))
                else:
                    losses = []
                    for pva, gf, rf, yf in folds:
                        beta = solve(gf, rf[target], rm, d)
                        pred = np.clip(pva @ beta, 0.0, 1.0)
                        losses.append(np.mean((yf[target] - pred) ** 2))
                    loss = float(np.mean(losses))
                if best_t is None or loss < best_t[0] - 1e-15:
                    best_t = (loss, rm)
            per_target[target] = best_t
        total = per_target["first"][0] + per_target["second"][0]
        if best is None or total < best[0] - 1e-15:
            best = (total, l, {t: per_target[t][1] for t in per_target})

    _, l, ridges = best
    sel = cols(l)
    basis = BasisSpec(l, l)
    fit1 = fit_ridge(basis, train, "first", ridges["first"], phi=phi_tr[:, sel])
    fit2 = fit_ridge(basis, train, "second", ridges["second"], phi=phi_tr[:, sel])
    return fit1, fit2
