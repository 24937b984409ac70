"""Shared domain types for scores, snapshots and conditional-moment pairs.

A higher-order predictor emits a score ``(m, sigma2)``: a mean prediction in
[0, 1] and an epistemic-variance estimate in [0, 1/4].  All scores live in the
rectangle R = [0,1] x [0,1/4]; "feasible" scores additionally satisfy
``sigma2 <= m * (1 - m)``.  Perturbed scores may leave the feasible region but
never leave R.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

M_LO, M_HI = 0.0, 1.0
V_LO, V_HI = 0.0, 0.25

FEAS_TOL = 1e-12


class CorruptedFitError(ValueError):
    """Raised when a fitted quantity produces non-finite moment predictions."""


@dataclass(frozen=True)
class Score2:
    """A point (m, sigma2) in the score rectangle R = [0,1] x [0,1/4]."""

    m: float
    sigma2: float

    def __post_init__(self):
        if not (M_LO - FEAS_TOL <= self.m <= M_HI + FEAS_TOL):
            raise ValueError(f"m={self.m} outside [0, 1]")
        if not (V_LO - FEAS_TOL <= self.sigma2 <= V_HI + FEAS_TOL):
            raise ValueError(f"sigma2={self.sigma2} outside [0, 1/4]")


@dataclass(frozen=True)
class MomentPair:
    """Conditional first and second moments (eta1, eta2) of the label probability."""

    eta1: float
    eta2: float

    @property
    def admissible(self) -> bool:
        return (
            0.0 <= self.eta1 <= 1.0
            and self.eta1**2 - FEAS_TOL <= self.eta2 <= self.eta1 + FEAS_TOL
        )


@dataclass(frozen=True)
class Snapshot2:
    """One perturbed score with its pair of conditionally iid binary labels."""

    score: Score2
    y1: int
    y2: int

    def __post_init__(self):
        if self.y1 not in (0, 1) or self.y2 not in (0, 1):
            raise ValueError("labels must be 0/1 integers")

    @property
    def product(self) -> int:
        """The cached label product; 1 iff both labels are 1."""
        return self.y1 * self.y2


@dataclass
class SnapshotBatch:
    """An ordered batch of 2-snapshots, stored columnwise as numpy arrays.

    ``m`` and ``v`` are the perturbed score coordinates; ``m_raw``/``v_raw``
    optionally retain the unperturbed scores for oracle construction.
    """

    m: np.ndarray
    v: np.ndarray
    y1: np.ndarray
    y2: np.ndarray
    seed: int = 0
    m_raw: np.ndarray | None = None
    v_raw: np.ndarray | None = None
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        self.m = np.asarray(self.m, dtype=float)
        self.v = np.asarray(self.v, dtype=float)
        self.y1 = np.asarray(self.y1, dtype=np.int64)
        self.y2 = np.asarray(self.y2, dtype=np.int64)
        n = len(self.m)
        if not (len(self.v) == len(self.y1) == len(self.y2) == n):
            raise ValueError("batch columns have mismatched lengths")

    def __len__(self) -> int:
        return len(self.m)

    @property
    def product(self) -> np.ndarray:
        return self.y1 * self.y2

    @property
    def records(self) -> list[Snapshot2]:
        return [
            Snapshot2(Score2(float(m), float(v)), int(a), int(b))
            for m, v, a, b in zip(self.m, self.v, self.y1, self.y2)
        ]

    def prefix(self, n: int) -> "SnapshotBatch":
        """First-n view used for coupled per-seed n-curves."""
        return SnapshotBatch(
            self.m[:n], self.v[:n], self.y1[:n], self.y2[:n],
            seed=self.seed,
            m_raw=None if self.m_raw is None else self.m_raw[:n],
            v_raw=None if self.v_raw is None else self.v_raw[:n],
            extras={k: np.asarray(x)[:n] for k, x in self.extras.items()},
        )

    @classmethod
    def from_records(cls, records: list[Snapshot2], seed: int = 0) -> "SnapshotBatch":
        return cls(
            np.array([r.score.m for r in records]),
            np.array([r.score.sigma2 for r in records]),
            np.array([r.y1 for r in records]),
            np.array([r.y2 for r in records]),
            seed=seed,
        )


def is_feasible(s: Score2) -> bool:
    """True iff sigma2 <= m(1-m), up to an additive 1e-12 tolerance."""
    return s.sigma2 <= s.m * (1.0 - s.m) + FEAS_TOL


def project_moments(p: MomentPair) -> MomentPair:
    """Project a moment pair onto {eta1 in [0,1], eta1^2 <= eta2 <= eta1}.

    eta1 is clipped first; eta2 is then clipped to [eta1^2, eta1].  The result
    is admissible and the map is idempotent.
    """
    if not (np.isfinite(p.eta1) and np.isfinite(p.eta2)):
        raise CorruptedFitError(f"non-finite moment pair ({p.eta1}, {p.eta2})")
    e1 = min(max(p.eta1, 0.0), 1.0)
    e2 = min(max(p.eta2, e1 * e1), e1)
    return MomentPair(e1, e2)


def project_moments_arrays(eta1: np.ndarray, eta2: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized :func:`project_moments`."""
    eta1 = np.asarray(eta1, dtype=float)
    eta2 = np.asarray(eta2, dtype=float)
    if not (np.all(np.isfinite(eta1)) and np.all(np.isfinite(eta2))):
        raise CorruptedFitError("non-finite moment predictions")
    e1 = np.clip(eta1, 0.0, 1.0)
    e2 = np.clip(eta2, e1 * e1, e1)
    return e1, e2


def epistemic_variance(p: MomentPair) -> float:
    """max(0, eta2 - eta1^2): the epistemic variance of an admissible pair."""
    return max(0.0, p.eta2 - p.eta1**2)
