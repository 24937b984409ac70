"""Three-atom Wasserstein reconciliation of the moment-based error.

An admissible moment pair (mu1, mu2) determines the law of the symmetrized
2-snapshot average on {0, 1/2, 1}.  With ground metric d(0,1/2) = d(1/2,1)
= 1, d(0,1) = 2, the optimal transport cost between two such laws has the
closed form |Delta_0| + |Delta_1| in terms of the atom-probability gaps,
and the moment deviations satisfy the two-sided comparison
delta1 + delta2 <= (3/2) W1 <= 3 (delta1 + delta2).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ATOL = 1e-12


@dataclass(frozen=True)
class SnapshotDist3:
    """Probabilities of the symmetrized snapshot values 0, 1/2, 1."""

    q0: float
    qhalf: float
    q1: float

    def __post_init__(self):
        probs = (self.q0, self.qhalf, self.q1)
        if min(probs) < -ATOL:
            raise ValueError(f"negative atom probability in {probs}")
        if abs(sum(probs) - 1.0) > ATOL:
            raise ValueError(f"atom probabilities sum to {sum(probs)}, not 1")

    def as_array(self) -> np.ndarray:
        return np.array([self.q0, self.qhalf, self.q1])


def snapshot_dist_from_moments(mu1: float, mu2: float) -> SnapshotDist3:
    """Law of the 2-snapshot average given E[theta] = mu1, E[theta^2] = mu2.

    p1 = mu2, p_half = 2 (mu1 - mu2), p0 = 1 - 2 mu1 + mu2; defined exactly
    when the moments are admissible (mu1^2 <= mu2 <= mu1 <= 1).
    """
    if not (0.0 - ATOL <= mu1 <= 1.0 + ATOL):
        raise ValueError(f"mu1={mu1} outside [0, 1]")
    if mu2 > mu1 + ATOL or mu2 < mu1 * mu1 - ATOL:
        raise ValueError(f"moments ({mu1}, {mu2}) not admissible")
    return SnapshotDist3(
        q0=max(0.0, 1.0 - 2.0 * mu1 + mu2),
        qhalf=max(0.0, 2.0 * (mu1 - mu2)),
        q1=max(0.0, mu2),
    )


def w1_threeatom(p: SnapshotDist3, q: SnapshotDist3) -> float:
    """Optimal transport cost on {0, 1/2, 1} with the path ground metric.

    Closed form |Delta_0| + |Delta_1| with Delta_j = p_j - q_j: mass
    imbalances at the endpoints each travel at least one half-step, and
    routing through the middle atom attains that bound.
    """
    return abs(p.q0 - q.q0) + abs(p.q1 - q.q1)


def w1_lp_reference(p: SnapshotDist3, q: SnapshotDist3) -> float:
    """Exact transport cost by brute-force vertex enumeration.

    The 3x3 transport polytope has 9 variables and 5 independent balance
    equations; every vertex is supported on at most 5 cells, so enumerating
    all C(9,5) support choices and solving the balance equations finds the
    optimum exactly.  Independent cross-check for w1_threeatom; not used on
    hot paths.
    """
    from itertools import combinations

    cost = np.array([[0.0, 1.0, 2.0], [1.0, 0.0, 1.0], [2.0, 1.0, 0.0]])
    pa, qa = p.as_array(), q.as_array()
    # balance rows: 3 row sums and first 2 column sums (last is redundant)
    a_full = np.zeros((5, 9))
    for i in range(3):
        a_full[i, 3 * i : 3 * i + 3] = 1.0
    for j in range(2):
        a_full[3 + j, j::3] = 1.0
    b = np.concatenate([pa, qa[:2]])
    best = np.inf
    for support in combinations(range(9), 5):
        a = a_full[:, support]
        try:
            x = np.linalg.solve(a, b)
        except np.linalg.LinAlgError:
            continue
        if np.min(x) < -1e-10:
            continue
        full = np.zeros(9)
        full[list(support)] = x
        if not np.allclose(a_full @ full, b, atol=1e-9):
            continue
        best = min(best, float(full @ cost.ravel()))
    if not np.isfinite(best):
        raise RuntimeError("no feasible transport vertex found")
    return best


def sandwich_check(mu1: float, mu2: float, m: float, v: float):
    """Moment deviations vs transport distance for one level set.

    Returns (delta1, delta2, w1, lower_ok, upper_ok) where the flags verify
    delta1 + delta2 <= (3/2) w1 <= 3 (delta1 + delta2) within 1e-12.
    """
    delta1 = abs(mu1 - m)
    delta2 = abs(mu2 - v)
    w1 = w1_threeatom(snapshot_dist_from_moments(mu1, mu2),
                      snapshot_dist_from_moments(m, v))
    lower_ok = delta1 + delta2 <= 1.5 * w1 + ATOL
    upper_ok = 1.5 * w1 <= 3.0 * (delta1 + delta2) + ATOL
    return delta1, delta2, w1, lower_ok, upper_ok
