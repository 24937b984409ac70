"""Crowdsourced audit pipeline: vote ingestion, cohorts, XOR scores, yield.

Binary one-vs-rest vote counts per task give an empirical positive rate
p_hat.  Two cohorts — aleatoric (p_hat near 1/2) and hidden-subtype (p_hat
extreme) — are balanced and assigned a provisional label; the fresh-worker
agreement probability theta is p_hat or 1 - p_hat accordingly.  Scores
(m, s) follow a cohort-aligned XOR pattern whose marginals are identical
across cohorts, so only a joint (2D) method can rank by disagreement risk
g(theta) = 2 theta (1 - theta).
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, replace

import numpy as np

from .core_types import project_moments_arrays

MIN_VOTES = 5

DEFAULT_PARAMS = {
    "extreme_thr": 0.12,
    "ale_width": 0.22,
    "sigma_m": 0.06,
    "sigma_s": 0.08,
    "s_gap": 0.35,
}


@dataclass(frozen=True)
class VoteTable:
    """Per-task binary vote counts after the minimum-vote filter."""

    task_id: tuple[str, ...]
    a: np.ndarray  # positive votes
    n: np.ndarray  # total votes

    def __post_init__(self):
        if np.any(self.a < 0) or np.any(self.a > self.n):
            raise ValueError("need 0 <= a <= n per task")
        if np.any(self.n < MIN_VOTES):
            raise ValueError(f"tasks with fewer than {MIN_VOTES} votes must be dropped")

    def __len__(self) -> int:
        return len(self.task_id)

    @property
    def p_hat(self) -> np.ndarray:
        return self.a / self.n


def ingest_votes(path: str, target_class: str, min_votes: int = MIN_VOTES) -> VoteTable:
    """Read a (task_id, worker_id, response) CSV and binarise one-vs-rest.

    Tasks with fewer than ``min_votes`` responses are dropped.  Malformed
    rows raise with their row number; an empty result raises.
    """
    counts: dict[str, list[int]] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [c.strip() for c in header[:3]] != ["task_id", "worker_id", "response"]:
            raise ValueError(f"{path}: expected header task_id,worker_id,response")
        for lineno, row in enumerate(reader, start=2):
            if len(row) < 3 or not row[0]:
                raise ValueError(f"{path}: malformed row {lineno}: {row!r}")
            tally = counts.setdefault(row[0], [0, 0])
            tally[0] += int(row[2].strip() == target_class)
            tally[1] += 1
    kept = sorted(t for t, (_, n) in counts.items() if n >= min_votes)
    if not kept:
        raise ValueError(f"{path}: no task has >= {min_votes} votes")
    a = np.array([counts[t][0] for t in kept])
    n = np.array([counts[t][1] for t in kept])
    return VoteTable(tuple(kept), a, n)


def synthetic_votes(
    n_tasks: int = 1200,
    n_votes: int = 20,
    frac_aleatoric: float = 0.5,
    seed: int = 0,
) -> VoteTable:
    """Vote table with the same schema as the real data: a mix of tasks with
    agreement rates near 1/2 (aleatoric regime) and near 0 or 1 (hidden
    subtypes), each voted on by ``n_votes`` simulated workers."""
    rng = np.random.default_rng(seed)
    ale = rng.random(n_tasks) < frac_aleatoric
    p = np.where(
        ale,
        rng.uniform(0.35, 0.65, n_tasks),
        np.where(rng.random(n_tasks) < 0.5,
                 rng.uniform(0.01, 0.08, n_tasks),
                 rng.uniform(0.92, 0.99, n_tasks)),
    )
    a = rng.binomial(n_votes, p)
    ids = tuple(f"t{i:05d}" for i in range(n_tasks))
    return VoteTable(ids, a, np.full(n_tasks, n_votes))


@dataclass(frozen=True)
class AuditItem:
    """One cohort item with its theta, moment labels, and (later) scores."""

    task_id: str
    cohort: str  # "aleatoric" | "hidden"
    theta: float
    l1: float    # unbiased estimate of theta: agreements / n
    l2: float    # unbiased estimate of theta^2: all-pairs agreement rate
    m: float = float("nan")
    s: float = float("nan")


def build_cohorts(
    vt: VoteTable,
    ale_width: float = 0.22,
    extreme_thr: float = 0.12,
    seed: int = 0,
) -> list[AuditItem]:
    """Cohort assignment, balancing, provisional labels, and theta.

    Aleatoric: |p_hat - 1/2| <= ale_width, provisional label a fair coin.
    Hidden: p_hat <= extreme_thr or >= 1 - extreme_thr; half (chosen
    uniformly) take the empirical majority as provisional label, the other
    half its complement.  theta = p_hat if prov=1 else 1 - p_hat.  Moment
    labels come from agreement counts relative to the provisional label.
    """
    rng = np.random.default_rng(seed)
    p = vt.p_hat
    ale_idx = np.flatnonzero(np.abs(p - 0.5) <= ale_width)
    hid_idx = np.flatnonzero((p <= extreme_thr) | (p >= 1 - extreme_thr))
    if len(ale_idx) == 0 or len(hid_idx) == 0:
        raise ValueError("a cohort is empty; adjust thresholds")
    k = min(len(ale_idx), len(hid_idx))
    ale_idx = np.sort(rng.choice(ale_idx, k, replace=False))
    hid_idx = np.sort(rng.choice(hid_idx, k, replace=False))

    items: list[AuditItem] = []

    def add(i: int, cohort: str, prov: int) -> None:
        agree = vt.a[i] if prov == 1 else vt.n[i] - vt.a[i]
        n = vt.n[i]
        items.append(AuditItem(
            vt.task_id[i], cohort,
            theta=float(p[i] if prov == 1 else 1 - p[i]),
            l1=float(agree / n),
            l2=float(agree * (agree - 1) / (n * (n - 1))),
        ))

    for i in ale_idx:
        add(i, "aleatoric", int(rng.random() < 0.5))
    flip = np.zeros(k, dtype=bool)
    flip[rng.choice(k, k // 2, replace=False)] = True
    for j, i in enumerate(hid_idx):
        majority = int(p[i] >= 0.5)
        add(i, "hidden", 1 - majority if flip[j] else majority)
    return items


def xor_scores(
    items: list[AuditItem],
    s_gap: float = 0.35,
    sigma_m: float = 0.06,
    sigma_s: float = 0.08,
    seed: int = 0,
) -> list[AuditItem]:
    """Attach the XOR-mode scores: m encodes a fair coin b, s encodes
    (is_aleatoric == b), plus independent Gaussian noise, clipped to [0,1].
    Marginally m and s look identical across cohorts; jointly they reveal
    the cohort."""
    rng = np.random.default_rng(seed)
    lo, hi = 0.5 - s_gap / 2, 0.5 + s_gap / 2
    out = []
    for it in items:
        b = int(rng.random() < 0.5)
        is_ale = it.cohort == "aleatoric"
        m = hi if b else lo
        s = hi if (is_ale == bool(b)) else lo
        m = float(np.clip(m + sigma_m * rng.standard_normal(), 0.0, 1.0))
        s = float(np.clip(s + sigma_s * rng.standard_normal(), 0.0, 1.0))
        out.append(replace(it, m=m, s=s))
    return out


# -- calibrators and ranking scores -----------------------------------------


def _features_1d(m: np.ndarray) -> np.ndarray:
    return np.vander(m, 5, increasing=True)  # [1, m, ..., m^4]


def _features_2d(m: np.ndarray, s: np.ndarray) -> np.ndarray:
    """Total-degree-3 monomial basis in (m, s): 10 features."""
    cols = [m**i * s**j for i in range(4) for j in range(4 - i)]
    return np.column_stack(cols)


def _ridge(phi: np.ndarray, y: np.ndarray, lam: float) -> np.ndarray:
    gram = phi.T @ phi
    gram[np.diag_indices(len(gram))] += lam
    return np.linalg.solve(gram, phi.T @ y)


def method_scores(
    cal: list[AuditItem],
    ev: list[AuditItem],
    ridge: float = 1e-3,
) -> dict[str, np.ndarray]:
    """The eight ranking scores on the evaluation items.

    Calibrators regress the moment labels (l1 -> eta1, l2 -> eta2) on 1D and
    2D polynomial features of the scores; predictions are projected onto the
    admissible moment region before forming 2 eta1 - 2 eta2 (second-order)
    or 2 eta1 (1 - eta1) (first-order) disagreement scores.
    """
    mc = np.array([it.m for it in cal])
    sc = np.array([it.s for it in cal])
    l1 = np.array([it.l1 for it in cal])
    l2 = np.array([it.l2 for it in cal])
    me = np.array([it.m for it in ev])
    se = np.array([it.s for it in ev])

    def platt(phi_cal, phi_ev):
        b1 = _ridge(phi_cal, l1, ridge)
        b2 = _ridge(phi_cal, l2, ridge)
        return project_moments_arrays(phi_ev @ b1, phi_ev @ b2)

    e1_1d, e2_1d = platt(_features_1d(mc), _features_1d(me))
    e1_2d, e2_2d = platt(_features_2d(mc, sc), _features_2d(me, se))
    theta = np.array([it.theta for it in ev])
    return {
        "raw_m": 2 * me * (1 - me),
        "raw_s": se,
        "raw_s_flip": 1 - se,
        "first_1d": 2 * e1_1d * (1 - e1_1d),
        "second_1d": 2 * e1_1d - 2 * e2_1d,
        "first_2d": 2 * e1_2d * (1 - e1_2d),
        "second_2d": 2 * e1_2d - 2 * e2_2d,
        "oracle": 2 * theta * (1 - theta),
    }


def audit_yield(scores: np.ndarray, thetas: np.ndarray, budget: float) -> float:
    """100 x mean g(theta) over the top ceil(budget * n) items by score.

    Ties are broken by item position (stable sort), which the callers keep
    aligned with task id order for determinism.
    """
    scores = np.asarray(scores, dtype=float)
    thetas = np.asarray(thetas, dtype=float)
    if scores.shape != thetas.shape or scores.ndim != 1:
        raise ValueError("scores and thetas must be aligned 1D arrays")
    if not 0 < budget <= 1:
        raise ValueError("budget fraction must lie in (0, 1]")
    k = int(np.ceil(budget * len(scores)))
    top = np.argsort(-scores, kind="stable")[:k]
    g = 2 * thetas[top] * (1 - thetas[top])
    return float(100.0 * g.mean())
