"""Search-space reduction and the hybrid linear metric.

Two ways to spend a cheap kernel-based score: discard all but the
top-p fraction of a pool before running a more expensive proxy, or fit a
three-parameter linear model blending shortened-training accuracy with
the kernel score to predict a longer-budget accuracy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from .errors import MissingScores, RankDeficient, Unfitted
from .metrics import ScorePairSet, discovered_performance


@dataclass(frozen=True)
class PoolEntry:
    arch_id: str
    nngp_score: float | None = None
    short_train_score: float | None = None
    truth_score: float | None = None
    provenance: dict = field(default_factory=dict, compare=False)


@dataclass(frozen=True)
class SearchPool:
    entries: tuple[PoolEntry, ...]

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        ids = [e.arch_id for e in self.entries]
        if len(set(ids)) != len(ids):
            raise ValueError("arch ids must be unique")
        for e in self.entries:
            for score in (e.nngp_score, e.short_train_score, e.truth_score):
                if score is not None and not math.isfinite(score):
                    raise ValueError(f"{e.arch_id}: non-finite score")

    def __len__(self) -> int:
        return len(self.entries)

    def scores(self, which: str) -> np.ndarray:
        vals = [getattr(e, which) for e in self.entries]
        if any(v is None for v in vals):
            raise MissingScores(f"{which} missing for some entries")
        return np.asarray(vals, dtype=np.float64)


def reduce_search_space(pool: SearchPool, keep_fraction: float) -> SearchPool:
    """Retain the ceil(p * M) entries with the highest kernel score.

    Score ties break on the lowest arch id; all other entry fields come
    through untouched.
    """
    if not 0.0 < keep_fraction <= 1.0:
        raise ValueError("keep_fraction must lie in (0, 1]")
    scores = pool.scores("nngp_score")
    keep = math.ceil(keep_fraction * len(pool))
    order = sorted(range(len(pool)),
                   key=lambda i: (-scores[i], pool.entries[i].arch_id))
    kept = sorted(order[:keep])
    return SearchPool(tuple(pool.entries[i] for i in kept))


def screening_log(pool: SearchPool, keep_fraction: float) -> list[tuple[str, int, bool]]:
    """(arch id, rank, kept) triples describing one reduction decision."""
    scores = pool.scores("nngp_score")
    keep = math.ceil(keep_fraction * len(pool))
    order = sorted(range(len(pool)),
                   key=lambda i: (-scores[i], pool.entries[i].arch_id))
    return [(pool.entries[i].arch_id, rank, rank < keep)
            for rank, i in enumerate(order)]


@dataclass(frozen=True)
class HybridModel:
    """target ~ w_train * short_train + w_nngp * nngp + bias."""

    w_train: float = 0.0
    w_nngp: float = 0.0
    bias: float = 0.0
    stderr: tuple[float, float, float] = (0.0, 0.0, 0.0)
    fitted: bool = False


def fit_hybrid(pool: SearchPool, target: np.ndarray) -> HybridModel:
    """Ordinary least squares of target on [short_train, nngp, 1] via QR.

    QR keeps the solve unconditionally stable; the normal-equations path
    is reserved for verification. Raises RankDeficient on collinear
    regressors (detected, never silently resolved).
    """
    target = np.asarray(target, dtype=np.float64)
    if len(target) != len(pool) or len(pool) < 3:
        raise ValueError("need a target value for each of >= 3 entries")
    x = np.column_stack([pool.scores("short_train_score"),
                         pool.scores("nngp_score"),
                         np.ones(len(pool))])
    q, r = np.linalg.qr(x)
    diag = np.abs(np.diag(r))
    if diag.min() <= max(x.shape) * np.finfo(float).eps * diag.max():
        raise RankDeficient("design matrix is rank deficient")
    beta = solve_triangular(r, q.T @ target)
    resid = target - x @ beta
    dof = max(len(pool) - 3, 1)
    r_inv = solve_triangular(r, np.eye(3))
    cov = (resid @ resid / dof) * (r_inv @ r_inv.T)
    stderr = tuple(float(s) for s in np.sqrt(np.diag(cov)))
    return HybridModel(float(beta[0]), float(beta[1]), float(beta[2]),
                       stderr, fitted=True)


def hybrid_score(model: HybridModel, entry: PoolEntry) -> float:
    if not model.fitted:
        raise Unfitted("fit the hybrid model before scoring")
    if entry.short_train_score is None or entry.nngp_score is None:
        raise MissingScores(f"{entry.arch_id} lacks a required score")
    return (model.w_train * entry.short_train_score
            + model.w_nngp * entry.nngp_score + model.bias)


def _metric_values(entries, metric) -> np.ndarray:
    if callable(metric):
        return np.asarray([metric(e) for e in entries], dtype=np.float64)
    vals = [getattr(e, metric) for e in entries]
    if any(v is None for v in vals):
        raise MissingScores(f"{metric} missing for some entries")
    return np.asarray(vals, dtype=np.float64)


def simulate_discovery(population: SearchPool, subset_size: int,
                       n_subsets: int, metric, k: int,
                       seed: int = 0) -> tuple[float, float]:
    """Mean and standard error of discovered performance over random subsets.

    Each subset is drawn uniformly without replacement; within it the
    entries are ranked by `metric` (an entry attribute name or callable)
    and the best truth score among the top k is recorded.
    """
    if subset_size > len(population):
        raise ValueError("subset_size exceeds the population")
    rng = np.random.default_rng(seed)
    values = []
    for _ in range(n_subsets):
        idx = rng.choice(len(population), size=subset_size, replace=False)
        entries = [population.entries[i] for i in idx]
        pairs = ScorePairSet(_metric_values(entries, metric),
                             _metric_values(entries, "truth_score"),
                             ids=tuple(e.arch_id for e in entries))
        values.append(discovered_performance(pairs, k))
    values = np.asarray(values)
    stderr = float(values.std(ddof=1) / np.sqrt(n_subsets)) if n_subsets > 1 else 0.0
    return float(values.mean()), stderr
