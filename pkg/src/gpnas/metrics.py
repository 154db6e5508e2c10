"""Ranking-quality statistics for proxy scores against ground truth.

All functions are pure and operate on a ScorePairSet. The rank
correlation uses exact pair enumeration with the tie-aware denominator
(ties in proxy and truth tracked separately, pairs tied in both counted
in neither), which doubles as its own oracle at desk scale.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from .errors import (
    DegenerateRanking,
    NonPositiveLatency,
    SingleClass,
    ZeroVariance,
)


@dataclass(frozen=True)
class ScorePairSet:
    """Aligned proxy/truth score vectors with architecture identifiers."""

    proxy: np.ndarray
    truth: np.ndarray
    ids: tuple = field(default=None)

    def __post_init__(self):
        proxy = np.asarray(self.proxy, dtype=np.float64)
        truth = np.asarray(self.truth, dtype=np.float64)
        if proxy.shape != truth.shape or proxy.ndim != 1:
            raise ValueError("proxy and truth must be equal-length vectors")
        if not (np.isfinite(proxy).all() and np.isfinite(truth).all()):
            raise ValueError("scores must be finite")
        ids = self.ids if self.ids is not None else tuple(range(len(proxy)))
        if len(ids) != len(proxy):
            raise ValueError("ids length mismatch")
        object.__setattr__(self, "proxy", proxy)
        object.__setattr__(self, "truth", truth)
        object.__setattr__(self, "ids", tuple(ids))

    def __len__(self) -> int:
        return len(self.proxy)


def pair_counts(pairs: ScorePairSet) -> tuple[int, int, int, int]:
    """Exact concordant/discordant/tied pair counts (P, Q, T, U).

    T counts pairs tied in proxy only, U pairs tied in truth only; pairs
    tied in both contribute to neither.
    """
    x, y = pairs.proxy, pairs.truth
    p = q = t = u = 0
    for i in range(len(x) - 1):
        dx = np.sign(x[i] - x[i + 1:])
        dy = np.sign(y[i] - y[i + 1:])
        prod = dx * dy
        p += int((prod > 0).sum())
        q += int((prod < 0).sum())
        t += int(((dx == 0) & (dy != 0)).sum())
        u += int(((dy == 0) & (dx != 0)).sum())
    return p, q, t, u


def kendall_tau(pairs: ScorePairSet) -> float:
    """Tie-aware rank correlation (P - Q) / sqrt((P+Q+U) (P+Q+T))."""
    if len(pairs) < 2:
        raise ValueError("need at least two pairs")
    p, q, t, u = pair_counts(pairs)
    denom_truth = p + q + u
    denom_proxy = p + q + t
    if denom_truth == 0 or denom_proxy == 0:
        raise DegenerateRanking("a denominator factor is zero (all ties)")
    return (p - q) / np.sqrt(denom_truth * denom_proxy)


def pearson(pairs: ScorePairSet) -> float:
    """Product-moment correlation coefficient."""
    x = pairs.proxy - pairs.proxy.mean()
    y = pairs.truth - pairs.truth.mean()
    sx, sy = float(x @ x), float(y @ y)
    if sx == 0.0 or sy == 0.0:
        raise ZeroVariance("correlation undefined for a constant vector")
    return float(x @ y / np.sqrt(sx * sy))


def pqetp(pairs: ScorePairSet, p_t: float) -> float:
    """AUROC of the proxy for the event truth > p_t (proxy ties count 1/2)."""
    positive = pairs.truth > p_t
    n_pos = int(positive.sum())
    n_neg = len(pairs) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise SingleClass(f"threshold {p_t} leaves a single class")
    ranks = rankdata(pairs.proxy)  # average ranks implement the 1/2 tie rule
    return float((ranks[positive].sum() - n_pos * (n_pos + 1) / 2.0)
                 / (n_pos * n_neg))


def top_k_indices(pairs: ScorePairSet, k: int) -> list[int]:
    """Indices of the k best proxy scores; proxy ties break on lowest id."""
    if k > len(pairs):
        raise ValueError("k exceeds the number of pairs")
    order = sorted(range(len(pairs)),
                   key=lambda i: (-pairs.proxy[i], pairs.ids[i]))
    return order[:k]


def discovered_performance(pairs: ScorePairSet, k: int) -> float:
    """Best truth score among the top-k architectures ranked by proxy."""
    return float(pairs.truth[top_k_indices(pairs, k)].max())


def mnas_reward(accuracy: float, latency: float, target_latency: float = 75.0) -> float:
    """Latency-penalized accuracy a * (l_T / l)^0.07."""
    if latency <= 0:
        raise NonPositiveLatency(f"latency={latency}")
    if not 0.0 <= accuracy <= 1.0:
        raise ValueError("accuracy must lie in [0, 1]")
    return accuracy * (target_latency / latency) ** 0.07
