"""Friedman test, Nemenyi post-hoc comparisons and critical-difference data."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaincc
from scipy.stats import rankdata, studentized_range


class StatsError(ValueError):
    pass


# Upper quantiles of the studentized range with infinite denominator degrees
# of freedom, q_alpha(k, inf), k = 2..20. Generated with scipy's
# studentized_range.ppf and cross-checked against published Nemenyi tables
# (which list q / sqrt(2)).
Q_TABLE = {
    0.05: {2: 2.771808, 3: 3.314493, 4: 3.633160, 5: 3.857656, 6: 4.030092, 7: 4.169554,
           8: 4.286309, 9: 4.386509, 10: 4.474124, 11: 4.551864, 12: 4.621655, 13: 4.684920,
           14: 4.742732, 15: 4.795924, 16: 4.845154, 17: 4.890951, 18: 4.933745, 19: 4.973892,
           20: 5.011689},
    0.10: {2: 2.326174, 3: 2.902380, 4: 3.240446, 5: 3.478281, 6: 3.660721, 7: 3.808098,
           8: 3.931349, 9: 4.037023, 10: 4.129346, 11: 4.211200, 12: 4.284635, 13: 4.351158,
           14: 4.411913, 15: 4.467782, 16: 4.519464, 17: 4.567519, 18: 4.612403, 19: 4.654494,
           20: 4.694104},
}


@dataclass
class RankMatrix:
    """Scores [N blocks x k classifiers] and within-block average ranks (1 = best)."""

    scores: np.ndarray
    ranks: np.ndarray
    names: list[str]

    @property
    def mean_ranks(self) -> np.ndarray:
        return self.ranks.mean(axis=0)

    @property
    def shape(self) -> tuple[int, int]:
        return self.ranks.shape


def rank_matrix(scores, names=None, higher_is_better: bool = True) -> RankMatrix:
    S = np.asarray(scores, dtype=float)
    if S.ndim != 2:
        raise StatsError(f"scores must be [blocks x classifiers], got shape {S.shape}")
    if not np.isfinite(S).all():
        raise StatsError("scores must be finite")
    R = rankdata(-S if higher_is_better else S, axis=1)
    names = list(names) if names is not None else [f"c{j}" for j in range(S.shape[1])]
    if len(names) != S.shape[1]:
        raise StatsError("one name per classifier is required")
    return RankMatrix(S, R, names)


def _as_ranks(data) -> RankMatrix:
    return data if isinstance(data, RankMatrix) else rank_matrix(data)


def _check_friedman(rm: RankMatrix):
    N, k = rm.shape
    if N < 2 or k < 3:
        raise StatsError(f"Friedman needs N >= 2 blocks and k >= 3 classifiers, got N={N}, k={k}")


def chi2_sf(x: float, df: int) -> float:
    """Chi-square survival function via the regularized upper incomplete gamma."""
    return float(gammaincc(df / 2.0, x / 2.0)) if x > 0 else 1.0


def friedman_test(data) -> tuple[float, float]:
    """chi2_F = 12N / (k(k+1)) * (sum_j Rbar_j^2 - k(k+1)^2 / 4), df = k - 1."""
    rm = _as_ranks(data)
    _check_friedman(rm)
    N, k = rm.shape
    R = rm.mean_ranks
    stat = 12.0 * N / (k * (k + 1)) * (np.sum(R**2) - k * (k + 1) ** 2 / 4.0)
    stat = max(float(stat), 0.0)
    if stat < 1e-12:
        return 0.0, 1.0
    return stat, chi2_sf(stat, k - 1)


def rank_se(k: int, N: int) -> float:
    return math.sqrt(k * (k + 1) / (12.0 * N))


def critical_difference(k: int, N: int, alpha: float = 0.05) -> float:
    """CD = q_alpha(k, inf) * sqrt(k(k+1) / (12N)) with q from the embedded table."""
    if alpha not in Q_TABLE:
        raise StatsError(f"alpha must be one of {sorted(Q_TABLE)}")
    if k not in Q_TABLE[alpha]:
        raise StatsError(f"k must lie in 2..20, got {k}")
    if N < 1:
        raise StatsError("N must be positive")
    return Q_TABLE[alpha][k] * rank_se(k, N)


def nemenyi_posthoc(data) -> np.ndarray:
    """Pairwise p-values: |Rbar_i - Rbar_j| / sqrt(k(k+1)/(12N)) referred to the
    studentized range with k groups and infinite degrees of freedom."""
    rm = _as_ranks(data)
    _check_friedman(rm)
    N, k = rm.shape
    R = rm.mean_ranks
    q = np.abs(R[:, None] - R[None, :]) / rank_se(k, N)
    p = np.ones((k, k))
    iu = np.triu_indices(k, 1)
    vals = np.where(q[iu] < 1e-12, 1.0, studentized_range.sf(q[iu], k, np.inf))
    p[iu] = np.clip(vals, 0.0, 1.0)
    p.T[iu] = p[iu]
    return p


def significant_pairs(data, alpha: float = 0.05) -> np.ndarray:
    """Boolean matrix: rank gap >= CD (equivalently adjusted p <= alpha)."""
    rm = _as_ranks(data)
    N, k = rm.shape
    return gap_significant(rm.mean_ranks, critical_difference(k, N, alpha))


def gap_significant(mean_ranks, cd: float) -> np.ndarray:
    """Pairs whose mean-rank gap reaches the critical difference (>= convention)."""
    R = np.asarray(mean_ranks, dtype=float)
    gap = np.abs(R[:, None] - R[None, :])
    return gap >= cd * (1 - 1e-12)


@dataclass
class CDDiagram:
    names: list[str]
    mean_ranks: list[float]
    cd: float
    cliques: list[list[int]]  # indices into names, each sorted by rank

    def bars(self) -> list[tuple[float, float]]:
        return [(self.mean_ranks[c[0]], self.mean_ranks[c[-1]]) for c in self.cliques]


def cd_cliques(mean_ranks, cd: float) -> list[list[int]]:
    """Maximal runs of rank-sorted classifiers whose spread is < CD."""
    r = np.asarray(mean_ranks, dtype=float)
    order = list(np.argsort(r, kind="mergesort"))
    spans = []
    for i in range(len(order)):
        j = i
        while j + 1 < len(order) and r[order[j + 1]] - r[order[i]] < cd:
            j += 1
        spans.append((i, j))
    maximal = [s for s in spans if not any(o != s and o[0] <= s[0] and s[1] <= o[1] for o in spans)]
    return [[int(order[t]) for t in range(a, b + 1)] for a, b in sorted(set(maximal))]


def cd_diagram_data(mean_ranks, cd: float, names=None) -> CDDiagram:
    r = [float(x) for x in mean_ranks]
    names = list(names) if names is not None else [f"c{j}" for j in range(len(r))]
    return CDDiagram(names, r, float(cd), cd_cliques(r, cd))
