"""Team score cards, leaderboard ranking and pairwise significance tests.

Each of the nine (branch x metric) columns is rescaled across teams onto
[5, 10], best team 10, worst 5.  A card's total adds a human-judged report
score in [0, 10], so totals never exceed 100.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np
from scipy import stats

from .metrics import MetricTriple

__all__ = [
    "BRANCHES",
    "METRICS",
    "EXACT_LIMIT",
    "TeamResult",
    "ScoreCard",
    "LeaderBoard",
    "SignificanceMatrix",
    "scale_to_score",
    "build_scorecard",
    "build_scorecards",
    "rank_teams",
    "wilcoxon_rank_sum",
    "significance_matrix",
]

BRANCHES = ("validation", "test_all", "test_tumor")
METRICS = ("dice", "msd_inverse", "hd95_inverse")
EXACT_LIMIT = 10


@dataclass(frozen=True)
class TeamResult:
    team_id: str
    validation: MetricTriple
    test_all: MetricTriple
    test_tumor: MetricTriple
    report_score: float = 0.0
    dice_samples: tuple[float, ...] = ()

    def __post_init__(self):
        if not 0.0 <= self.report_score <= 10.0:
            raise ValueError(f"report score must lie in [0, 10], got {self.report_score}")
        object.__setattr__(self, "dice_samples", tuple(float(v) for v in self.dice_samples))

    def column(self, branch: str, metric: str) -> float:
        return getattr(getattr(self, branch), metric)


@dataclass(frozen=True)
class ScoreCard:
    team_id: str
    scores: Mapping[tuple[str, str], float]
    report_score: float

    @property
    def total(self) -> float:
        return math.fsum(self.scores[(b, m)] for b in BRANCHES for m in METRICS) + self.report_score

    def branch_total(self, branch: str) -> float:
        return math.fsum(self.scores[(branch, m)] for m in METRICS)

    def as_dict(self) -> dict:
        return {
            "team_id": self.team_id,
            "scores": {b: {m: self.scores[(b, m)] for m in METRICS} for b in BRANCHES},
            "report_score": self.report_score,
            "total": self.total,
        }

    @classmethod
    def from_dict(cls, d) -> "ScoreCard":
        scores = {(b, m): float(d["scores"][b][m]) for b in BRANCHES for m in METRICS}
        return cls(d["team_id"], scores, float(d["report_score"]))


@dataclass(frozen=True)
class SignificanceMatrix:
    team_ids: tuple[str, ...]
    pvalues: np.ndarray
    reject: np.ndarray
    alpha: float = 0.05

    def as_dict(self) -> dict:
        return {
            "team_ids": list(self.team_ids),
            "alpha": self.alpha,
            "pvalues": self.pvalues.tolist(),
            "reject": self.reject.tolist(),
        }


@dataclass(frozen=True)
class LeaderBoard:
    # (rank, team_id, total), best first
    entries: tuple[tuple[int, str, float], ...]
    significance: SignificanceMatrix | None = field(default=None)

    def rank_of(self, team_id: str) -> int:
        for rank, tid, _ in self.entries:
            if tid == team_id:
                return rank
        raise KeyError(team_id)

    def as_dict(self) -> dict:
        return {
            "entries": [{"rank": r, "team_id": t, "total": s} for r, t, s in self.entries],
            "significance": None if self.significance is None else self.significance.as_dict(),
        }

    def table(self) -> str:
        width = max([len("team")] + [len(t) for _, t, _ in self.entries])
        lines = [f"{'rank':>4}  {'team':<{width}}  {'total':>8}"]
        lines += [f"{r:>4}  {t:<{width}}  {s:>8.3f}" for r, t, s in self.entries]
        return "\n".join(lines)


def scale_to_score(values: Sequence[float], higher_is_better: bool = True,
                   method: str = "linear") -> list[float]:
    """Map metric values onto [5, 10] (best 10, worst 5).

    ``linear`` interpolates on the value itself; ``rank`` interpolates on
    average ranks.  A degenerate range gives every team 10.
    """
    vals = np.asarray(values, dtype=np.float64)
    if vals.size == 0:
        raise ValueError("need at least one value to score")
    if not higher_is_better:
        vals = -vals
    if method == "rank":
        vals = stats.rankdata(vals)
    elif method != "linear":
        raise ValueError(f"unknown scaling method {method!r}")
    best, worst = vals.max(), vals.min()
    if best == worst:
        return [10.0] * len(vals)
    return [5.0 + 5.0 * float((v - worst) / (best - worst)) for v in vals]


def build_scorecards(results: Sequence[TeamResult], method: str = "linear") -> list[ScoreCard]:
    """Score every team against the whole cohort, one column at a time."""
    if not results:
        raise ValueError("need at least one team")
    ids = [r.team_id for r in results]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate team ids in cohort")
    columns = {
        (b, m): scale_to_score([r.column(b, m) for r in results], True, method)
        for b in BRANCHES for m in METRICS
    }
    return [
        ScoreCard(r.team_id, {key: col[i] for key, col in columns.items()}, r.report_score)
        for i, r in enumerate(results)
    ]


def build_scorecard(result: TeamResult, context: Sequence[TeamResult], method: str = "linear") -> ScoreCard:
    for card in build_scorecards(context, method):
        if card.team_id == result.team_id:
            return card
    raise KeyError(f"team {result.team_id!r} is not part of the scoring context")


def rank_teams(cards: Sequence[ScoreCard], significance: SignificanceMatrix | None = None) -> LeaderBoard:
    """Order by total, descending.  Equal totals share the better rank."""
    if not cards:
        raise ValueError("need at least one score card")
    ordered = sorted(cards, key=lambda c: (-c.total, c.team_id))
    entries = []
    for pos, card in enumerate(ordered):
        if entries and card.total == entries[-1][2]:
            rank = entries[-1][0]
        else:
            rank = pos + 1
        entries.append((rank, card.team_id, card.total))
    return LeaderBoard(tuple(entries), significance)


def _subset_sum_counts(weights: Sequence[int], k: int) -> dict[int, int]:
    """Number of k-element subsets of ``weights`` hitting each sum."""
    table: list[dict[int, int]] = [dict() for _ in range(k + 1)]
    table[0][0] = 1
    for w in weights:
        for size in range(min(k, len(weights)), 0, -1):
            prev = table[size - 1]
            cur = table[size]
            for s, n in prev.items():
                cur[s + w] = cur.get(s + w, 0) + n
    return table[k]


def wilcoxon_rank_sum(sample_a: Sequence[float], sample_b: Sequence[float], mode: str = "exact") -> float:
    """Two-sided p-value of the rank-sum test (midranks for ties).

    ``exact`` counts every assignment of the pooled ranks to sample A (at
    most ten observations per sample).  ``normal-approx`` uses the tie- and
    continuity-corrected normal approximation.  ``auto`` picks exact when
    the samples are small enough.
    """
    a = np.asarray(sample_a, dtype=np.float64)
    b = np.asarray(sample_b, dtype=np.float64)
    if a.size == 0 or b.size == 0:
        raise ValueError("both samples must be non-empty")
    n1, n2 = a.size, b.size
    if mode == "auto":
        mode = "exact" if max(n1, n2) <= EXACT_LIMIT else "normal-approx"
    ranks = stats.rankdata(np.concatenate([a, b]))
    n = n1 + n2

    if mode == "exact":
        if max(n1, n2) > EXACT_LIMIT:
            raise ValueError(f"exact mode supports at most {EXACT_LIMIT} observations per sample")
        # doubled midranks are integers, so the tail count is exact
        doubled = [int(round(2 * r)) for r in ranks]
        observed = sum(doubled[:n1])
        expected = n1 * (n + 1)
        dev = abs(observed - expected)
        counts = _subset_sum_counts(doubled, n1)
        extreme = sum(c for s, c in counts.items() if abs(s - expected) >= dev)
        return float(Fraction(extreme, math.comb(n, n1)))

    if mode != "normal-approx":
        raise ValueError(f"unknown mode {mode!r}")
    w = float(ranks[:n1].sum())
    mean = n1 * (n + 1) / 2.0
    _, tie_counts = np.unique(ranks, return_counts=True)
    tie_term = float(((tie_counts ** 3) - tie_counts).sum()) / (n * (n - 1)) if n > 1 else 0.0
    var = n1 * n2 / 12.0 * ((n + 1) - tie_term)
    if var <= 0:
        return 1.0
    z = max(abs(w - mean) - 0.5, 0.0) / math.sqrt(var)
    return min(1.0, 2.0 * float(stats.norm.sf(z)))


def significance_matrix(samples: Mapping[str, Sequence[float]], alpha: float = 0.05,
                        mode: str = "auto") -> SignificanceMatrix:
    """Pairwise rank-sum p-values; ``reject`` marks ``p < alpha``."""
    ids = tuple(samples)
    if len(ids) < 2:
        raise ValueError("need at least two teams")
    k = len(ids)
    p = np.ones((k, k))
    for i in range(k):
        for j in range(i + 1, k):
            p[i, j] = p[j, i] = wilcoxon_rank_sum(samples[ids[i]], samples[ids[j]], mode)
    return SignificanceMatrix(ids, p, p < alpha, alpha)
