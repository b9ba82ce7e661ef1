"""Score cards, ranking and pairwise significance for a small cohort of teams."""

import numpy as np

from lotus_eval.metrics import MetricTriple
from lotus_eval.scoring import (TeamResult, build_scorecards, rank_teams, scale_to_score,
                                significance_matrix)

print("final-round dice scaled:", [round(s, 4) for s in scale_to_score([0.59, 0.54, 0.52])])

rng = np.random.default_rng(3)
teams = []
for name, quality in (("alpha", 0.62), ("bravo", 0.55), ("charlie", 0.50), ("delta", 0.58)):
    def triple(q):
        return MetricTriple(q, q / 3, q / 8)
    samples = np.clip(rng.normal(quality, 0.1, 10), 0, 1)
    teams.append(TeamResult(name, triple(quality + 0.02), triple(quality - 0.05), triple(quality),
                            report_score=float(rng.integers(5, 10)), dice_samples=tuple(samples)))

cards = build_scorecards(teams)
sig = significance_matrix({t.team_id: t.dice_samples for t in teams})
board = rank_teams(cards, sig)
print(board.table())

print("\npairwise rank-sum p-values (exact for 10 samples per team):")
ids = sig.team_ids
print(" " * 8 + "".join(f"{t:>9}" for t in ids))
for i, t in enumerate(ids):
    print(f"{t:<8}" + "".join(f"{p:>9.3f}" for p in sig.pvalues[i]))
