#!/usr/bin/env python3
"""The three cutoff strategies on one ranked score list.

Scores: 0.85 0.82 0.80 0.78 | 0.60 0.58 0.57 | 0.40
The consecutive differences are 0.03 0.02 0.02 0.18 0.02 0.01 0.17: the
largest drop (0.18) sits after the fourth item, and the last drop above a
third of it (0.17) sits after the seventh.
"""

from reqimpact.baselines import SimilarityRanking, cutoff_t1, cutoff_t2, cutoff_t3

scores = [0.85, 0.82, 0.80, 0.78, 0.60, 0.58, 0.57, 0.40]
ranking = SimilarityRanking(
    entries=tuple((f"R{i + 1}", s) for i, s in enumerate(scores))
)

for name, kept in [
    ("t1 (score > 0.5)", cutoff_t1(ranking, 0.5)),
    ("t2 (last significant drop)", cutoff_t2(ranking)),
    ("t3 (largest drop)", cutoff_t3(ranking)),
]:
    ordered = [rid for rid in ranking.ids() if rid in kept]
    last_score = dict(ranking.entries)[ordered[-1]] if ordered else None
    print(f"{name}: keeps {len(ordered)} -> {' '.join(ordered)}"
          + (f" (last kept score {last_score})" if ordered else ""))
