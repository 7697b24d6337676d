#!/usr/bin/env python3
"""Score a prediction set, then ask which prompt details drive F2.

The second half fabricates per-prompt F2 scores where detail 6 helps and
detail 3 hurts, and recovers exactly that pattern from the fitted trees.
"""

from reqimpact.ablation import fit_gbdt, importance_report, render_importance_report, rows_from_prompt_scores
from reqimpact.metrics import ConfusionCounts, build_report, render_report
from reqimpact.prompts import enumerate_prompts

counts = [
    ConfusionCounts("C1", tp=4, fp=1, fn=0),
    ConfusionCounts("C2", tp=5, fp=2, fn=0),
    ConfusionCounts("C3", tp=3, fp=0, fn=0),
    ConfusionCounts("C4", tp=4, fp=6, fn=2),
    ConfusionCounts("C5", tp=3, fp=3, fn=0),
]
print(render_report(build_report(counts, n_req=72), "markdown"))

scores = {
    spec.prompt_id: 0.55 + 0.15 * (6 in spec.details) - 0.12 * (3 in spec.details)
    for spec in enumerate_prompts()
}
rows = rows_from_prompt_scores(scores)
model = fit_gbdt(rows, n_estimators=40, learning_rate=0.1, max_depth=3, seed=42)
print("prompt-detail importance (S sums to 1, E is the inclusion effect):")
print(render_importance_report(importance_report(rows, model), "markdown"))
