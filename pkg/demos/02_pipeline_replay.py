#!/usr/bin/env python3
"""Run the full pipeline on the demo fixture from its committed replay store.

No network, no model: every chat response is served from
fixtures/demo/replay by request digest, so this run is reproducible
byte-for-byte.
"""

from pathlib import Path

from reqimpact.corpus import load_dataset
from reqimpact.entailment import LexicalEntailment
from reqimpact.llm import ReplayStore
from reqimpact.pipeline import PipelineConfig, run
from reqimpact.prompts import load_catalog

fixtures = Path(__file__).resolve().parent.parent / "fixtures" / "demo"
dataset = load_dataset(fixtures / "dataset.json")
rationale = dataset.rationales[0]
print(f"dataset {dataset.name}: {dataset.n_req} requirements")
print(f"rationale {rationale.id}: {rationale.text}\n")

impact_set, trace = run(
    rationale,
    dataset,
    PipelineConfig(prompt_id="P30"),
    load_catalog(domain=dataset.name),
    ReplayStore(fixtures / "replay", mode="strict-replay"),
    LexicalEntailment(),
)

for stage in trace.stages:
    print(f"[{stage.stage}] response {len(stage.response)} chars, "
          f"{len(stage.warnings)} warning(s)")
print(f"entailment labels: {trace.labels}\n")

print("final impact set (ranked):")
for i, cand in enumerate(impact_set, start=1):
    print(f"  {i}. {cand.req_id} ({cand.origin}): {cand.justification}")
