#!/usr/bin/env python3
"""Regenerate the committed fixtures.

Builds the synthetic 72-requirement corpus and the demo replay store plus
its expected run artifacts. Everything here is deterministic, so re-running
the script reproduces the committed bytes.
"""

from __future__ import annotations

import json
import shutil
import sys
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(REPO / "src"))

from reqimpact import corpus, entailment, pipeline, prompts  # noqa: E402
from reqimpact.llm import ChatResponse, ReplayStore  # noqa: E402

FIXTURES = REPO / "fixtures"

VERBS = [
    "provide", "store", "display", "notify users about", "filter", "export",
    "synchronize", "validate", "archive", "recommend", "localize", "throttle",
]
OBJECTS = [
    "points of interest", "service subscriptions", "user context profiles",
    "trigger definitions", "map overlays", "billing records",
    "notification digests", "session histories", "device capabilities",
    "content channels", "privacy preferences", "usage statistics",
]
CONTEXTS = [
    "mobile clients", "third-party providers", "roaming users",
    "the operator portal", "location-aware services", "offline operation",
]


def build_platform_corpus() -> dict:
    requirements = []
    for i in range(72):
        verb = VERBS[i % len(VERBS)]
        obj = OBJECTS[(i // len(VERBS)) % len(OBJECTS)]
        ctx = CONTEXTS[i % len(CONTEXTS)]
        requirements.append(
            {
                "id": f"R{i + 1}",
                "text": f"The platform shall {verb} {obj} for {ctx} (capability {i + 1}).",
            }
        )
    rationales = [
        {
            "id": "C1",
            "text": "Drop the stored service subscription profiles; subscriptions move to the operator portal.",
            "category": "Deletion",
        },
        {
            "id": "C2",
            "text": "Add push delivery for notification digests so mobile clients no longer poll.",
            "category": "Addition",
        },
        {
            "id": "C3",
            "text": "Switch the map overlay provider to the new cartography service.",
            "category": "Modification",
        },
        {
            "id": "C4",
            "text": "User context profiles must be kept on the device instead of in the platform store.",
            "category": "Modification",
        },
        {
            "id": "C5",
            "text": "Billing records move to the shared finance system.",
            "category": "Modification",
        },
    ]
    gold = [
        {"rationale_id": "C1", "impacted_ids": [f"R{i}" for i in range(1, 6)]},
        {"rationale_id": "C2", "impacted_ids": [f"R{i}" for i in range(6, 11)]},
        {"rationale_id": "C3", "impacted_ids": [f"R{i}" for i in range(11, 16)] + ["R3"]},
        {"rationale_id": "C4", "impacted_ids": [f"R{i}" for i in range(16, 20)]},
        {"rationale_id": "C5", "impacted_ids": ["R20", "R21", "R22", "R1"]},
    ]
    return {
        "name": "PlatformDemo",
        "requirements": requirements,
        "change_rationales": rationales,
        "gold": gold,
    }


INITIAL_RESPONSE = """Looking at the change, these requirements are affected.
impacted ReqID: R2,justification: badge authentication is replaced by mobile credential verification
impacted ReqID: R3,justification: remote lock and unlock must integrate with the identity provider flow
impacted ReqID: R5,justification: the directory sync feeds the identity provider with employee records
"""

REFINEMENT_RESPONSE = """impacted ReqID: R1,justification: event logging must capture mobile credential reads
impacted ReqID: R6,justification: controllers buffer credential events and need the new verification path
"""

RANKING_RESPONSE = """Considering the justifications, the strongest links come first.
Sorted_List: R2, R5, R3, R6, R1
"""


class ScriptedBackend:
    """Maps the three demo prompts onto canned responses."""

    def send(self, request):
        if "Sorted_List" in request.prompt:
            return ChatResponse(text=RANKING_RESPONSE)
        if "\nR2:" in request.prompt:
            return ChatResponse(text=INITIAL_RESPONSE)
        return ChatResponse(text=REFINEMENT_RESPONSE)


def build_demo_store() -> None:
    demo = FIXTURES / "demo"
    store_dir = demo / "replay"
    expected_dir = demo / "expected"
    for stale in (store_dir, expected_dir):
        if stale.exists():
            shutil.rmtree(stale)
    dataset = corpus.load_dataset(demo / "dataset.json")
    catalog = prompts.load_catalog(domain=dataset.name)
    config = pipeline.PipelineConfig(prompt_id="P30")
    recorder = ReplayStore(store_dir, mode="record", live=ScriptedBackend())
    rationale = dataset.rationales[0]
    impact_set, trace = pipeline.run(
        rationale,
        dataset,
        config,
        catalog,
        recorder,
        entailment.LexicalEntailment(),
    )
    pipeline.write_run_artifacts(expected_dir, rationale.id, impact_set, trace)
    print(f"demo store: {len(list(store_dir.glob('*.txt')))} responses")
    print(f"demo impact set: {impact_set.ids()}")


def main() -> None:
    platform = build_platform_corpus()
    out = FIXTURES / "platform_corpus.json"
    out.write_text(
        json.dumps(platform, ensure_ascii=False, indent=2) + "\n", encoding="utf-8"
    )
    loaded = corpus.load_dataset(out)
    stats = corpus.gold_stats(loaded)
    print(
        f"platform corpus: {loaded.n_req} requirements, {loaded.n_rationales} "
        f"rationales, {stats.impacted_count} impacted"
    )
    build_demo_store()


if __name__ == "__main__":
    main()
